#pragma once

#include <vector>

#include "rt/types.hpp"

namespace rt {

// One uniform stretch of the 1D column.
struct MeshSegment {
  double length = 0.0;
  int n_cells = 0;
  double porosity = 0.0;
  double diffusion = 0.0;  // diffusion/dispersion coefficient, per bulk area
};

// Cell-centered finite volume mesh with per-cell material properties.
struct Mesh1D {
  Vec h;         // cell widths
  Vec x_center;  // cell centers, starting at x = 0
  Vec phi;       // porosity
  Vec D;         // diffusion coefficient

  int n_cells() const { return static_cast<int>(h.size()); }
  double length() const { return h.sum(); }
};

// Concatenate segments left to right.  Throws AssemblyError on non-positive
// lengths/cell counts/porosities or negative diffusion.
Mesh1D build_mesh(const std::vector<MeshSegment>& segments);

}  // namespace rt
