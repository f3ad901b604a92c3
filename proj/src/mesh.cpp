#include "rt/mesh.hpp"

#include <string>

#include "rt/errors.hpp"

namespace rt {

Mesh1D build_mesh(const std::vector<MeshSegment>& segments) {
  if (segments.empty()) throw AssemblyError("mesh has no segments");
  int n = 0;
  for (size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    if (seg.length <= 0.0 || seg.n_cells <= 0 || seg.porosity <= 0.0 ||
        seg.diffusion < 0.0)
      throw AssemblyError("mesh segment " + std::to_string(s) +
                          " has non-positive length, cell count or porosity, "
                          "or negative diffusion");
    n += seg.n_cells;
  }

  Mesh1D m;
  m.h.resize(n);
  m.x_center.resize(n);
  m.phi.resize(n);
  m.D.resize(n);
  int i = 0;
  double x = 0.0;
  for (const auto& seg : segments) {
    const double dx = seg.length / seg.n_cells;
    for (int k = 0; k < seg.n_cells; ++k, ++i) {
      m.h(i) = dx;
      m.x_center(i) = x + (k + 0.5) * dx;
      m.phi(i) = seg.porosity;
      m.D(i) = seg.diffusion;
    }
    x += seg.length;
  }
  return m;
}

}  // namespace rt
