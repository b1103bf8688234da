#pragma once

#include <cmath>
#include <vector>

#include "lameeig/mesh.hpp"

namespace lameeig::detail {

inline Point sub(const Point& a, const Point& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

inline double dot(const Point& a, const Point& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

inline Point cross(const Point& a, const Point& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

inline double norm(const Point& a) { return std::sqrt(dot(a, a)); }

inline double distance2(const Point& a, const Point& b) {
  const Point d = sub(a, b);
  return dot(d, d);
}

inline double distance(const Point& a, const Point& b) { return std::sqrt(distance2(a, b)); }

inline double signed_simplex_volume(const std::vector<Point>& v, int dim, const CellVertices& c) {
  const Point e1 = sub(v[c[1]], v[c[0]]);
  const Point e2 = sub(v[c[2]], v[c[0]]);
  if (dim == 2) return 0.5 * (e1[0] * e2[1] - e1[1] * e2[0]);
  const Point e3 = sub(v[c[3]], v[c[0]]);
  return dot(cross(e1, e2), e3) / 6.0;
}

}  // namespace lameeig::detail
