#include "lameeig/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "geometry_util.hpp"

namespace lameeig {

namespace {

struct FacetKeyHash {
  std::size_t operator()(const std::array<int, 3>& k) const noexcept {
    std::size_t h = static_cast<std::size_t>(k[0]);
    h = h * 1000003u ^ static_cast<std::size_t>(k[1] + 1);
    h = h * 1000003u ^ static_cast<std::size_t>(k[2] + 1);
    return h;
  }
};

CellVertices oriented_from(const std::vector<Point>& vertices, int dim, const CellVertices& ordered) {
  CellVertices c = ordered;
  if (detail::signed_simplex_volume(vertices, dim, c) < 0.0) {
    std::swap(c[dim - 1], c[dim]);
  }
  return c;
}

}  // namespace

Mesh::Mesh(int dim, std::vector<Point> vertices, std::vector<BisectionState> cells)
    : dim_(dim), vertices_(std::move(vertices)), bisection_(std::move(cells)) {
  if (dim_ != 2 && dim_ != 3) {
    throw std::invalid_argument("Mesh: dimension must be 2 or 3, got " + std::to_string(dim_));
  }
  cells_.reserve(bisection_.size());
  for (std::size_t c = 0; c < bisection_.size(); ++c) {
    const auto& b = bisection_[c];
    for (int i = 0; i <= dim_; ++i) {
      if (b.ordered[i] < 0 || b.ordered[i] >= num_vertices()) {
        throw std::out_of_range("Mesh: cell " + std::to_string(c) + " references a missing vertex");
      }
    }
    if (b.tag < 1 || b.tag > dim_) {
      throw std::invalid_argument("Mesh: bisection tag out of range in cell " + std::to_string(c));
    }
    if (dim_ == 2) {
      bisection_[c].ordered[3] = -1;
    }
    cells_.push_back(oriented_from(vertices_, dim_, b.ordered));
  }
  for (int c = 0; c < num_cells(); ++c) {
    const double vol = signed_volume(c);
    const double h = cell_diameter(c);
    if (!(vol > 1e-14 * std::pow(h, dim_))) {
      throw std::invalid_argument("Mesh: degenerate cell " + std::to_string(c));
    }
  }
  build_topology();
}

void Mesh::build_topology() {
  const int nv = dim_ + 1;
  std::unordered_map<std::array<int, 3>, int, FacetKeyHash> lookup;
  lookup.reserve(cells_.size() * nv);
  facets_.clear();
  cell_facets_.assign(cells_.size() * nv, -1);
  for (int c = 0; c < num_cells(); ++c) {
    for (int i = 0; i < nv; ++i) {
      std::array<int, 3> key{-1, -1, -1};
      int n = 0;
      for (int j = 0; j < nv; ++j) {
        if (j != i) key[n++] = cells_[c][j];
      }
      std::sort(key.begin(), key.begin() + dim_);
      auto [it, inserted] = lookup.try_emplace(key, static_cast<int>(facets_.size()));
      if (inserted) {
        Facet f;
        f.vertices = key;
        f.plus = c;
        f.local_in_plus = i;
        facets_.push_back(f);
      } else {
        Facet& f = facets_[it->second];
        if (f.minus != kBoundary) {
          throw std::invalid_argument("Mesh: facet shared by more than two cells (non-conforming)");
        }
        f.minus = c;
        f.local_in_minus = i;
      }
      cell_facets_[c * nv + i] = it->second;
    }
  }
}

std::array<int, 2> Mesh::refinement_edge(int c) const {
  const auto& b = bisection_[c];
  return {b.ordered[0], b.ordered[b.tag]};
}

double Mesh::signed_volume(int c) const { return detail::signed_simplex_volume(vertices_, dim_, cells_[c]); }

double Mesh::cell_volume(int c) const { return std::abs(signed_volume(c)); }

Point Mesh::cell_centroid(int c) const {
  Point p{0.0, 0.0, 0.0};
  for (int i = 0; i <= dim_; ++i) {
    for (int d = 0; d < 3; ++d) p[d] += vertices_[cells_[c][i]][d];
  }
  for (double& x : p) x /= (dim_ + 1);
  return p;
}

double Mesh::cell_diameter(int c) const {
  double h = 0.0;
  for (int i = 0; i <= dim_; ++i) {
    for (int j = i + 1; j <= dim_; ++j) {
      h = std::max(h, detail::distance(vertices_[cells_[c][i]], vertices_[cells_[c][j]]));
    }
  }
  return h;
}

double Mesh::facet_measure(int f) const {
  const auto& v = facets_[f].vertices;
  if (dim_ == 2) return detail::distance(vertices_[v[0]], vertices_[v[1]]);
  const Point n = detail::cross(detail::sub(vertices_[v[1]], vertices_[v[0]]),
                                detail::sub(vertices_[v[2]], vertices_[v[0]]));
  return 0.5 * detail::norm(n);
}

double Mesh::facet_diameter(int f) const {
  const auto& v = facets_[f].vertices;
  double h = 0.0;
  for (int i = 0; i < dim_; ++i) {
    for (int j = i + 1; j < dim_; ++j) {
      h = std::max(h, detail::distance(vertices_[v[i]], vertices_[v[j]]));
    }
  }
  return h;
}

double Mesh::inradius(int c) const {
  double area = 0.0;
  for (int i = 0; i <= dim_; ++i) area += facet_measure(cell_facet(c, i));
  return dim_ * cell_volume(c) / area;
}

Point Mesh::outward_normal(int f, int cell) const {
  const Facet& fc = facets_[f];
  int local = -1;
  if (fc.plus == cell) {
    local = fc.local_in_plus;
  } else if (fc.minus == cell) {
    local = fc.local_in_minus;
  } else {
    throw std::invalid_argument("outward_normal: cell is not adjacent to facet");
  }
  const auto& v = fc.vertices;
  Point n;
  if (dim_ == 2) {
    const Point t = detail::sub(vertices_[v[1]], vertices_[v[0]]);
    n = {t[1], -t[0], 0.0};
  } else {
    n = detail::cross(detail::sub(vertices_[v[1]], vertices_[v[0]]), detail::sub(vertices_[v[2]], vertices_[v[0]]));
  }
  const double len = detail::norm(n);
  for (double& x : n) x /= len;
  const Point& opposite = vertices_[cells_[cell][local]];
  if (detail::dot(n, detail::sub(opposite, vertices_[v[0]])) > 0.0) {
    for (double& x : n) x = -x;
  }
  return n;
}

double Mesh::total_volume() const {
  double v = 0.0;
  for (int c = 0; c < num_cells(); ++c) v += cell_volume(c);
  return v;
}

double Mesh::max_diameter() const {
  double h = 0.0;
  for (int c = 0; c < num_cells(); ++c) h = std::max(h, cell_diameter(c));
  return h;
}

double Mesh::max_shape_ratio() const {
  double r = 0.0;
  for (int c = 0; c < num_cells(); ++c) r = std::max(r, cell_diameter(c) / inradius(c));
  return r;
}

FacetGeometry facet_geometry(const Mesh& mesh) {
  FacetGeometry g;
  g.normals.resize(mesh.num_facets());
  g.facet_diameters.resize(mesh.num_facets());
  g.cell_diameters.resize(mesh.num_cells());
  for (int c = 0; c < mesh.num_cells(); ++c) {
    g.cell_diameters[c] = mesh.cell_diameter(c);
  }
  for (int f = 0; f < mesh.num_facets(); ++f) {
    const Facet& fc = mesh.facet(f);
    g.facet_diameters[f] = mesh.facet_diameter(f);
    g.normals[f][0] = mesh.outward_normal(f, fc.plus);
    if (!fc.on_boundary()) {
      const Point& n = g.normals[f][0];
      g.normals[f][1] = {-n[0], -n[1], -n[2]};
    } else {
      g.normals[f][1] = {0.0, 0.0, 0.0};
    }
  }
  return g;
}

// Geometry catalog -----------------------------------------------------------

namespace {

BisectionState longest_edge_state(const std::vector<Point>& vertices, int dim, const CellVertices& cell) {
  int best_i = 0;
  int best_j = 1;
  auto edge_less = [&](int i0, int j0, int i1, int j1) {
    const double l0 = detail::distance2(vertices[cell[i0]], vertices[cell[j0]]);
    const double l1 = detail::distance2(vertices[cell[i1]], vertices[cell[j1]]);
    if (l0 != l1) return l0 < l1;
    const auto k0 = std::minmax(cell[i0], cell[j0]);
    const auto k1 = std::minmax(cell[i1], cell[j1]);
    return k0 < k1;
  };
  for (int i = 0; i <= dim; ++i) {
    for (int j = i + 1; j <= dim; ++j) {
      if (edge_less(best_i, best_j, i, j)) {
        best_i = i;
        best_j = j;
      }
    }
  }
  BisectionState s;
  s.ordered = {-1, -1, -1, -1};
  s.ordered[0] = cell[best_i];
  s.ordered[dim] = cell[best_j];
  int pos = 1;
  for (int i = 0; i <= dim; ++i) {
    if (i != best_i && i != best_j) s.ordered[pos++] = cell[i];
  }
  s.tag = dim;
  return s;
}

}  // namespace

Mesh relabel_longest_edge(const Mesh& mesh) {
  std::vector<BisectionState> cells;
  cells.reserve(mesh.num_cells());
  for (int c = 0; c < mesh.num_cells(); ++c) {
    cells.push_back(longest_edge_state(mesh.vertices(), mesh.dim(), mesh.cell(c)));
  }
  return Mesh(mesh.dim(), mesh.vertices(), std::move(cells));
}

Mesh build_unit_square(int n) {
  if (n < 1) throw std::invalid_argument("build_unit_square: N must be >= 1");
  std::vector<Point> vertices;
  vertices.reserve(static_cast<std::size_t>(n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      vertices.push_back({static_cast<double>(i) / n, static_cast<double>(j) / n, 0.0});
    }
  }
  auto id = [n](int i, int j) { return j * (n + 1) + i; };
  std::vector<BisectionState> cells;
  cells.reserve(2 * static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int v00 = id(i, j), v10 = id(i + 1, j), v01 = id(i, j + 1), v11 = id(i + 1, j + 1);
      std::array<CellVertices, 2> tris;
      if ((i + j) % 2 == 0) {
        tris = {CellVertices{v00, v10, v11, -1}, CellVertices{v00, v11, v01, -1}};
      } else {
        tris = {CellVertices{v00, v10, v01, -1}, CellVertices{v10, v11, v01, -1}};
      }
      for (const auto& t : tris) cells.push_back(longest_edge_state(vertices, 2, t));
    }
  }
  return Mesh(2, std::move(vertices), std::move(cells));
}

Mesh build_square_with_hole(int density) {
  if (density < 1) throw std::invalid_argument("build_square_with_hole: density must be >= 1");
  const double lo = 129.0 / 400.0;
  const double hi = 271.0 / 400.0;
  const double s = std::sqrt(2.0) / 2.0;
  // Eight rays at multiples of 45 degrees; inner points on the hole, outer on the rotated square.
  const std::array<Point, 8> inner = {Point{hi, 0.5, 0}, Point{hi, hi, 0}, Point{0.5, hi, 0}, Point{lo, hi, 0},
                                      Point{lo, 0.5, 0}, Point{lo, lo, 0}, Point{0.5, lo, 0}, Point{hi, lo, 0}};
  const std::array<Point, 8> outer = {
      Point{0.5 + s, 0.5, 0},         Point{0.5 + s / 2, 0.5 + s / 2, 0}, Point{0.5, 0.5 + s, 0},
      Point{0.5 - s / 2, 0.5 + s / 2, 0}, Point{0.5 - s, 0.5, 0},         Point{0.5 - s / 2, 0.5 - s / 2, 0},
      Point{0.5, 0.5 - s, 0},         Point{0.5 + s / 2, 0.5 - s / 2, 0}};

  std::vector<Point> vertices;
  std::map<std::pair<long long, long long>, int> lookup;
  auto vertex_id = [&](const Point& p) {
    const auto key = std::make_pair(std::llround(p[0] * 1e9), std::llround(p[1] * 1e9));
    auto [it, inserted] = lookup.try_emplace(key, static_cast<int>(vertices.size()));
    if (inserted) vertices.push_back(p);
    return it->second;
  };

  const int m = density;
  std::vector<BisectionState> cells;
  for (int q = 0; q < 8; ++q) {
    const Point& i0 = inner[q];
    const Point& i1 = inner[(q + 1) % 8];
    const Point& o0 = outer[q];
    const Point& o1 = outer[(q + 1) % 8];
    auto at = [&](int a, int r) {
      const double sa = static_cast<double>(a) / m;
      const double tr = static_cast<double>(r) / m;
      Point p{0.0, 0.0, 0.0};
      for (int d = 0; d < 2; ++d) {
        const double in = (1.0 - sa) * i0[d] + sa * i1[d];
        const double out = (1.0 - sa) * o0[d] + sa * o1[d];
        p[d] = (1.0 - tr) * in + tr * out;
      }
      return p;
    };
    std::vector<int> ids((m + 1) * (m + 1));
    for (int r = 0; r <= m; ++r) {
      for (int a = 0; a <= m; ++a) ids[r * (m + 1) + a] = vertex_id(at(a, r));
    }
    for (int r = 0; r < m; ++r) {
      for (int a = 0; a < m; ++a) {
        const int v00 = ids[r * (m + 1) + a];
        const int v10 = ids[r * (m + 1) + a + 1];
        const int v01 = ids[(r + 1) * (m + 1) + a];
        const int v11 = ids[(r + 1) * (m + 1) + a + 1];
        std::array<CellVertices, 2> tris;
        if (detail::distance2(vertices[v00], vertices[v11]) <= detail::distance2(vertices[v10], vertices[v01])) {
          tris = {CellVertices{v00, v10, v11, -1}, CellVertices{v00, v11, v01, -1}};
        } else {
          tris = {CellVertices{v00, v10, v01, -1}, CellVertices{v10, v11, v01, -1}};
        }
        for (const auto& t : tris) cells.push_back(longest_edge_state(vertices, 2, t));
      }
    }
  }
  return Mesh(2, std::move(vertices), std::move(cells));
}

Mesh build_lshape_3d(int density) {
  if (density < 1) throw std::invalid_argument("build_lshape_3d: density must be >= 1");
  const int n = 2 * density;  // lattice cells per unit length
  const double hs = 1.0 / n;
  std::vector<Point> vertices;
  std::map<std::array<int, 3>, int> lookup;
  auto vertex_id = [&](const std::array<int, 3>& ijk) {
    auto [it, inserted] = lookup.try_emplace(ijk, static_cast<int>(vertices.size()));
    if (inserted) vertices.push_back({-0.5 + ijk[0] * hs, ijk[1] * hs, -0.5 + ijk[2] * hs});
    return it->second;
  };
  static constexpr std::array<std::array<int, 3>, 6> kPermutations = {
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  std::vector<BisectionState> cells;
  for (int l = 0; l < n; ++l) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        // Skip the removed quadrant x > 0, z > 0.
        if (i >= density && l >= density) continue;
        for (const auto& perm : kPermutations) {
          std::array<int, 3> p{i, j, l};
          BisectionState s;
          s.ordered[0] = vertex_id(p);
          for (int step = 0; step < 3; ++step) {
            ++p[perm[step]];
            s.ordered[step + 1] = vertex_id(p);
          }
          s.tag = 3;
          cells.push_back(s);
        }
      }
    }
  }
  return Mesh(3, std::move(vertices), std::move(cells));
}

}  // namespace lameeig
