#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "lameeig/mesh.hpp"
#include "test_support.hpp"

using namespace lameeig;

namespace {

int interior_facets(const Mesh& m) {
  int n = 0;
  for (const auto& f : m.facets()) n += f.on_boundary() ? 0 : 1;
  return n;
}

// The eight boundary segments of the square with a hole.
std::vector<std::pair<Point, Point>> hole_domain_segments() {
  const double lo = 129.0 / 400.0, hi = 271.0 / 400.0, s = std::sqrt(2.0) / 2.0;
  const Point e{0.5 + s, 0.5, 0}, n{0.5, 0.5 + s, 0}, w{0.5 - s, 0.5, 0}, so{0.5, 0.5 - s, 0};
  const Point a{lo, lo, 0}, b{hi, lo, 0}, c{hi, hi, 0}, d{lo, hi, 0};
  return {{e, n}, {n, w}, {w, so}, {so, e}, {a, b}, {b, c}, {c, d}, {d, a}};
}

}  // namespace

TEST_CASE("unit square builder counts") {
  const Mesh m1 = build_unit_square(1);
  CHECK(m1.num_cells() == 2);
  CHECK(m1.num_vertices() == 4);
  CHECK(m1.num_facets() == 5);
  CHECK(interior_facets(m1) == 1);

  CHECK(build_unit_square(50).num_cells() == 5000);
  CHECK(build_unit_square(2).total_volume() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(build_unit_square(0), std::invalid_argument);
}

TEST_CASE("all cells positively oriented and facets conforming") {
  for (const Mesh& m : {build_unit_square(3), build_square_with_hole(2), build_lshape_3d(1)}) {
    for (int c = 0; c < m.num_cells(); ++c) CHECK(m.signed_volume(c) > 0.0);
    CHECK(testing::facets_conforming_bruteforce(m));
    CHECK(testing::no_hanging_nodes_bruteforce(m));
  }
}

TEST_CASE("square with hole geometry") {
  const Mesh m = build_square_with_hole(2);
  const double lo = 129.0 / 400.0, hi = 271.0 / 400.0;
  int corners = 0;
  for (const Point& p : m.vertices()) {
    if ((p[0] == lo || p[0] == hi) && (p[1] == lo || p[1] == hi)) ++corners;
  }
  CHECK(corners == 4);  // includes (129/400, 129/400) verbatim
  const double hole = 142.0 / 400.0;
  CHECK(m.total_volume() == doctest::Approx(1.0 - hole * hole).epsilon(1e-12));
  CHECK(1.0 - hole * hole == doctest::Approx(0.873975).epsilon(1e-15));

  const auto segments = hole_domain_segments();
  int boundary = 0;
  for (int f = 0; f < m.num_facets(); ++f) {
    if (!m.boundary_facet(f)) continue;
    ++boundary;
    bool on_segment = false;
    for (const auto& [a, b] : segments) {
      const auto& v = m.facet(f).vertices;
      if (testing::distance_to_segment(m.vertex(v[0]), a, b) < 1e-12 &&
          testing::distance_to_segment(m.vertex(v[1]), a, b) < 1e-12) {
        on_segment = true;
      }
    }
    CHECK(on_segment);
  }
  CHECK(boundary == 8 * 2 * 2);
}

TEST_CASE("3D L-shape geometry") {
  const Mesh m = build_lshape_3d(2);
  CHECK(m.total_volume() == doctest::Approx(0.75).epsilon(1e-13));
  CHECK(m.num_cells() == 288);  // 48 cubes x 6

  // Edges on the line x = z = 0 must cover y in [0, 1].
  std::vector<std::pair<double, double>> pieces;
  for (const auto& c : m.cells()) {
    for (int i = 0; i < 4; ++i) {
      for (int j = i + 1; j < 4; ++j) {
        const Point& a = m.vertex(c[i]);
        const Point& b = m.vertex(c[j]);
        if (a[0] == 0 && a[2] == 0 && b[0] == 0 && b[2] == 0) pieces.emplace_back(std::min(a[1], b[1]), std::max(a[1], b[1]));
      }
    }
  }
  std::sort(pieces.begin(), pieces.end());
  double reach = 0.0;
  for (const auto& [y0, y1] : pieces) {
    if (y0 <= reach + 1e-14) reach = std::max(reach, y1);
  }
  CHECK(reach == doctest::Approx(1.0));
}

TEST_CASE("uniform refinement") {
  SUBCASE("2D unit square") {
    const Mesh m = build_unit_square(1);
    const Mesh r = uniform_refine(m);
    CHECK(r.num_cells() == 8);
    CHECK(r.max_diameter() == doctest::Approx(0.5 * m.max_diameter()).epsilon(1e-15));
    CHECK(r.total_volume() == doctest::Approx(m.total_volume()).epsilon(1e-14));
    CHECK(testing::facets_conforming_bruteforce(r));
  }
  SUBCASE("2D hole mesh") {
    const Mesh m = build_square_with_hole(1);
    const Mesh r = uniform_refine(m);
    CHECK(r.num_cells() == 4 * m.num_cells());
    CHECK(r.total_volume() == doctest::Approx(m.total_volume()).epsilon(1e-14));
  }
  SUBCASE("3D L-shape") {
    const Mesh m = build_lshape_3d(1);
    const Mesh r = uniform_refine(m);
    CHECK(r.num_cells() == 8 * m.num_cells());
    CHECK(r.total_volume() == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(r.max_diameter() == doctest::Approx(0.5 * m.max_diameter()).epsilon(1e-14));
    CHECK(testing::facets_conforming_bruteforce(r));
    CHECK(testing::no_hanging_nodes_bruteforce(r));
    CHECK(r.max_shape_ratio() <= m.max_shape_ratio() * (1 + 1e-12));
  }
}

TEST_CASE("marked refinement") {
  const Mesh m = build_unit_square(4);
  SUBCASE("all marked") {
    std::vector<int> all(m.num_cells());
    for (int c = 0; c < m.num_cells(); ++c) all[c] = c;
    CHECK(refine_marked(m, all).num_cells() >= 2 * m.num_cells());
  }
  SUBCASE("none marked") {
    const Mesh r = refine_marked(m, {});
    CHECK(r.num_cells() == m.num_cells());
    CHECK(r.cells() == m.cells());
    CHECK(r.vertices() == m.vertices());
  }
  SUBCASE("out of range") {
    const std::vector<int> bad{m.num_cells()};
    CHECK_THROWS_AS(refine_marked(m, bad), std::out_of_range);
  }
  SUBCASE("single interior cell: conformity and locality") {
    // An interior cell of the 4x4 grid (square (1,1), first triangle).
    const int cell = 2 * (1 * 4 + 1);
    const std::vector<int> marked{cell};
    const RefinementTrace t = refine_marked_traced(m, marked);
    CHECK(t.refined[cell]);
    CHECK(testing::facets_conforming_bruteforce(t.mesh));
    CHECK(testing::no_hanging_nodes_bruteforce(t.mesh));
    CHECK(t.mesh.total_volume() == doctest::Approx(1.0).epsilon(1e-13));

    const auto before = testing::cell_key_set(m);
    const auto after = testing::cell_key_set(t.mesh);
    int changed = 0;
    for (const auto& k : before) changed += after.count(k) ? 0 : 1;
    CHECK(changed <= 32);
    // Every refined cell shares at least a vertex with the closure
    // neighbourhood: its distance to the marked cell is below two cell sizes.
    const Point pc = m.cell_centroid(cell);
    for (int c = 0; c < m.num_cells(); ++c) {
      if (!t.refined[c]) continue;
      const Point q = m.cell_centroid(c);
      CHECK(std::hypot(q[0] - pc[0], q[1] - pc[1]) < 2.0 * m.max_diameter());
    }
  }
}

TEST_CASE("refinement invariants under random marking (property)") {
  std::mt19937 rng(7);
  for (const Mesh& initial : {build_square_with_hole(1), build_unit_square(3), build_lshape_3d(1)}) {
    Mesh m = initial;
    const double ratio0 = initial.max_shape_ratio();
    const double volume0 = initial.total_volume();
    const int iterations = initial.dim() == 2 ? 15 : 8;
    for (int it = 0; it < iterations; ++it) {
      std::vector<int> marked;
      std::uniform_int_distribution<int> pick(0, m.num_cells() - 1);
      const int count = std::max(1, m.num_cells() / 10);
      for (int i = 0; i < count; ++i) marked.push_back(pick(rng));
      const RefinementTrace t = refine_marked_traced(m, marked);
      for (int c : marked) CHECK(t.refined[c]);
      m = t.mesh;
      CHECK(m.total_volume() == doctest::Approx(volume0).epsilon(1e-12));
      CHECK(m.max_shape_ratio() <= 4.0 * ratio0);
      for (const auto& f : m.facets()) CHECK((f.on_boundary() || (f.plus < f.minus)));
    }
    CHECK(testing::facets_conforming_bruteforce(m));
  }
}

TEST_CASE("shape regularity under corner-focused refinement (15 iterations)") {
  Mesh m = build_square_with_hole(1);
  const double ratio0 = m.max_shape_ratio();
  const Point corner{129.0 / 400.0, 129.0 / 400.0, 0.0};
  for (int it = 0; it < 15; ++it) {
    std::vector<int> marked;
    for (int c = 0; c < m.num_cells(); ++c) {
      for (const int v : m.cell(c)) {
        if (v >= 0 && m.vertex(v) == corner) marked.push_back(c);
      }
    }
    m = refine_marked(m, marked);
  }
  CHECK(m.max_shape_ratio() <= 4.0 * ratio0);
  CHECK(testing::facets_conforming_bruteforce(m));
}

TEST_CASE("facet geometry") {
  const std::vector<Point> v{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  BisectionState s;
  s.ordered = {0, 1, 2, -1};
  s.tag = 2;
  const Mesh tri(2, v, {s});
  const FacetGeometry g = facet_geometry(tri);
  CHECK(g.cell_diameters[0] == doctest::Approx(std::sqrt(2.0)));
  for (int f = 0; f < tri.num_facets(); ++f) {
    const auto& fv = tri.facet(f).vertices;
    if (tri.vertex(fv[0])[1] == 0.0 && tri.vertex(fv[1])[1] == 0.0) {
      CHECK(g.normals[f][0][0] == doctest::Approx(0.0));
      CHECK(g.normals[f][0][1] == doctest::Approx(-1.0));
      CHECK(g.facet_diameters[f] == doctest::Approx(1.0));
    }
  }

  // Unit tetrahedron against direct formulas from the vertex coordinates.
  const std::vector<Point> tv{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  BisectionState t;
  t.ordered = {0, 1, 2, 3};
  t.tag = 3;
  const Mesh tet(3, tv, {t});
  const FacetGeometry tg = facet_geometry(tet);
  CHECK(tet.cell_volume(0) == doctest::Approx(1.0 / 6.0));
  for (int f = 0; f < tet.num_facets(); ++f) {
    const auto& fv = tet.facet(f).vertices;
    const bool slanted = fv[0] != 0;  // facet {1,2,3}
    CHECK(tet.facet_measure(f) == doctest::Approx(slanted ? std::sqrt(3.0) / 2.0 : 0.5));
    CHECK(tg.facet_diameters[f] == doctest::Approx(std::sqrt(2.0)));
    const Point& n = tg.normals[f][0];
    if (slanted) {
      for (int k = 0; k < 3; ++k) CHECK(n[k] == doctest::Approx(1.0 / std::sqrt(3.0)));
    } else {
      CHECK(n[0] + n[1] + n[2] == doctest::Approx(-1.0));
    }
  }

  std::vector<Point> flat{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  CHECK_THROWS_AS(Mesh(2, flat, {s}), std::invalid_argument);
}

TEST_CASE("vtk export") {
  const Mesh m = build_unit_square(1);
  std::ostringstream os;
  const std::vector<double> field{0.25, 0.1};
  write_vtk(os, m, field);
  const std::string s = os.str();
  CHECK(s.find("DATASET UNSTRUCTURED_GRID") != std::string::npos);
  CHECK(s.find("POINTS 4 double\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n") != std::string::npos);
  CHECK(s.find("CELLS 2 8\n") != std::string::npos);
  CHECK(s.find("CELL_TYPES 2\n5\n5\n") != std::string::npos);
  CHECK(s.find("SCALARS zeta_sq double 1\nLOOKUP_TABLE default\n0.25\n0.1\n") != std::string::npos);
  const std::vector<double> wrong{1.0};
  CHECK_THROWS(write_vtk(os, m, wrong));
}
