#include <doctest.h>

#include <random>
#include <sstream>

#include "form_oracle.hpp"
#include "lameeig/assembly.hpp"

using namespace lameeig;

namespace {

double max_abs(const SparseMatrix& A) {
  double m = 0.0;
  for (Eigen::Index j = 0; j < A.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(A, j); it; ++it) m = std::max(m, std::abs(it.value()));
  }
  return m;
}

// Largest |entry| within rows [r0, r0+nr) x cols [c0, c0+nc).
double block_max(const SparseMatrix& A, Eigen::Index r0, Eigen::Index nr, Eigen::Index c0, Eigen::Index nc) {
  double m = 0.0;
  for (Eigen::Index j = c0; j < c0 + nc; ++j) {
    for (SparseMatrix::InnerIterator it(A, j); it; ++it) {
      if (it.row() >= r0 && it.row() < r0 + nr) m = std::max(m, std::abs(it.value()));
    }
  }
  return m;
}

}  // namespace

TEST_CASE("Lame constants from Young's modulus and Poisson ratio") {
  auto [mu, lambda] = lame_from_poisson(1.0, 0.25);
  CHECK(mu == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(lambda == doctest::Approx(0.4).epsilon(1e-15));
  std::tie(mu, lambda) = lame_from_poisson(1.0, 0.35);
  CHECK(mu == doctest::Approx(0.370370370370).epsilon(1e-11));
  CHECK(lambda == doctest::Approx(0.864197530864).epsilon(1e-11));
  std::tie(mu, lambda) = lame_from_poisson(1.0, 0.4999);
  CHECK(mu == doctest::Approx(0.3333555570371).epsilon(1e-12));
  CHECK(lambda == doctest::Approx(1666.4444296288).epsilon(1e-12));
  CHECK_THROWS_AS(lame_from_poisson(1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(lame_from_poisson(1.0, 0.49995), std::invalid_argument);
  CHECK_THROWS_AS(lame_from_poisson(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(lame_from_poisson(0.0, 0.3), std::invalid_argument);
  CHECK_NOTHROW(lame_from_poisson(1.0, 0.49995, 0.49999));

  CHECK(auto_alpha_inv(2, 0.35) == 0.0);
  CHECK(auto_alpha_inv(2, 0.49) == 0.0);
  CHECK(auto_alpha_inv(2, 0.4999) == 10.0);
  CHECK(auto_alpha_inv(3, 0.4999) == 0.5);
  CHECK(make_material(2, 1.0, 0.35, 3.0).alpha_inv == 3.0);
  CHECK_THROWS_AS(make_material(2, 1.0, 0.35, -1.0), std::invalid_argument);
}

TEST_CASE("pencil structure") {
  const MaterialParams params = make_material(2, 1.0, 0.4999);  // stabilization on
  for (int k = 1; k <= 3; ++k) {
    const Mesh mesh = build_unit_square(3);
    const SpaceTriple spaces(mesh, k);
    const SystemPencil P = assemble_pencil(mesh, spaces, params);
    const BlockLayout& L = P.layout;
    CHECK(P.K.rows() == L.total());
    CHECK(max_abs(P.K - SparseMatrix(P.K.transpose())) == 0.0);
    CHECK(max_abs(P.M - SparseMatrix(P.M.transpose())) == 0.0);
    CHECK(block_max(P.K, 0, L.n_u, 0, L.n_u) == 0.0);
    CHECK(block_max(P.M, L.n_u, L.n_rot + L.n_p, 0, L.total()) == 0.0);
    CHECK(block_max(P.K, L.offset_rot(), L.n_rot, L.offset_p(), L.n_p) == 0.0);
    CHECK(block_max(P.K, L.offset_u(), L.n_u, L.offset_rot(), L.n_rot) > 0.0);
    CHECK(block_max(P.K, L.offset_u(), L.n_u, L.offset_p(), L.n_p) > 0.0);
  }
  const Mesh tet = build_lshape_3d(1);
  const SystemPencil P3 = assemble_pencil(tet, SpaceTriple(tet, 1), make_material(3, 1.0, 0.35));
  CHECK(max_abs(P3.K - SparseMatrix(P3.K.transpose())) == 0.0);
}

TEST_CASE("un-eliminated displacement mass sums to dim * area") {
  struct Case {
    Mesh mesh;
    double volume;
  };
  for (const Case& c : {Case{build_unit_square(2), 1.0}, Case{build_square_with_hole(1), 0.873975},
                        Case{build_lshape_3d(1), 0.75}}) {
    for (int k = 1; k <= 3; ++k) {
      const SparseMatrix M = assemble_full_displacement_mass(c.mesh, SpaceTriple(c.mesh, k));
      CHECK(M.sum() == doctest::Approx(c.mesh.dim() * c.volume).epsilon(1e-12));
    }
  }
}

TEST_CASE("mass is positive semidefinite (property, 1000 random vectors)") {
  const Mesh mesh = build_square_with_hole(1);
  const SystemPencil P = assemble_pencil(mesh, SpaceTriple(mesh, 2), make_material(2, 1.0, 0.35));
  std::mt19937 rng(17);
  for (int t = 0; t < 1000; ++t) {
    const Eigen::VectorXd x = testing::random_vector(P.M.rows(), rng);
    CHECK(x.dot(P.M * x) >= -1e-14 * x.squaredNorm());
  }
}

TEST_CASE("pressure-jump penalty vanishes on continuous pressures") {
  const Mesh mesh = build_square_with_hole(1);
  for (int k = 1; k <= 3; ++k) {
    const SpaceTriple spaces(mesh, k);
    const SparseMatrix S = assemble_pressure_jump(mesh, spaces);
    const Eigen::VectorXd ones = Eigen::VectorXd::Constant(spaces.layout().n_p, 2.5);
    CHECK(std::abs(ones.dot(S * ones)) < 1e-14);
    if (k >= 2) {
      // p = x - 2y, continuous and representable by discontinuous P_{k-1}.
      Eigen::VectorXd p(spaces.layout().n_p);
      const LagrangeBasis& dg = spaces.discontinuous_basis();
      for (int c = 0; c < mesh.num_cells(); ++c) {
        const AffineMap map = AffineMap::of_cell(mesh, c);
        for (int i = 0; i < dg.size(); ++i) {
          const Point x = map.to_physical(dg.node(i));
          p[spaces.p_dof(c, i)] = x[0] - 2 * x[1];
        }
      }
      CHECK(std::abs(p.dot(S * p)) < 1e-14);
    }
    std::mt19937 rng(k);
    const Eigen::VectorXd r = testing::random_vector(spaces.layout().n_p, rng);
    CHECK(r.dot(S * r) > 0.0);
  }
}

TEST_CASE("matrix form agrees with direct quadrature of the bilinear form") {
  std::mt19937 rng(23);
  struct Case {
    Mesh mesh;
    int k;
    double nu;
  };
  const std::vector<Case> cases{{build_unit_square(1), 2, 0.35},   {build_unit_square(1), 3, 0.4999},
                                {build_unit_square(2), 1, 0.4999}, {build_square_with_hole(1), 2, 0.4999},
                                {build_lshape_3d(1), 1, 0.4999},  {build_lshape_3d(1), 2, 0.35}};
  for (const Case& c : cases) {
    const SpaceTriple spaces(c.mesh, c.k);
    const MaterialParams params = make_material(c.mesh.dim(), 1.0, c.nu);
    const SystemPencil P = assemble_pencil(c.mesh, spaces, params);
    for (int t = 0; t < 3; ++t) {
      const Eigen::VectorXd x = testing::random_vector(P.K.rows(), rng);
      const Eigen::VectorXd y = testing::random_vector(P.K.rows(), rng);
      const testing::FormValue ref = testing::bilinear_form_by_quadrature(c.mesh, spaces, params, x, y);
      CHECK(std::abs(x.dot(P.K * y) - ref.value) <= 1e-12 * ref.magnitude);
    }
  }
}

TEST_CASE("assembly is bitwise identical across thread counts") {
  const Mesh mesh = build_square_with_hole(2);
  const SpaceTriple spaces(mesh, 2);
  const MaterialParams params = make_material(2, 1.0, 0.4999);
  const SystemPencil a = assemble_pencil(mesh, spaces, params, {1});
  const SystemPencil b = assemble_pencil(mesh, spaces, params, {3});
  CHECK(max_abs(a.K - b.K) == 0.0);
  CHECK(max_abs(a.M - b.M) == 0.0);
  CHECK(a.K.nonZeros() == b.K.nonZeros());
}

TEST_CASE("triple norm") {
  const Mesh mesh = build_unit_square(2);
  const MaterialParams params = make_material(2, 1.0, 0.25);
  for (int k = 1; k <= 2; ++k) {
    const SpaceTriple s(mesh, k);
    const BlockLayout& L = s.layout();
    CHECK(triple_norm(mesh, s, params, Eigen::VectorXd::Zero(L.n_u), Eigen::VectorXd::Zero(L.n_rot),
                      Eigen::VectorXd::Zero(L.n_p)) == 0.0);
    CHECK(triple_norm(mesh, s, params, Eigen::VectorXd::Zero(L.n_u), Eigen::VectorXd::Ones(L.n_rot),
                      Eigen::VectorXd::Zero(L.n_p)) == doctest::Approx(1.0).epsilon(1e-14));
    const Eigen::VectorXd u = interpolate_displacement_full(s, [](const Point& x) { return Point{-x[1], x[0], 0.0}; });
    CHECK(triple_norm(mesh, s, params, u, Eigen::VectorXd::Zero(L.n_rot), Eigen::VectorXd::Zero(L.n_p)) ==
          doctest::Approx(std::sqrt(0.4 * 4.0)).epsilon(1e-13));
    // Constant pressure c: only the (2mu+lambda)^-1 |q|^2 part survives.
    CHECK(triple_norm(mesh, s, params, Eigen::VectorXd::Zero(L.n_u), Eigen::VectorXd::Zero(L.n_rot),
                      Eigen::VectorXd::Constant(L.n_p, 3.0)) == doctest::Approx(std::sqrt(9.0 / 1.2)).epsilon(1e-13));
  }
}

TEST_CASE("mean pressure") {
  const Mesh mesh = build_unit_square(2);
  const SpaceTriple s(mesh, 2);
  CHECK(mean_pressure(mesh, s, Eigen::VectorXd::Constant(s.layout().n_p, -1.75)) == doctest::Approx(-1.75));
  Eigen::VectorXd p(s.layout().n_p);
  const LagrangeBasis& dg = s.discontinuous_basis();
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const AffineMap map = AffineMap::of_cell(mesh, c);
    for (int i = 0; i < dg.size(); ++i) p[s.p_dof(c, i)] = map.to_physical(dg.node(i))[0];
  }
  CHECK(mean_pressure(mesh, s, p) == doctest::Approx(0.5).epsilon(1e-14));

  // Random P1 pressure: on each cell the integral is |T| times the mean of the vertex values.
  std::mt19937 rng(4);
  const Eigen::VectorXd r = testing::random_vector(s.layout().n_p, rng);
  double integral = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    double avg = 0.0;
    for (int i = 0; i < dg.size(); ++i) avg += r[s.p_dof(c, i)] / dg.size();
    integral += mesh.cell_volume(c) * avg;
  }
  CHECK(mean_pressure(mesh, s, r) == doctest::Approx(integral).epsilon(1e-13));
}

TEST_CASE("matrix market export") {
  SparseMatrix A(3, 3);
  std::vector<Eigen::Triplet<double, Eigen::Index>> t{{0, 0, 2.0}, {1, 0, -1.0}, {0, 1, -1.0}, {2, 2, 0.5}};
  A.setFromTriplets(t.begin(), t.end());
  std::ostringstream os;
  write_matrix_market(os, A);
  CHECK(os.str() == "%%MatrixMarket matrix coordinate real symmetric\n3 3 3\n1 1 2\n2 1 -1\n3 3 0.5\n");
  A.coeffRef(0, 2) = 1.0;
  CHECK_THROWS_AS(write_matrix_market(os, A), std::invalid_argument);
}
