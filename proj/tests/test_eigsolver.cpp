#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "form_oracle.hpp"
#include "lameeig/assembly.hpp"
#include "lameeig/eigsolver.hpp"

using namespace lameeig;

namespace {

SystemPencil scalar_pencil(double k, double m) {
  SystemPencil P;
  P.layout.n_u = 1;
  P.K.resize(1, 1);
  P.M.resize(1, 1);
  P.K.insert(0, 0) = k;
  P.M.insert(0, 0) = m;
  return P;
}

SystemPencil pencil_for(const Mesh& mesh, int k, double nu, double E = 1.0) {
  return assemble_pencil(mesh, SpaceTriple(mesh, k), make_material(mesh.dim(), E, nu));
}

// Largest principal angle (radians) between the displacement spans of two
// sets of M-orthonormal vectors.
double principal_angle(const SystemPencil& P, const std::vector<EigenSolution>& a, const std::vector<EigenSolution>& b,
                       std::size_t first, std::size_t last) {
  const Eigen::Index n = P.layout.n_u;
  const SparseMatrix Mu = P.M.topLeftCorner(n, n);
  const Eigen::Index r = static_cast<Eigen::Index>(last - first);
  Eigen::MatrixXd A(n, r), B(n, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    A.col(j) = a[first + j].u;
    B.col(j) = b[first + j].u;
  }
  // Orthonormalize in the M inner product through Cholesky of the Gram matrices.
  const Eigen::MatrixXd Ga = A.transpose() * (Mu * A);
  const Eigen::MatrixXd Gb = B.transpose() * (Mu * B);
  const Eigen::MatrixXd Qa = A * Eigen::MatrixXd(Ga.llt().matrixU()).inverse();
  const Eigen::MatrixXd Qb = B * Eigen::MatrixXd(Gb.llt().matrixU()).inverse();
  const Eigen::MatrixXd C = Qa.transpose() * (Mu * Qb);
  const double smin = Eigen::JacobiSVD<Eigen::MatrixXd>(C).singularValues().minCoeff();
  return std::acos(std::min(1.0, smin));
}

// Groups indices of (nearly) equal eigenvalues.
std::vector<std::pair<std::size_t, std::size_t>> clusters(const std::vector<EigenSolution>& s, double rel) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= s.size(); ++i) {
    if (i == s.size() || s[i].kappa - s[i - 1].kappa > rel * s[i].kappa) {
      out.emplace_back(start, i);
      start = i;
    }
  }
  return out;
}

Mesh permuted(const Mesh& mesh, unsigned seed) {
  std::vector<int> order(mesh.num_cells());
  for (int c = 0; c < mesh.num_cells(); ++c) order[c] = c;
  std::mt19937 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<BisectionState> cells;
  for (int c : order) cells.push_back(mesh.bisection()[c]);
  return Mesh(mesh.dim(), mesh.vertices(), cells);
}

}  // namespace

TEST_CASE("sign convention on a 1x1 pencil") {
  const SystemPencil P = scalar_pencil(-2.0, 1.0);
  const auto d = solve_dense(P, 1);
  REQUIRE(d.size() == 1);
  CHECK(d[0].kappa == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(d[0].u[0] == doctest::Approx(1.0));
  EigenRequest req;
  const auto s = solve_shift_invert(P, req);
  CHECK(s[0].kappa == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("factorization failure retries with half the shift") {
  const SystemPencil P = scalar_pencil(-2.0, 1.0);
  EigenRequest req;
  req.sigma = -2.0;  // K - sigma M = 0
  SolveInfo info;
  const auto s = solve_shift_invert(P, req, &info);
  CHECK(info.factorization_retries == 1);
  CHECK(info.sigma == -1.0);
  CHECK(s[0].kappa == doctest::Approx(2.0));
}

TEST_CASE("dense and shift-invert agree on the smallest 18-dof problem") {
  const SystemPencil P = pencil_for(build_unit_square(2), 1, 0.35);
  REQUIRE(P.layout.total() == 18);
  const auto d = solve_dense(P, 1);
  const auto s = solve_shift_invert(P, EigenRequest{});
  CHECK(std::abs(d[0].kappa - s[0].kappa) <= 1e-10 * d[0].kappa);
  CHECK(d[0].residual <= 1e-12);
  CHECK(d[0].kappa > 0.0);
}

TEST_CASE("oracle equivalence over meshes and Poisson ratios") {
  struct Case {
    Mesh mesh;
    int k;
    int nev;
  };
  const std::vector<Case> cases{{build_unit_square(4), 1, 4},      {build_unit_square(6), 2, 4},
                                {build_unit_square(3), 3, 4},      {build_square_with_hole(2), 1, 4},
                                {build_square_with_hole(1), 2, 4}, {build_lshape_3d(1), 2, 4},
                                {build_lshape_3d(2), 1, 3}};
  for (const Case& c : cases) {
    for (double nu : {0.35, 0.4999}) {
      const SystemPencil P = pencil_for(c.mesh, c.k, nu);
      REQUIRE(P.layout.total() <= 3000);
      const auto d = solve_dense(P, c.nev);
      EigenRequest req;
      req.nev = c.nev;
      req.sigma = -0.5 * d[0].kappa;
      const auto s = solve_shift_invert(P, req);
      REQUIRE(s.size() == d.size());
      for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(std::abs(d[i].kappa - s[i].kappa) <= 1e-8 * d[i].kappa);
        CHECK(d[i].residual <= 1e-12);
        CHECK(s[i].residual <= req.tolerance);
        CHECK(d[i].kappa > 0.0);
        if (i > 0) CHECK(d[i].kappa >= d[i - 1].kappa);
        if (i > 0) CHECK(s[i].kappa >= s[i - 1].kappa);
      }
      // One extra dense pair tells whether the last cluster is cut off by nev.
      const auto extended = solve_dense(P, std::min<int>(c.nev + 1, static_cast<int>(P.layout.n_u)));
      for (const auto& [first, last] : clusters(extended, 1e-6)) {
        if (last > d.size()) continue;
        CHECK(principal_angle(P, d, s, first, last) < 1e-6);
      }
    }
  }
}

TEST_CASE("shift above the smallest eigenvalue is corrected") {
  const SystemPencil P = pencil_for(build_unit_square(4), 1, 0.35);
  const auto d = solve_dense(P, 3);
  EigenRequest req;
  req.nev = 3;
  req.sigma = -3.0 * d[2].kappa;
  const auto s = solve_shift_invert(P, req);
  for (int i = 0; i < 3; ++i) CHECK(s[i].kappa == doctest::Approx(d[i].kappa).epsilon(1e-9));
}

TEST_CASE("double eigenvalue on the unit square is resolved") {
  const SystemPencil P = pencil_for(build_unit_square(20), 1, 0.49);
  EigenRequest req;
  req.nev = 4;
  const auto s = solve_shift_invert(P, req);
  REQUIRE(s.size() == 4);
  CHECK(s[2].kappa / s[1].kappa == doctest::Approx(1.0).epsilon(1e-6));
  for (const auto& e : s) CHECK(e.residual <= 1e-9);
}

TEST_CASE("non-convergence reports the converged subset") {
  const SystemPencil P = pencil_for(build_unit_square(8), 1, 0.35);
  EigenRequest req;
  req.nev = 3;
  req.max_iterations = 0;
  req.subspace_size = 8;
  req.tolerance = 1e-300;
  try {
    (void)solve_shift_invert(P, req);
    FAIL("expected a convergence error");
  } catch (const ConvergenceError& e) {
    CHECK(e.converged().size() < 3);
    CHECK(std::string(e.what()).find("no convergence") != std::string::npos);
  }
  req.nev = 0;
  CHECK_THROWS_AS((void)solve_shift_invert(P, req), std::invalid_argument);
  CHECK_THROWS_AS((void)solve_dense(P, static_cast<int>(P.layout.n_u) + 1), std::invalid_argument);
}

TEST_CASE("normalization") {
  const SystemPencil P = pencil_for(build_unit_square(4), 2, 0.35);
  const auto d = solve_dense(P, 2);
  const Eigen::Index n = P.layout.n_u;
  const SparseMatrix Mu = P.M.topLeftCorner(n, n);
  for (const auto& e : d) {
    CHECK(e.u.dot(Mu * e.u) == doctest::Approx(1.0).epsilon(1e-13));
    Eigen::Index i = 0;
    e.u.cwiseAbs().maxCoeff(&i);
    CHECK(e.u[i] > 0.0);

    const EigenSolution again = normalize(e, P);
    CHECK((again.stacked() - e.stacked()).norm() <= 1e-14 * e.stacked().norm());

    EigenSolution scaled = e;
    scaled.u *= -3.0;
    scaled.rot *= -3.0;
    scaled.p *= -3.0;
    const EigenSolution back = normalize(scaled, P);
    CHECK((back.stacked() - e.stacked()).norm() <= 1e-14 * e.stacked().norm());
  }
  EigenSolution zero = d[0];
  zero.u.setZero();
  CHECK_THROWS_AS(normalize(zero, P), SpuriousModeError);
}

TEST_CASE("eigenvalues scale linearly with Young's modulus") {
  const Mesh mesh = build_square_with_hole(1);
  const auto a = solve_dense(pencil_for(mesh, 2, 0.35, 1.0), 4);
  const auto b = solve_dense(pencil_for(mesh, 2, 0.35, 4.0), 4);
  for (int i = 0; i < 4; ++i) CHECK(b[i].kappa == doctest::Approx(4.0 * a[i].kappa).epsilon(1e-10));
}

TEST_CASE("eigenvalues do not depend on the cell numbering") {
  for (const Mesh& mesh : {build_square_with_hole(1), build_lshape_3d(1)}) {
    const int k = 2;
    const double nu = 0.4999;
    const auto a = solve_dense(pencil_for(mesh, k, nu), 3);
    const auto b = solve_dense(pencil_for(permuted(mesh, 99), k, nu), 3);
    for (int i = 0; i < 3; ++i) CHECK(b[i].kappa == doctest::Approx(a[i].kappa).epsilon(1e-10));
  }
}

// P1 discretization error alone is above 2% for kappa_4 at N=20 (the
// nearly incompressible branch converges slowly), so the N -> 2N check is
// made at 40 -> 80; the coarse levels must not show any extra low mode.
TEST_CASE("no spurious modes: the six smallest eigenvalues stabilize under refinement") {
  for (double nu : {0.35, 0.4999}) {
    std::vector<std::vector<double>> levels;
    for (int n : {10, 20, 40, 80}) {
      const SystemPencil P = pencil_for(build_unit_square(n), 1, nu);
      EigenRequest req;
      req.nev = 6;
      std::vector<double> kappas;
      for (const auto& e : solve_shift_invert(P, req)) kappas.push_back(e.kappa);
      levels.push_back(kappas);
    }
    const auto& fine = levels.back();
    const auto& previous = levels[levels.size() - 2];
    for (int i = 0; i < 6; ++i) {
      CAPTURE(nu);
      CAPTURE(i);
      CHECK(std::abs(fine[i] - previous[i]) < 0.02 * fine[i]);
      for (const auto& coarse : levels) CHECK(coarse[i] > 0.98 * fine[i]);
    }
  }
}

TEST_CASE("eigenvalues scale linearly with Young's modulus under stabilization") {
  const Mesh mesh = build_unit_square(6);
  const auto a = solve_dense(pencil_for(mesh, 1, 0.4999, 1.0), 3);
  const auto b = solve_dense(pencil_for(mesh, 1, 0.4999, 7.5), 3);
  for (int i = 0; i < 3; ++i) CHECK(b[i].kappa == doctest::Approx(7.5 * a[i].kappa).epsilon(1e-9));
}
