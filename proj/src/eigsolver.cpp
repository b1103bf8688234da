#include "lameeig/eigsolver.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/UmfPackSupport>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace lameeig {

namespace {

struct SplitPencil {
  Eigen::Index n_u = 0;
  Eigen::Index n_r = 0;
  SparseMatrix Muu;
  SparseMatrix Kuu;
  SparseMatrix Kur;
  SparseMatrix Krr;
};

SplitPencil split(const SystemPencil& pencil) {
  SplitPencil s;
  s.n_u = pencil.layout.n_u;
  s.n_r = pencil.layout.total() - s.n_u;
  s.Muu = pencil.M.topLeftCorner(s.n_u, s.n_u);
  s.Kuu = pencil.K.topLeftCorner(s.n_u, s.n_u);
  s.Kur = pencil.K.topRightCorner(s.n_u, s.n_r);
  s.Krr = pencil.K.bottomRightCorner(s.n_r, s.n_r);
  return s;
}

void check_request(const SystemPencil& pencil, int nev) {
  if (pencil.K.rows() != pencil.layout.total() || pencil.M.rows() != pencil.layout.total()) {
    throw std::invalid_argument("eigensolver: pencil size does not match its block layout");
  }
  if (nev < 1) throw std::invalid_argument("eigensolver: nev must be at least 1");
  if (nev > pencil.layout.n_u) {
    throw std::invalid_argument("eigensolver: requested " + std::to_string(nev) + " eigenpairs but the pencil has only " +
                                std::to_string(pencil.layout.n_u) + " displacement dofs");
  }
}

EigenSolution make_solution(const SystemPencil& pencil, double kappa, const Eigen::VectorXd& x) {
  const BlockLayout& L = pencil.layout;
  EigenSolution s;
  s.kappa = kappa;
  s.u = x.segment(L.offset_u(), L.n_u);
  s.rot = x.segment(L.offset_rot(), L.n_rot);
  s.p = x.segment(L.offset_p(), L.n_p);
  s = normalize(std::move(s), pencil);
  s.residual = relative_residual(pencil, kappa, s.stacked());
  return s;
}

// Pairs whose displacement carries (almost) no mass belong to the infinite branch.
bool massless(const SparseMatrix& Muu, const Eigen::VectorXd& x, Eigen::Index n_u) {
  const Eigen::VectorXd u = x.head(n_u);
  return std::abs(u.dot(Muu * u)) < 1e-12 * x.squaredNorm();
}

// One inverse-iteration step with shift kappa on the full pencil, followed by
// a Rayleigh quotient update. Kept only when it lowers the residual.
void refine_pair(const SystemPencil& pencil, double& kappa, Eigen::VectorXd& x) {
  SparseMatrix shifted = pencil.K + kappa * pencil.M;
  shifted.makeCompressed();
  Eigen::UmfPackLU<SparseMatrix> lu(shifted);
  if (lu.info() != Eigen::Success) return;
  Eigen::VectorXd y = lu.solve(Eigen::VectorXd(pencil.M * x));
  if (!y.allFinite() || !(y.norm() > 0.0)) return;
  y /= y.norm();
  const double mass = y.dot(pencil.M * y);
  if (!(mass > 0.0)) return;
  const double k2 = -y.dot(pencil.K * y) / mass;
  if (relative_residual(pencil, k2, y) < relative_residual(pencil, kappa, x)) {
    kappa = k2;
    x = y;
  }
}

class NeedsReshift : public std::exception {
 public:
  explicit NeedsReshift(double kappa) : kappa(kappa) {}
  double kappa;
};

// Block Krylov iteration for T = [(K - sigma M)^-1 [M_u v; 0]]_u, which is
// self-adjoint in the M_u inner product. Eigenvalues nu of T relate to the
// pencil by kappa = -sigma - 1/nu; the wanted pairs are the most negative nu.
class ShiftInvertIteration {
 public:
  ShiftInvertIteration(const SystemPencil& pencil, const SplitPencil& parts, const EigenRequest& req, double sigma,
                       const Eigen::UmfPackLU<SparseMatrix>& lu, SolveInfo& info)
      : pencil_(pencil), parts_(parts), req_(req), sigma_(sigma), lu_(lu), info_(info) {
    n_ = parts.n_u;
    big_n_ = pencil.layout.total();
    b_ = static_cast<int>(std::clamp<Eigen::Index>(req.block_size, 1, n_));
    const int wanted = req.subspace_size > 0 ? req.subspace_size : std::max(2 * req.nev + 3 * b_, 24);
    m_ = static_cast<int>(std::min<Eigen::Index>(std::max(wanted, req.nev + 2 * b_), n_));
    V_.resize(n_, m_);
    MV_.resize(n_, m_);
    W_.resize(big_n_, m_);
  }

  std::vector<EigenSolution> run() {
    std::mt19937 rng(req_.seed);
    Eigen::MatrixXd pending = random_block(rng);
    int breakdowns = 0;
    for (int restart = 0;; ++restart) {
      info_.restarts = restart;
      // Expand the basis to m columns.
      while (k_ < m_) {
        std::vector<int> added;
        for (int j = 0; j < pending.cols() && k_ < m_; ++j) {
          if (append(pending.col(j))) added.push_back(k_ - 1);
        }
        if (added.empty()) {
          if (k_ == n_ || ++breakdowns > 50) break;
          pending = random_block(rng);
          continue;
        }
        pending.resize(n_, static_cast<Eigen::Index>(added.size()));
        for (std::size_t j = 0; j < added.size(); ++j) pending.col(j) = W_.block(0, added[j], n_, 1);
      }

      // Rayleigh-Ritz in the M_u inner product.
      Eigen::MatrixXd H = MV_.leftCols(k_).transpose() * W_.topLeftCorner(n_, k_);
      H = 0.5 * (H + H.transpose()).eval();
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
      const Eigen::VectorXd nu = es.eigenvalues();  // ascending: most negative first
      const Eigen::MatrixXd& Y = es.eigenvectors();
      const double scale = nu.cwiseAbs().maxCoeff();
      if (nu[k_ - 1] > 1e-8 * scale) {
        // A positive Ritz value means some kappa lies between 0 and -sigma.
        throw NeedsReshift(-sigma_ - 1.0 / nu[k_ - 1]);
      }

      const int nev = req_.nev;
      std::vector<EigenSolution> done;
      std::vector<int> unconverged;
      for (int i = 0; i < std::min(k_, nev + b_); ++i) {
        const double v = nu[i];
        bool ok = false;
        if (i < nev && v < 0.0) {
          const double kappa = -sigma_ - 1.0 / v;
          const Eigen::VectorXd z = W_.leftCols(k_) * Y.col(i) / v;
          if (kappa > 0.0 && !massless(parts_.Muu, z, n_) && relative_residual(pencil_, kappa, z) <= req_.tolerance) {
            done.push_back(make_solution(pencil_, kappa, z));
            ok = true;
          }
        }
        if (!ok) unconverged.push_back(i);
      }
      if (static_cast<int>(done.size()) == nev) return done;
      if (k_ == n_ && restart > 0) {
        throw ConvergenceError("shift-invert: residual tolerance not reachable in the full displacement space", done);
      }
      if (restart >= req_.max_iterations) {
        std::ostringstream msg;
        msg << "shift-invert: no convergence after " << restart << " restarts; converged kappa:";
        for (const auto& s : done) msg << ' ' << s.kappa;
        throw ConvergenceError(msg.str(), done);
      }

      // New directions: residuals T x - nu x of the leading unconverged Ritz pairs.
      const int nb = std::min<int>(b_, static_cast<int>(unconverged.size()));
      Eigen::MatrixXd residuals(n_, nb);
      for (int j = 0; j < nb; ++j) {
        const int i = unconverged[j];
        residuals.col(j) = W_.topLeftCorner(n_, k_) * Y.col(i) - nu[i] * (V_.leftCols(k_) * Y.col(i));
      }
      // Thick restart with the leading Ritz vectors.
      const int keep = std::max(std::min(k_ - b_, std::max(nev + b_ + 2, k_ / 2)), std::min(nev, k_));
      const Eigen::MatrixXd Yk = Y.leftCols(keep);
      V_.leftCols(keep) = (V_.leftCols(k_) * Yk).eval();
      MV_.leftCols(keep) = (MV_.leftCols(k_) * Yk).eval();
      W_.leftCols(keep) = (W_.leftCols(k_) * Yk).eval();
      k_ = keep;
      pending = residuals;
    }
  }

 private:
  Eigen::MatrixXd random_block(std::mt19937& rng) const {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd B(n_, b_);
    for (Eigen::Index i = 0; i < B.size(); ++i) B.data()[i] = g(rng);
    return B;
  }

  // M_u-orthogonalizes x against the basis (two passes), appends it and its image.
  bool append(Eigen::VectorXd x) {
    const double original = std::sqrt(std::max(0.0, x.dot(parts_.Muu * x)));
    if (!(original > 0.0)) return false;
    for (int pass = 0; pass < 2 && k_ > 0; ++pass) x -= V_.leftCols(k_) * (MV_.leftCols(k_).transpose() * x);
    const Eigen::VectorXd mx = parts_.Muu * x;
    const double norm = std::sqrt(std::max(0.0, x.dot(mx)));
    if (norm < 1e-10 * original) return false;
    V_.col(k_) = x / norm;
    MV_.col(k_) = mx / norm;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(big_n_);
    rhs.head(n_) = MV_.col(k_);
    W_.col(k_) = lu_.solve(rhs);
    ++info_.operator_applications;
    ++k_;
    return true;
  }

  const SystemPencil& pencil_;
  const SplitPencil& parts_;
  const EigenRequest& req_;
  double sigma_;
  const Eigen::UmfPackLU<SparseMatrix>& lu_;
  SolveInfo& info_;
  Eigen::Index n_ = 0;
  Eigen::Index big_n_ = 0;
  int b_ = 1;
  int m_ = 1;
  int k_ = 0;
  Eigen::MatrixXd V_, MV_, W_;
};

double max_abs(const SparseMatrix& A) {
  double m = 0.0;
  for (Eigen::Index j = 0; j < A.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(A, j); it; ++it) m = std::max(m, std::abs(it.value()));
  }
  return m;
}

}  // namespace

Eigen::VectorXd EigenSolution::stacked() const {
  Eigen::VectorXd x(u.size() + rot.size() + p.size());
  x << u, rot, p;
  return x;
}

double relative_residual(const SystemPencil& pencil, double kappa, const Eigen::VectorXd& x) {
  const Eigen::VectorXd kx = pencil.K * x;
  const double denom = kx.norm();
  if (!(denom > 0.0)) return std::numeric_limits<double>::infinity();
  return (kx + kappa * (pencil.M * x)).norm() / denom;
}

EigenSolution normalize(EigenSolution s, const SystemPencil& pencil) {
  const Eigen::Index n_u = pencil.layout.n_u;
  if (s.u.size() != n_u) throw std::invalid_argument("normalize: displacement block has the wrong size");
  const SparseMatrix Muu = pencil.M.topLeftCorner(n_u, n_u);
  const double mass = s.u.dot(Muu * s.u);
  if (!(mass > 0.0) || !std::isfinite(mass)) {
    throw SpuriousModeError("normalize: zero displacement block (pure rotation/pressure mode is spurious)");
  }
  double scale = 1.0 / std::sqrt(mass);
  Eigen::Index imax = 0;
  s.u.cwiseAbs().maxCoeff(&imax);
  if (s.u[imax] < 0.0) scale = -scale;
  s.u *= scale;
  s.rot *= scale;
  s.p *= scale;
  s.normalization.scale *= scale;
  s.normalization.sign_flipped = s.normalization.scale < 0.0;
  return s;
}

std::vector<EigenSolution> solve_dense(const SystemPencil& pencil, int nev) {
  check_request(pencil, nev);
  const SplitPencil parts = split(pencil);
  // Eliminating the (omega, p) block A = K_rr leaves
  // (K_ur A^-1 K_ru - K_uu) x_u = kappa M_u x_u and x_r = -A^-1 K_ru x_u.
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(parts.n_r, parts.n_u);
  if (parts.n_r > 0) {
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(parts.Krr);
    if (ldlt.info() != Eigen::Success) throw EigenSolverError("solve_dense: factorization of the (omega, p) block failed");
    const Eigen::MatrixXd Kru = Eigen::MatrixXd(parts.Kur.transpose());
    Z = ldlt.solve(Kru);
  }
  Eigen::MatrixXd S = parts.Kur * Z - Eigen::MatrixXd(parts.Kuu);
  S = 0.5 * (S + S.transpose()).eval();
  const Eigen::MatrixXd Mu = Eigen::MatrixXd(parts.Muu);
  const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Mu);
  if (es.info() != Eigen::Success) throw EigenSolverError("solve_dense: generalized eigensolver failed");
  const Eigen::VectorXd& kappa = es.eigenvalues();
  const double floor = 1e-12 * kappa.cwiseAbs().maxCoeff();
  std::vector<EigenSolution> out;
  for (Eigen::Index i = 0; i < kappa.size() && static_cast<int>(out.size()) < nev; ++i) {
    if (!(kappa[i] > floor)) continue;
    Eigen::VectorXd x(pencil.layout.total());
    x.head(parts.n_u) = es.eigenvectors().col(i);
    x.tail(parts.n_r) = -Z * es.eigenvectors().col(i);
    if (massless(parts.Muu, x, parts.n_u)) continue;
    double k = kappa[i];
    refine_pair(pencil, k, x);
    out.push_back(make_solution(pencil, k, x));
  }
  if (static_cast<int>(out.size()) < nev) {
    throw EigenSolverError("solve_dense: only " + std::to_string(out.size()) + " positive eigenvalues available");
  }
  // Refinement can swap the last digits inside a cluster.
  std::stable_sort(out.begin(), out.end(), [](const EigenSolution& a, const EigenSolution& b) { return a.kappa < b.kappa; });
  return out;
}

std::vector<EigenSolution> solve_shift_invert(const SystemPencil& pencil, const EigenRequest& request,
                                              SolveInfo* info) {
  check_request(pencil, request.nev);
  if (!(request.tolerance > 0.0)) throw std::invalid_argument("shift-invert: tolerance must be positive");
  SolveInfo local;
  SolveInfo& inf = info ? *info : local;
  inf = SolveInfo{};
  const SplitPencil parts = split(pencil);

  double sigma = request.sigma ? *request.sigma : -1e-6 * max_abs(pencil.K) / std::max(max_abs(pencil.M), 1e-300);
  if (!(sigma < 0.0)) throw std::invalid_argument("shift-invert: shift must be negative");

  for (int reshift = 0;; ++reshift) {
    // UmfPackLU keeps referring to the matrix it factored.
    SparseMatrix shifted;
    Eigen::UmfPackLU<SparseMatrix> lu;
    bool factored = false;
    for (int attempt = 0; attempt <= 3; ++attempt) {
      shifted = pencil.K - sigma * pencil.M;
      shifted.makeCompressed();
      lu.compute(shifted);
      if (lu.info() == Eigen::Success) {
        factored = true;
        break;
      }
      if (attempt == 3) break;
      sigma *= 0.5;
      ++inf.factorization_retries;
    }
    if (!factored) {
      throw EigenSolverError("shift-invert: factorization of K - sigma M failed after 3 retries (last sigma " +
                             std::to_string(sigma) + "); try a different shift");
    }
    inf.sigma = sigma;
    try {
      ShiftInvertIteration it(pencil, parts, request, sigma, lu, inf);
      return it.run();
    } catch (const NeedsReshift& r) {
      if (reshift >= 8 || !(r.kappa > 0.0)) throw EigenSolverError("shift-invert: could not place the shift below the spectrum");
      sigma = -0.5 * r.kappa;
    }
  }
}

std::vector<EigenSolution> solve_eigenproblem(const SystemPencil& pencil, const EigenRequest& request, SolveInfo* info) {
  if (pencil.layout.total() <= request.dense_threshold) {
    if (info) {
      *info = SolveInfo{};
      info->dense = true;
    }
    return solve_dense(pencil, request.nev);
  }
  return solve_shift_invert(pencil, request, info);
}

}  // namespace lameeig
