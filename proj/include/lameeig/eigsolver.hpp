#pragma once

#include <Eigen/Core>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lameeig/assembly.hpp"

namespace lameeig {

struct EigenRequest {
  int nev = 1;
  /// Shift in pencil coordinates (theta = -kappa); must be negative. Unset:
  /// a small negative shift derived from the matrix scales.
  std::optional<double> sigma;
  /// Bound on |K x + kappa M x| / |K x|.
  double tolerance = 1e-9;
  /// Maximum number of restarts of the Krylov iteration.
  int max_iterations = 300;
  /// Total dof count up to which solve_eigenproblem takes the dense path.
  Eigen::Index dense_threshold = 3000;
  int block_size = 3;
  /// Krylov basis size before a restart; 0 picks a size from nev and block_size.
  int subspace_size = 0;
  unsigned seed = 20240611;
};

struct NormalizationRecord {
  /// Factor applied to the raw solver vector.
  double scale = 1.0;
  bool sign_flipped = false;
};

struct EigenSolution {
  double kappa = 0.0;
  Eigen::VectorXd u;
  Eigen::VectorXd rot;
  Eigen::VectorXd p;
  double residual = 0.0;
  NormalizationRecord normalization;

  /// Coefficients stacked as (u, rot, p).
  [[nodiscard]] Eigen::VectorXd stacked() const;
};

class EigenSolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The iteration stopped before all requested pairs met the tolerance.
class ConvergenceError : public EigenSolverError {
 public:
  ConvergenceError(const std::string& what, std::vector<EigenSolution> converged)
      : EigenSolverError(what), converged_(std::move(converged)) {}
  [[nodiscard]] const std::vector<EigenSolution>& converged() const { return converged_; }

 private:
  std::vector<EigenSolution> converged_;
};

/// A candidate vector carries no displacement (pure rotation/pressure mode).
class SpuriousModeError : public EigenSolverError {
 public:
  using EigenSolverError::EigenSolverError;
};

struct SolveInfo {
  bool dense = false;
  double sigma = 0.0;
  int restarts = 0;
  int factorization_retries = 0;
  int operator_applications = 0;
};

/// |K x + kappa M x|_2 / |K x|_2.
double relative_residual(const SystemPencil& pencil, double kappa, const Eigen::VectorXd& x);

/// Dense solve through the displacement Schur complement; returns the nev
/// smallest kappa > 0 in ascending order, normalized.
std::vector<EigenSolution> solve_dense(const SystemPencil& pencil, int nev);

/// Shift-invert block Krylov iteration with thick restarts; same output
/// contract as solve_dense.
std::vector<EigenSolution> solve_shift_invert(const SystemPencil& pencil, const EigenRequest& request,
                                              SolveInfo* info = nullptr);

/// Dense path when the pencil is at most request.dense_threshold in size,
/// shift-invert otherwise.
std::vector<EigenSolution> solve_eigenproblem(const SystemPencil& pencil, const EigenRequest& request,
                                              SolveInfo* info = nullptr);

/// Scales so that u^T M_u u = 1 and the largest-magnitude displacement
/// coefficient is positive. Throws SpuriousModeError on a zero displacement.
EigenSolution normalize(EigenSolution solution, const SystemPencil& pencil);

}  // namespace lameeig
