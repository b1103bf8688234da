#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lameeig/assembly.hpp"
#include "lameeig/eigsolver.hpp"
#include "lameeig/estimator.hpp"
#include "lameeig/mesh.hpp"

namespace lameeig {

/// Cells whose indicator zeta_T = sqrt(zeta_sq[T]) is at least theta times
/// the largest one. An all-zero field marks nothing. Throws for an empty
/// field or theta outside (0, 1].
std::vector<int> mark_cells(std::span<const double> zeta_sq, double theta = 0.5);

struct ConvergenceFit {
  enum class Model {
    PowerLaw,      // y = C x^t
    Extrapolation  // y = y_extr + C x^t
  };
  Model model = Model::PowerLaw;
  double C = 0.0;
  double t = 0.0;
  double extrapolated = 0.0;  // only for Model::Extrapolation
  /// Euclidean norm of the fit residual (in log space for PowerLaw).
  double residual = 0.0;
  /// Extrapolation only: residual above 10% of the data range.
  bool poor_fit = false;
  std::vector<std::string> warnings;
};

/// Least squares on log y = log C + t log x. Needs at least 3 points;
/// non-positive y values are dropped with a warning.
ConvergenceFit fit_order(std::span<const double> xs, std::span<const double> ys);

/// Fits y = y_extr + C x^t with t searched in [t_min, t_max] and (y_extr, C)
/// by linear least squares for each t. Needs at least 4 points.
ConvergenceFit extrapolate_eigenvalue(std::span<const double> xs, std::span<const double> ys, double t_min,
                                      double t_max);

/// |sqrt(kappa_h) - sqrt(kappa_ref)|; throws on negative input.
double eig_error(double kappa_h, double kappa_ref);

/// err / zeta^2; throws when zeta = 0 but err > 0.
double effectivity(double err, double zeta);

enum class Geometry { UnitSquare, SquareWithHole, LShape3D };

std::string to_string(Geometry g);
Geometry geometry_from_string(const std::string& name);

/// Uniform level `level` of a geometry: N = level for the unit square,
/// `level` uniform refinements of the density-`base_density` mesh otherwise.
Mesh build_level(Geometry g, int level, int base_density = 2);

struct StudyRecord {
  int iter = 0;
  Eigen::Index dof = 0;
  double h_max = 0.0;
  int cells = 0;
  std::vector<double> kappa;
  double zeta = 0.0;
  std::vector<std::optional<double>> err;
  std::vector<std::optional<double>> eff;
  double seconds = 0.0;
};

enum class StudyMode { Uniform, Adaptive };

struct StudySettings {
  Geometry geometry = Geometry::UnitSquare;
  StudyMode mode = StudyMode::Uniform;
  int k = 1;
  MaterialParams params;
  int nev = 1;
  /// Uniform: one mesh per entry (see build_level). Adaptive: the first
  /// entry is the initial mesh.
  std::vector<int> levels{4};
  int base_density = 2;
  int max_iter = 10;
  Eigen::Index max_dof = 200000;
  double theta = 0.5;
  EigenRequest solver;
  /// Reference kappas for err; extrapolated from the study when absent.
  std::optional<std::vector<double>> reference_kappas;
  /// Extrapolate sqrt(kappa) instead of kappa.
  bool extrapolate_sqrt = false;
  /// Estimator over all requested pairs instead of the lowest one.
  bool estimate_all_pairs = false;
  int threads = 1;
};

/// Where the reference eigenvalues of a study came from.
struct ReferenceInfo {
  std::vector<double> kappas;
  /// "user", "extrapolation" (three-parameter fit), "richardson" (two finest
  /// levels, assumed rate) or "none".
  std::string provenance = "none";
  std::vector<ConvergenceFit> fits;
};

struct StudyResult {
  std::vector<StudyRecord> records;
  ReferenceInfo reference;
  /// Fit of err_i against h (uniform) or dof (adaptive), per eigenvalue, when
  /// at least 3 records carry an error.
  std::vector<std::optional<ConvergenceFit>> error_fits;
  std::optional<ConvergenceFit> estimator_fit;
  std::vector<std::string> notices;
  /// Set when a level failed; records before it are kept.
  std::optional<std::string> error;
};

/// Called after each level with the mesh, the solved pairs and the estimator.
using LevelCallback = std::function<void(const StudyRecord&, const Mesh&, const std::vector<EigenSolution>&,
                                         const EstimatorField&)>;

/// Uniform or adaptive study according to settings.mode.
StudyResult run_study(const StudySettings& settings, const LevelCallback& on_level = {});

/// Solve, estimate, mark, refine until max_iter records exist, the next mesh
/// would exceed max_dof, or nothing is marked.
StudyResult adaptive_loop(const StudySettings& settings, const LevelCallback& on_level = {});

/// Reference values and err/eff columns for finished records.
void finalize_study(const StudySettings& settings, StudyResult& result);

/// Abscissa used for fits: h_max for uniform studies, dof for adaptive ones.
double fit_abscissa(const StudySettings& settings, const StudyRecord& r);

}  // namespace lameeig
