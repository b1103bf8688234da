#include "lameeig/adaptivity.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lameeig {

std::vector<int> mark_cells(std::span<const double> zeta_sq, double theta) {
  if (zeta_sq.empty()) throw std::invalid_argument("mark_cells: empty estimator field");
  if (!(theta > 0.0 && theta <= 1.0)) throw std::invalid_argument("mark_cells: theta must lie in (0, 1]");
  double top = 0.0;
  for (double z : zeta_sq) top = std::max(top, std::sqrt(z));
  std::vector<int> marked;
  if (!(top > 0.0)) return marked;
  const double bar = theta * top;
  for (std::size_t c = 0; c < zeta_sq.size(); ++c) {
    if (std::sqrt(zeta_sq[c]) >= bar) marked.push_back(static_cast<int>(c));
  }
  return marked;
}

ConvergenceFit fit_order(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("fit_order: size mismatch");
  if (xs.size() < 3) throw std::invalid_argument("fit_order: at least 3 levels are needed");
  ConvergenceFit fit;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0)) throw std::invalid_argument("fit_order: abscissae must be positive");
    if (!(ys[i] > 0.0)) {
      fit.warnings.push_back("level " + std::to_string(i) + " dropped: non-positive value");
      continue;
    }
    lx.push_back(std::log(xs[i]));
    ly.push_back(std::log(ys[i]));
  }
  if (lx.size() < 2) throw std::invalid_argument("fit_order: fewer than 2 positive values remain");
  const Eigen::Index n = static_cast<Eigen::Index>(lx.size());
  Eigen::MatrixXd A(n, 2);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = lx[i];
    b[i] = ly[i];
  }
  const Eigen::Vector2d sol = A.colPivHouseholderQr().solve(b);
  fit.C = std::exp(sol[0]);
  fit.t = sol[1];
  fit.residual = (A * sol - b).norm();
  return fit;
}

namespace {

struct LinearFit {
  double a = 0.0;
  double c = 0.0;
  double residual = 0.0;
};

// y ~ a + c x^t in the least-squares sense.
LinearFit fit_at(std::span<const double> xs, std::span<const double> ys, double t) {
  const Eigen::Index n = static_cast<Eigen::Index>(xs.size());
  Eigen::MatrixXd A(n, 2);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = std::pow(xs[i], t);
    b[i] = ys[i];
  }
  const Eigen::Vector2d s = A.colPivHouseholderQr().solve(b);
  return {s[0], s[1], (A * s - b).norm()};
}

}  // namespace

ConvergenceFit extrapolate_eigenvalue(std::span<const double> xs, std::span<const double> ys, double t_min,
                                      double t_max) {
  if (xs.size() != ys.size()) throw std::invalid_argument("extrapolate_eigenvalue: size mismatch");
  if (xs.size() < 4) throw std::invalid_argument("extrapolate_eigenvalue: at least 4 levels are needed");
  if (!(t_min > 0.0 && t_max > t_min)) throw std::invalid_argument("extrapolate_eigenvalue: bad exponent range");
  for (double x : xs) {
    if (!(x > 0.0)) throw std::invalid_argument("extrapolate_eigenvalue: abscissae must be positive");
  }
  // Coarse scan, then Brent on the bracket around the best grid point.
  constexpr int kGrid = 200;
  const double step = (t_max - t_min) / kGrid;
  int best = 0;
  double best_res = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kGrid; ++i) {
    const double r = fit_at(xs, ys, t_min + i * step).residual;
    if (r < best_res) {
      best_res = r;
      best = i;
    }
  }
  const double lo = t_min + std::max(best - 1, 0) * step;
  const double hi = t_min + std::min(best + 1, kGrid) * step;
  double t = boost::math::tools::brent_find_minima([&](double tt) { return fit_at(xs, ys, tt).residual; }, lo, hi,
                                                    std::numeric_limits<double>::digits / 2)
                 .first;
  LinearFit lf = fit_at(xs, ys, t);

  // The residual norm is flat (or V-shaped on exact data) near the optimum,
  // so Brent alone stops around sqrt(eps); polish all three parameters with
  // Gauss-Newton and keep the result only if it improves the fit.
  {
    const Eigen::Index n = static_cast<Eigen::Index>(xs.size());
    Eigen::Vector3d p(lf.a, lf.c, t);
    double best_r = lf.residual;
    Eigen::Vector3d best_p = p;
    for (int it = 0; it < 30; ++it) {
      Eigen::MatrixXd J(n, 3);
      Eigen::VectorXd r(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double xt = std::pow(xs[i], p[2]);
        r[i] = p[0] + p[1] * xt - ys[i];
        J(i, 0) = 1.0;
        J(i, 1) = xt;
        J(i, 2) = p[1] * xt * std::log(xs[i]);
      }
      const Eigen::Vector3d step = J.colPivHouseholderQr().solve(-r);
      if (!step.allFinite()) break;
      p += step;
      if (!(p[2] >= t_min && p[2] <= t_max)) break;
      const LinearFit trial = fit_at(xs, ys, p[2]);
      if (trial.residual <= best_r) {
        best_r = trial.residual;
        best_p = Eigen::Vector3d(trial.a, trial.c, p[2]);
      }
      if (step.norm() <= 1e-15 * (1.0 + p.norm())) break;
    }
    t = best_p[2];
    lf = fit_at(xs, ys, t);
  }

  ConvergenceFit fit;
  fit.model = ConvergenceFit::Model::Extrapolation;
  fit.t = t;
  fit.C = lf.c;
  fit.extrapolated = lf.a;
  fit.residual = lf.residual;
  const auto [ymin, ymax] = std::minmax_element(ys.begin(), ys.end());
  const double range = *ymax - *ymin;
  fit.poor_fit = lf.residual > 0.1 * range;
  if (fit.poor_fit) fit.warnings.push_back("extrapolation residual exceeds 10% of the data range");
  // Monotonicity along increasing abscissa.
  bool monotone_down = true, monotone_up = true;
  std::vector<std::size_t> order(xs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (ys[order[i]] < ys[order[i - 1]]) monotone_up = false;
    if (ys[order[i]] > ys[order[i - 1]]) monotone_down = false;
  }
  if (!monotone_up && !monotone_down) fit.warnings.push_back("non-monotone sequence");
  if (t <= t_min + 1e-6 || t >= t_max - 1e-6) fit.warnings.push_back("exponent at the edge of the search range");
  return fit;
}

double eig_error(double kappa_h, double kappa_ref) {
  if (kappa_h < 0.0 || kappa_ref < 0.0) throw std::invalid_argument("eig_error: eigenvalues must be non-negative");
  return std::abs(std::sqrt(kappa_h) - std::sqrt(kappa_ref));
}

double effectivity(double err, double zeta) {
  if (err == 0.0) return 0.0;
  if (!(zeta > 0.0)) throw std::domain_error("effectivity: zero estimator with a nonzero error");
  return err / (zeta * zeta);
}

std::string to_string(Geometry g) {
  switch (g) {
    case Geometry::UnitSquare:
      return "unit_square";
    case Geometry::SquareWithHole:
      return "square_with_hole";
    case Geometry::LShape3D:
      return "lshape_3d";
  }
  return "?";
}

Geometry geometry_from_string(const std::string& name) {
  if (name == "unit_square") return Geometry::UnitSquare;
  if (name == "square_with_hole") return Geometry::SquareWithHole;
  if (name == "lshape_3d") return Geometry::LShape3D;
  throw std::invalid_argument("unknown geometry '" + name + "'");
}

Mesh build_level(Geometry g, int level, int base_density) {
  if (g == Geometry::UnitSquare) return build_unit_square(level);
  if (level < 0) throw std::invalid_argument("build_level: negative refinement count");
  Mesh m = g == Geometry::SquareWithHole ? build_square_with_hole(base_density) : build_lshape_3d(base_density);
  for (int i = 0; i < level; ++i) m = uniform_refine(m);
  return m;
}

double fit_abscissa(const StudySettings& settings, const StudyRecord& r) {
  return settings.mode == StudyMode::Uniform ? r.h_max : static_cast<double>(r.dof);
}

namespace {

int mesh_dim(Geometry g) { return g == Geometry::LShape3D ? 3 : 2; }

// Length-like abscissa for extrapolation: h_max (uniform) or dof^(-1/dim).
double extrapolation_abscissa(const StudySettings& s, const StudyRecord& r) {
  if (s.mode == StudyMode::Uniform) return r.h_max;
  return std::pow(static_cast<double>(r.dof), -1.0 / mesh_dim(s.geometry));
}

class LevelSolver {
 public:
  explicit LevelSolver(const StudySettings& s) : s_(s) {}

  void solve(const Mesh& mesh, const SpaceTriple& spaces, int iter, StudyResult& result, const LevelCallback& cb) {
    const auto start = std::chrono::steady_clock::now();
    const SystemPencil P = assemble_pencil(mesh, spaces, s_.params, AssemblyOptions{s_.threads});
    std::vector<EigenSolution> pairs;
    EigenRequest req = s_.solver;
    req.nev = s_.nev;
    if (!req.sigma && sigma_) req.sigma = sigma_;
    if (!req.sigma && P.layout.total() <= req.dense_threshold) {
      pairs = solve_dense(P, s_.nev);
    } else {
      pairs = solve_eigenproblem(P, req);
    }
    // Shift for the finer levels: half the smallest eigenvalue of the coarsest.
    if (!sigma_) sigma_ = -0.5 * pairs.front().kappa;

    EstimatorOptions eo;
    eo.threads = s_.threads;
    const EstimatorField field =
        s_.estimate_all_pairs ? estimate(mesh, spaces, s_.params, std::span<const EigenSolution>(pairs), eo)
                              : estimate(mesh, spaces, s_.params, pairs.front(), eo);

    StudyRecord r;
    r.iter = iter;
    r.dof = P.layout.total();
    r.h_max = mesh.max_diameter();
    r.cells = mesh.num_cells();
    for (const auto& e : pairs) r.kappa.push_back(e.kappa);
    r.zeta = field.zeta;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.records.push_back(r);
    last_field_ = field;
    if (cb) cb(result.records.back(), mesh, pairs, field);
  }

  [[nodiscard]] const EstimatorField& last_field() const { return last_field_; }

 private:
  const StudySettings& s_;
  std::optional<double> sigma_;
  EstimatorField last_field_;
};

void check_settings(const StudySettings& s) {
  if (s.nev < 1) throw std::invalid_argument("study: nev must be at least 1");
  if (s.k < 1 || s.k > 3) throw std::invalid_argument("study: k must be 1, 2 or 3");
  if (s.levels.empty()) throw std::invalid_argument("study: no levels given");
  if (s.mode == StudyMode::Adaptive && s.max_iter < 1) throw std::invalid_argument("study: max_iter must be positive");
}

}  // namespace

StudyResult adaptive_loop(const StudySettings& settings, const LevelCallback& on_level) {
  check_settings(settings);
  StudyResult result;
  LevelSolver solver(settings);
  Mesh mesh = build_level(settings.geometry, settings.levels.front(), settings.base_density);
  for (int iter = 0;; ++iter) {
    const SpaceTriple spaces(mesh, settings.k);
    if (iter > 0 && spaces.layout().total() > settings.max_dof) {
      result.notices.push_back("stopped: next mesh has " + std::to_string(spaces.layout().total()) +
                               " dofs, above max_dof");
      break;
    }
    try {
      solver.solve(mesh, spaces, iter, result, on_level);
    } catch (const std::exception& e) {
      result.error = "iteration " + std::to_string(iter) + ": " + e.what();
      break;
    }
    if (static_cast<int>(result.records.size()) >= settings.max_iter) break;
    if (result.records.back().dof >= settings.max_dof) {
      result.notices.push_back("stopped: max_dof reached");
      break;
    }
    const std::vector<double> z = solver.last_field().zeta_sq();
    const std::vector<int> marked = mark_cells(z, settings.theta);
    if (marked.empty()) {
      result.notices.push_back("stopped: estimator vanishes, nothing to mark");
      break;
    }
    mesh = refine_marked(mesh, marked);
  }
  finalize_study(settings, result);
  return result;
}

StudyResult run_study(const StudySettings& settings, const LevelCallback& on_level) {
  if (settings.mode == StudyMode::Adaptive) return adaptive_loop(settings, on_level);
  check_settings(settings);
  StudyResult result;
  LevelSolver solver(settings);
  for (std::size_t i = 0; i < settings.levels.size(); ++i) {
    try {
      const Mesh mesh = build_level(settings.geometry, settings.levels[i], settings.base_density);
      const SpaceTriple spaces(mesh, settings.k);
      solver.solve(mesh, spaces, static_cast<int>(i), result, on_level);
    } catch (const std::exception& e) {
      result.error = "level " + std::to_string(i) + ": " + e.what();
      break;
    }
  }
  finalize_study(settings, result);
  return result;
}

void finalize_study(const StudySettings& settings, StudyResult& result) {
  auto& recs = result.records;
  const int nev = settings.nev;
  ReferenceInfo& ref = result.reference;
  ref = ReferenceInfo{};
  result.error_fits.assign(nev, std::nullopt);
  result.estimator_fit.reset();
  if (recs.empty()) return;

  const auto value = [&](double kappa) { return settings.extrapolate_sqrt ? std::sqrt(kappa) : kappa; };
  const auto back = [&](double v) { return settings.extrapolate_sqrt ? v * v : v; };

  if (settings.reference_kappas) {
    ref.kappas = *settings.reference_kappas;
    ref.provenance = "user";
  } else if (recs.size() >= 4) {
    ref.provenance = "extrapolation";
    std::vector<double> xs;
    for (const auto& r : recs) xs.push_back(extrapolation_abscissa(settings, r));
    for (int i = 0; i < nev; ++i) {
      std::vector<double> ys;
      for (const auto& r : recs) ys.push_back(value(r.kappa[i]));
      ConvergenceFit f = extrapolate_eigenvalue(xs, ys, 0.5, 2.0 * settings.k + 1.0);
      ref.kappas.push_back(back(f.extrapolated));
      ref.fits.push_back(std::move(f));
    }
  } else if (recs.size() >= 2) {
    // Two finest levels with the rate 2k expected for smooth eigenfunctions.
    ref.provenance = "richardson";
    const StudyRecord& a = recs[recs.size() - 2];
    const StudyRecord& b = recs.back();
    const double q = std::pow(extrapolation_abscissa(settings, b) / extrapolation_abscissa(settings, a), 2.0 * settings.k);
    for (int i = 0; i < nev; ++i) {
      const double va = value(a.kappa[i]);
      const double vb = value(b.kappa[i]);
      ref.kappas.push_back(back((vb - q * va) / (1.0 - q)));
    }
  }

  for (auto& r : recs) {
    r.err.assign(nev, std::nullopt);
    r.eff.assign(nev, std::nullopt);
    for (int i = 0; i < nev && i < static_cast<int>(ref.kappas.size()); ++i) {
      if (!(ref.kappas[i] >= 0.0)) continue;
      const double e = eig_error(r.kappa[i], ref.kappas[i]);
      r.err[i] = e;
      if (r.zeta > 0.0) r.eff[i] = effectivity(e, r.zeta);
    }
  }

  if (recs.size() >= 3) {
    std::vector<double> xs, zs;
    for (const auto& r : recs) {
      xs.push_back(fit_abscissa(settings, r));
      zs.push_back(r.zeta);
    }
    result.estimator_fit = fit_order(xs, zs);
    for (int i = 0; i < nev; ++i) {
      std::vector<double> ex, ey;
      for (const auto& r : recs) {
        if (!r.err[i]) continue;
        ex.push_back(fit_abscissa(settings, r));
        ey.push_back(*r.err[i]);
      }
      if (ex.size() < 3) continue;
      std::size_t positive = 0;
      for (double v : ey) positive += v > 0.0 ? 1 : 0;
      if (positive < 2) continue;
      result.error_fits[i] = fit_order(ex, ey);
    }
  }
}

}  // namespace lameeig
