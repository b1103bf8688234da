#include "lameeig/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "lameeig/parallel.hpp"

namespace lameeig::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Collects every problem before reporting, so one run lists all bad keys.
class Checker {
 public:
  explicit Checker(const json& doc) : doc_(doc) {}

  void fail(const std::string& key, const std::string& why) {
    keys_.push_back(key);
    messages_.push_back(key + ": " + why);
  }

  [[nodiscard]] bool has(const std::string& key) const { return doc_.contains(key); }

  template <typename T>
  T get(const std::string& key, const T& fallback, bool required = false) {
    if (!doc_.contains(key)) {
      if (required) fail(key, "missing");
      return fallback;
    }
    try {
      return doc_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(key, "wrong type");
      return fallback;
    }
  }

  [[nodiscard]] double number(const std::string& key, double fallback, bool required = false) {
    if (!doc_.contains(key)) {
      if (required) fail(key, "missing");
      return fallback;
    }
    if (!doc_.at(key).is_number()) {
      fail(key, "expected a number");
      return fallback;
    }
    return doc_.at(key).get<double>();
  }

  [[nodiscard]] long long integer(const std::string& key, long long fallback, bool required = false) {
    if (!doc_.contains(key)) {
      if (required) fail(key, "missing");
      return fallback;
    }
    if (!doc_.at(key).is_number_integer()) {
      fail(key, "expected an integer");
      return fallback;
    }
    return doc_.at(key).get<long long>();
  }

  void unknown_keys(const std::set<std::string>& allowed, const std::string& prefix = "") {
    for (const auto& [k, v] : doc_.items()) {
      if (!allowed.count(k)) fail(prefix + k, "unknown key");
    }
  }

  void merge(Checker& inner, const std::string& prefix) {
    for (const auto& k : inner.keys_) keys_.push_back(prefix + k);
    for (const auto& m : inner.messages_) messages_.push_back(prefix + m);
  }

  void throw_if_failed() const {
    if (keys_.empty()) return;
    std::string what = "invalid config:";
    for (const auto& m : messages_) what += "\n  " + m;
    throw ConfigError(what, keys_);
  }

 private:
  const json& doc_;
  std::vector<std::string> keys_;
  std::vector<std::string> messages_;
};

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json fit_json(const ConvergenceFit& f) {
  json j;
  j["model"] = f.model == ConvergenceFit::Model::PowerLaw ? "power_law" : "extrapolation";
  j["t"] = f.t;
  j["C"] = f.C;
  if (f.model == ConvergenceFit::Model::Extrapolation) {
    j["kappa_extr"] = f.extrapolated;
    j["poor_fit"] = f.poor_fit;
  }
  j["residual"] = f.residual;
  j["warnings"] = f.warnings;
  return j;
}

}  // namespace

StudyConfig parse_config(const json& doc) {
  if (!doc.is_object() || doc.empty()) {
    throw ConfigError("invalid config: expected a non-empty JSON object with at least geometry, mode, k, nu, nev",
                      {"geometry", "mode", "k", "nu", "nev"});
  }
  Checker ck(doc);
  ck.unknown_keys({"name", "description", "geometry", "mode", "k", "nu", "E", "alpha_inv", "nev", "levels",
                   "base_density", "max_iter", "max_dof", "theta", "reference_kappas", "extrapolate_sqrt",
                   "estimate_all_pairs", "max_nu", "solver", "output"});

  StudyConfig cfg;
  StudySettings& s = cfg.settings;

  const std::string geometry = ck.get<std::string>("geometry", "unit_square", true);
  try {
    s.geometry = geometry_from_string(geometry);
  } catch (const std::invalid_argument&) {
    ck.fail("geometry", "expected unit_square, square_with_hole or lshape_3d");
  }
  const int dim = s.geometry == Geometry::LShape3D ? 3 : 2;

  const std::string mode = ck.get<std::string>("mode", "uniform", true);
  if (mode == "uniform") {
    s.mode = StudyMode::Uniform;
  } else if (mode == "adaptive") {
    s.mode = StudyMode::Adaptive;
  } else {
    ck.fail("mode", "expected uniform or adaptive");
  }

  s.k = static_cast<int>(ck.integer("k", 1, true));
  if (s.k < 1 || s.k > 3) ck.fail("k", "must be 1, 2 or 3");
  if (dim == 3 && s.k != 1) ck.fail("k", "three-dimensional geometries support k = 1 only");

  const double max_nu = ck.number("max_nu", kDefaultMaxPoisson);
  const double nu = ck.number("nu", 0.35, true);
  const double E = ck.number("E", 1.0);
  std::optional<double> alpha;
  if (ck.has("alpha_inv")) {
    const json& a = doc.at("alpha_inv");
    if (a.is_string() && a.get<std::string>() == "auto") {
      // resolved below
    } else if (a.is_number() && a.get<double>() >= 0.0) {
      alpha = a.get<double>();
    } else {
      ck.fail("alpha_inv", "expected \"auto\" or a non-negative number");
    }
  }
  try {
    s.params = make_material(dim, E, nu, alpha, max_nu);
  } catch (const std::invalid_argument& e) {
    ck.fail(E > 0.0 ? "nu" : "E", e.what());
  }

  s.nev = static_cast<int>(ck.integer("nev", 1, true));
  if (s.nev < 1) ck.fail("nev", "must be at least 1");

  s.base_density = static_cast<int>(ck.integer("base_density", 2));
  if (s.base_density < 1) ck.fail("base_density", "must be at least 1");

  const std::vector<int> default_levels =
      s.mode == StudyMode::Adaptive ? std::vector<int>{s.geometry == Geometry::UnitSquare ? 4 : 0}
                                    : std::vector<int>{};
  s.levels = ck.get<std::vector<int>>("levels", default_levels, s.mode == StudyMode::Uniform);
  if (ck.has("levels") && s.levels.empty()) ck.fail("levels", "must not be empty");
  for (int l : s.levels) {
    if (s.geometry == Geometry::UnitSquare ? l < 1 : l < 0) {
      ck.fail("levels", "unit_square levels are N >= 1, other geometries take refinement counts >= 0");
      break;
    }
  }
  if (s.mode == StudyMode::Adaptive && s.levels.size() > 1) ck.fail("levels", "adaptive studies take one initial level");

  s.max_iter = static_cast<int>(ck.integer("max_iter", 10));
  if (s.max_iter < 1) ck.fail("max_iter", "must be positive");
  s.max_dof = static_cast<Eigen::Index>(ck.integer("max_dof", 200000));
  if (s.max_dof < 1) ck.fail("max_dof", "must be positive");
  s.theta = ck.number("theta", 0.5);
  if (!(s.theta > 0.0 && s.theta <= 1.0)) ck.fail("theta", "must lie in (0, 1]");

  if (ck.has("reference_kappas")) {
    const auto ref = ck.get<std::vector<double>>("reference_kappas", {});
    bool ok = !ref.empty();
    for (double v : ref) ok = ok && v > 0.0;
    if (!ok) {
      ck.fail("reference_kappas", "expected a list of positive numbers");
    } else {
      s.reference_kappas = ref;
    }
  }
  s.extrapolate_sqrt = ck.get<bool>("extrapolate_sqrt", false);
  s.estimate_all_pairs = ck.get<bool>("estimate_all_pairs", false);

  json solver_echo = json::object();
  if (ck.has("solver")) {
    const json& sj = doc.at("solver");
    if (!sj.is_object()) {
      ck.fail("solver", "expected an object");
    } else {
      Checker sc(sj);
      sc.unknown_keys({"sigma", "tolerance", "dense_threshold", "max_iterations", "block_size", "subspace_size"});
      if (sj.contains("sigma")) {
        const double sigma = sc.number("sigma", -1.0);
        if (!(sigma < 0.0)) sc.fail("sigma", "must be negative (the shift targets theta = -kappa)");
        s.solver.sigma = sigma;
      }
      s.solver.tolerance = sc.number("tolerance", s.solver.tolerance);
      if (!(s.solver.tolerance > 0.0)) sc.fail("tolerance", "must be positive");
      s.solver.dense_threshold = static_cast<Eigen::Index>(sc.integer("dense_threshold", s.solver.dense_threshold));
      s.solver.max_iterations = static_cast<int>(sc.integer("max_iterations", s.solver.max_iterations));
      s.solver.block_size = static_cast<int>(sc.integer("block_size", s.solver.block_size));
      if (s.solver.block_size < 1) sc.fail("block_size", "must be positive");
      s.solver.subspace_size = static_cast<int>(sc.integer("subspace_size", s.solver.subspace_size));
      ck.merge(sc, "solver.");
    }
  }

  if (ck.has("output")) {
    const json& oj = doc.at("output");
    if (!oj.is_object()) {
      ck.fail("output", "expected an object");
    } else {
      Checker oc(oj);
      oc.unknown_keys({"csv", "json", "vtk", "vtk_prefix", "record_time"});
      cfg.output.csv = oc.get<std::string>("csv", cfg.output.csv);
      cfg.output.json = oc.get<std::string>("json", cfg.output.json);
      cfg.output.vtk = oc.get<bool>("vtk", cfg.output.vtk);
      cfg.output.vtk_prefix = oc.get<std::string>("vtk_prefix", cfg.output.vtk_prefix);
      cfg.output.record_time = oc.get<bool>("record_time", cfg.output.record_time);
      ck.merge(oc, "output.");
    }
  }
  ck.throw_if_failed();

  s.threads = configured_threads();

  json& r = cfg.resolved;
  if (doc.contains("name")) r["name"] = doc.at("name");
  if (doc.contains("description")) r["description"] = doc.at("description");
  r["geometry"] = to_string(s.geometry);
  r["mode"] = s.mode == StudyMode::Uniform ? "uniform" : "adaptive";
  r["k"] = s.k;
  r["nu"] = s.params.poisson_nu;
  r["E"] = s.params.young_E;
  r["alpha_inv"] = s.params.alpha_inv;
  r["mu_s"] = s.params.mu_s;
  r["lambda_s"] = s.params.lambda_s;
  r["max_nu"] = max_nu;
  r["nev"] = s.nev;
  r["levels"] = s.levels;
  r["base_density"] = s.base_density;
  r["max_iter"] = s.max_iter;
  r["max_dof"] = s.max_dof;
  r["theta"] = s.theta;
  r["reference_kappas"] = s.reference_kappas ? json(*s.reference_kappas) : json(nullptr);
  r["extrapolate_sqrt"] = s.extrapolate_sqrt;
  r["estimate_all_pairs"] = s.estimate_all_pairs;
  solver_echo["sigma"] = s.solver.sigma ? json(*s.solver.sigma) : json("auto");
  solver_echo["tolerance"] = s.solver.tolerance;
  solver_echo["dense_threshold"] = s.solver.dense_threshold;
  solver_echo["max_iterations"] = s.solver.max_iterations;
  solver_echo["block_size"] = s.solver.block_size;
  solver_echo["subspace_size"] = s.solver.subspace_size;
  r["solver"] = solver_echo;
  r["output"] = {{"csv", cfg.output.csv},
                 {"json", cfg.output.json},
                 {"vtk", cfg.output.vtk},
                 {"vtk_prefix", cfg.output.vtk_prefix},
                 {"record_time", cfg.output.record_time}};
  return cfg;
}

StudyConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'", {});
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    return parse_config(json::object());
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what(), {});
  }
  return parse_config(doc);
}

void write_csv(std::ostream& out, const StudyResult& result, const StudyConfig& config) {
  const int nev = config.settings.nev;
  out << "iter,dof,h_max,cells";
  for (int i = 1; i <= nev; ++i) out << ",kappa_" << i;
  out << ",zeta";
  for (int i = 1; i <= nev; ++i) out << ",err_" << i;
  for (int i = 1; i <= nev; ++i) out << ",eff_" << i;
  out << ",seconds\n";
  for (const StudyRecord& r : result.records) {
    out << r.iter << ',' << r.dof << ',' << format_double(r.h_max) << ',' << r.cells;
    for (int i = 0; i < nev; ++i) out << ',' << format_double(r.kappa[i]);
    out << ',' << format_double(r.zeta);
    for (int i = 0; i < nev; ++i) {
      out << ',';
      if (i < static_cast<int>(r.err.size()) && r.err[i]) out << format_double(*r.err[i]);
    }
    for (int i = 0; i < nev; ++i) {
      out << ',';
      if (i < static_cast<int>(r.eff.size()) && r.eff[i]) out << format_double(*r.eff[i]);
    }
    out << ',';
    if (config.output.record_time) out << format_double(r.seconds);
    out << '\n';
  }
}

json summary_json(const StudyResult& result, const StudyConfig& config) {
  json j;
  j["config"] = config.resolved;
  j["levels"] = result.records.size();
  j["fit_abscissa"] = config.settings.mode == StudyMode::Uniform ? "h_max" : "dof";

  json ref;
  ref["provenance"] = result.reference.provenance;
  ref["kappas"] = result.reference.kappas;
  ref["quantity"] = config.settings.extrapolate_sqrt ? "sqrt_kappa" : "kappa";
  json fits = json::array();
  for (const auto& f : result.reference.fits) fits.push_back(fit_json(f));
  ref["fits"] = fits;
  j["reference"] = ref;

  json err_fits = json::array();
  for (const auto& f : result.error_fits) err_fits.push_back(f ? fit_json(*f) : json(nullptr));
  j["error_fits"] = err_fits;
  j["estimator_fit"] = result.estimator_fit ? fit_json(*result.estimator_fit) : json(nullptr);
  j["notices"] = result.notices;
  j["error"] = result.error ? json(*result.error) : json(nullptr);
  return j;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw std::out_of_range("no column '" + name + "'");
}

CsvTable read_csv(std::istream& in) {
  // Plain comma-separated fields; the reports never quote.
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  };
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) return t;
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split(line);
    if (row.size() != t.header.size()) throw std::runtime_error("csv: row width differs from the header");
    t.rows.push_back(std::move(row));
  }
  return t;
}

namespace {

bool write_outputs(const StudyResult& result, const StudyConfig& cfg, const fs::path& dir, std::ostream& log) {
  bool ok = true;
  {
    std::ofstream csv(dir / cfg.output.csv);
    if (!csv) {
      log << "error: cannot write " << (dir / cfg.output.csv).string() << '\n';
      ok = false;
    } else {
      write_csv(csv, result, cfg);
    }
  }
  std::ofstream js(dir / cfg.output.json);
  if (!js) {
    log << "error: cannot write " << (dir / cfg.output.json).string() << '\n';
    return false;
  }
  js << summary_json(result, cfg).dump(2) << '\n';
  return ok;
}

}  // namespace

int run_config(const std::string& config_path, const std::string& out_dir, std::ostream& log) {
  StudyConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    log << "error: cannot create output directory " << dir.string() << ": " << ec.message() << '\n';
    return kExitFailure;
  }

  LevelCallback on_level = [&](const StudyRecord& r, const Mesh& mesh, const std::vector<EigenSolution>&,
                               const EstimatorField& field) {
    log << "level " << r.iter << ": dof " << r.dof << ", kappa_1 " << format_double(r.kappa.front()) << ", zeta "
        << format_double(r.zeta) << '\n';
    if (cfg.output.vtk) {
      const std::vector<double> z = field.zeta_sq();
      write_vtk((dir / (cfg.output.vtk_prefix + "_" + std::to_string(r.iter) + ".vtk")).string(), mesh, z);
    }
  };

  StudyResult result;
  try {
    result = run_study(cfg.settings, on_level);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  for (const auto& n : result.notices) log << "note: " << n << '\n';
  const bool written = write_outputs(result, cfg, dir, log);
  if (result.error) {
    log << "error: " << *result.error << " (partial reports written)\n";
    return kExitFailure;
  }
  return written ? kExitOk : kExitFailure;
}

int export_matrix(const std::string& config_path, int level, const std::string& out_dir, std::ostream& log) {
  StudyConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  const StudySettings& s = cfg.settings;
  if (level < 0 || level >= static_cast<int>(s.levels.size())) {
    log << "error: level " << level << " out of range (config has " << s.levels.size() << " levels)\n";
    return kExitConfig;
  }
  try {
    const Mesh mesh = build_level(s.geometry, s.levels[level], s.base_density);
    const SpaceTriple spaces(mesh, s.k);
    const SystemPencil P = assemble_pencil(mesh, spaces, s.params, AssemblyOptions{s.threads});
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    const std::string stem = "level" + std::to_string(level);
    write_matrix_market((dir / (stem + "_K.mtx")).string(), P.K);
    write_matrix_market((dir / (stem + "_M.mtx")).string(), P.M);
    log << "wrote " << (dir / (stem + "_K.mtx")).string() << " and " << (dir / (stem + "_M.mtx")).string() << " ("
        << P.layout.n_u << " displacement, " << P.layout.n_rot << " rotation, " << P.layout.n_p
        << " pressure unknowns)\n";
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace lameeig::cli
