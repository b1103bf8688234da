#include <sys/wait.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "lameeig/cli.hpp"

namespace fs = std::filesystem;
using namespace lameeig::cli;

namespace {

// Output directory per config: the plain --out for a single config, one
// subdirectory named after the config file otherwise.
std::vector<std::string> output_dirs(const std::vector<std::string>& configs, const std::string& out) {
  std::vector<std::string> dirs;
  std::map<std::string, int> seen;
  for (const auto& c : configs) {
    if (configs.size() == 1) {
      dirs.push_back(out);
      continue;
    }
    std::string stem = fs::path(c).stem().string();
    if (int n = seen[stem]++; n > 0) stem += "_" + std::to_string(n);
    dirs.push_back((fs::path(out) / stem).string());
  }
  return dirs;
}

// Worst exit code wins: config errors over failures over success.
int combine(int a, int b) {
  if (a == kExitConfig || b == kExitConfig) return kExitConfig;
  return std::max(a, b);
}

int solve_all(const std::vector<std::string>& configs, const std::string& out, int jobs) {
  const auto dirs = output_dirs(configs, out);
  if (jobs <= 1 || configs.size() == 1) {
    int status = kExitOk;
    for (std::size_t i = 0; i < configs.size(); ++i) {
      if (configs.size() > 1) std::cerr << "== " << configs[i] << '\n';
      status = combine(status, run_config(configs[i], dirs[i], std::cerr));
    }
    return status;
  }

  int status = kExitOk;
  std::map<pid_t, std::size_t> running;
  auto reap_one = [&] {
    int ws = 0;
    const pid_t pid = ::wait(&ws);
    if (pid <= 0) return;
    const std::size_t i = running.at(pid);
    running.erase(pid);
    const int code = WIFEXITED(ws) ? WEXITSTATUS(ws) : kExitFailure;
    if (code != kExitOk) std::cerr << configs[i] << ": exit " << code << '\n';
    status = combine(status, code);
  };
  for (std::size_t i = 0; i < configs.size(); ++i) {
    while (static_cast<int>(running.size()) >= jobs) reap_one();
    std::cout.flush();
    std::cerr.flush();
    const pid_t pid = ::fork();
    if (pid < 0) {
      std::cerr << "error: fork failed\n";
      status = combine(status, kExitFailure);
      break;
    }
    if (pid == 0) {
      const int code = run_config(configs[i], dirs[i], std::cerr);
      std::cerr.flush();
      ::_exit(code);
    }
    running.emplace(pid, i);
  }
  while (!running.empty()) reap_one();
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eigenfrequencies of the Navier-Lame problem in displacement-rotation-pressure form"};
  app.require_subcommand(1);

  std::vector<std::string> configs;
  std::string out = ".";
  int jobs = 1;
  auto* solve = app.add_subcommand("solve", "Run convergence studies and write CSV, JSON and optional VTK reports");
  solve->add_option("--config", configs, "Study config (JSON); repeat for several studies")->required();
  solve->add_option("--out", out, "Output directory")->capture_default_str();
  solve->add_option("--jobs", jobs, "Worker processes for several configs")->check(CLI::PositiveNumber);

  std::string export_config;
  std::string export_out = ".";
  int level = 0;
  auto* exp = app.add_subcommand("export-matrix", "Write K and M of one uniform level in Matrix Market format");
  exp->add_option("--config", export_config, "Study config (JSON)")->required();
  exp->add_option("--level", level, "Index into the config's levels list")->required();
  exp->add_option("--out", export_out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*solve) return solve_all(configs, out, jobs);
  return export_matrix(export_config, level, export_out, std::cerr);
}
