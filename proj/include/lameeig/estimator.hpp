#pragma once

#include <span>
#include <vector>

#include "lameeig/assembly.hpp"
#include "lameeig/eigsolver.hpp"
#include "lameeig/femspace.hpp"
#include "lameeig/mesh.hpp"

namespace lameeig {

/// Squared L2(T) norms of the three strong-form residuals:
///   R1 = kappa u - grad p - sqrt(mu) curl omega
///   R2 = sqrt(mu) curl u - omega
///   R3 = p / (2 mu + lambda) + div u
struct CellResiduals {
  double r1 = 0.0;
  double r2 = 0.0;
  double r3 = 0.0;
};

CellResiduals cell_residuals(const Mesh& mesh, const SpaceTriple& spaces, const MaterialParams& params,
                             const EigenSolution& solution, int cell);

/// ||J_e||^2 over facet e with J_e = 1/2 [p n + sqrt(mu) omega x n], n pointing
/// from facet.plus to facet.minus (the reverse when `flip`). In 2D, omega x n
/// is (-omega n2, omega n1). Zero on boundary facets.
double facet_jump(const Mesh& mesh, const SpaceTriple& spaces, const MaterialParams& params,
                  const EigenSolution& solution, int facet, bool flip = false);

struct FacetJump {
  double h_e = 0.0;
  double norm_sq = 0.0;
};

/// The four addends of zeta_T^2, already weighted.
struct LocalIndicator {
  double volume = 0.0;      // h_T^2 / mu ||R1||^2
  double rotation = 0.0;    // ||R2||^2
  double divergence = 0.0;  // mu (2 mu + lambda) / (3 mu + lambda) ||R3||^2
  double jumps = 0.0;       // sum over interior facets of T of h_e / mu ||J_e||^2

  [[nodiscard]] double total() const { return volume + rotation + divergence + jumps; }
};

LocalIndicator local_estimator(const CellResiduals& residuals, std::span<const FacetJump> jumps, double h_T,
                               const MaterialParams& params);

/// sqrt of the sum of the per-cell zeta_T^2.
double global_estimator(std::span<const double> zeta_sq);

struct EstimatorField {
  std::vector<LocalIndicator> cells;
  /// ||J_e||^2 per facet (0 on the boundary).
  std::vector<double> facet_jump_sq;
  double zeta = 0.0;

  [[nodiscard]] std::vector<double> zeta_sq() const;
};

struct EstimatorOptions {
  int threads = 1;
};

/// Estimator for one eigenpair.
EstimatorField estimate(const Mesh& mesh, const SpaceTriple& spaces, const MaterialParams& params,
                        const EigenSolution& solution, const EstimatorOptions& options = {});

/// Sum of the per-pair fields (per-cell and per-facet addends add up, zeta is
/// recomputed from the summed zeta_T^2).
EstimatorField estimate(const Mesh& mesh, const SpaceTriple& spaces, const MaterialParams& params,
                        std::span<const EigenSolution> solutions, const EstimatorOptions& options = {});

}  // namespace lameeig
