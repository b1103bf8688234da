#pragma once

#include <Eigen/SparseCore>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>

#include "lameeig/femspace.hpp"
#include "lameeig/mesh.hpp"

namespace lameeig {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, Eigen::Index>;

inline constexpr double kDefaultMaxPoisson = 0.4999;

struct MaterialParams {
  double young_E = 1.0;
  double poisson_nu = 0.25;
  double mu_s = 0.4;
  double lambda_s = 0.4;
  /// Pressure-jump stabilization weight; 0 disables it. It is relative to
  /// the pressure mass coefficient, see jump_weight.
  double alpha_inv = 0.0;
};

/// Coefficient in front of sum_e h_e int_e [p][q]: alpha_inv / (2 mu + lambda).
/// Measuring the penalty against the pressure mass term keeps it in the same
/// units, so eigenvalues stay linear in E with the stabilization on.
double jump_weight(const MaterialParams& params);

/// (mu_s, lambda_s) from Young's modulus and Poisson ratio. Throws for
/// E <= 0, nu <= 0 or nu > max_nu.
std::pair<double, double> lame_from_poisson(double E, double nu, double max_nu = kDefaultMaxPoisson);

/// Default stabilization: off for nu <= 0.49, otherwise 10 in 2D and 1/2 in 3D.
double auto_alpha_inv(int dim, double nu);

/// Full parameter set; alpha_inv = nullopt selects auto_alpha_inv.
MaterialParams make_material(int dim, double E, double nu, std::optional<double> alpha_inv = std::nullopt,
                             double max_nu = kDefaultMaxPoisson);

/// Symmetric pencil over the reduced unknowns (u, omega, p). Eigenpairs of
/// interest satisfy K x = -kappa M x with kappa > 0.
struct SystemPencil {
  SparseMatrix K;
  SparseMatrix M;
  BlockLayout layout;
};

struct AssemblyOptions {
  /// Threads for element matrices; insertion stays in cell order, so the
  /// result is bitwise identical for any thread count.
  int threads = 1;
};

SystemPencil assemble_pencil(const Mesh& mesh, const SpaceTriple& spaces, const MaterialParams& params,
                             const AssemblyOptions& options = {});

/// Displacement mass matrix in the un-eliminated numbering (node * dim + comp).
SparseMatrix assemble_full_displacement_mass(const Mesh& mesh, const SpaceTriple& spaces);

/// Pressure-jump penalty sum_e h_e int_e [p][q] over interior facets (weight
/// alpha_inv not applied), as a square matrix on the pressure block.
SparseMatrix assemble_pressure_jump(const Mesh& mesh, const SpaceTriple& spaces);

/// Energy norm (mu|curl v|^2 + mu|div v|^2 + |theta|^2 + |q|^2/(2mu+lambda) + |q0|^2/mu)^(1/2)
/// with q0 the zero-mean part of q. `u` may be reduced or un-eliminated.
double triple_norm(const Mesh& mesh, const SpaceTriple& spaces, const MaterialParams& params, const Eigen::VectorXd& u,
                   const Eigen::VectorXd& rot, const Eigen::VectorXd& p);

/// |Omega|^-1 int p.
double mean_pressure(const Mesh& mesh, const SpaceTriple& spaces, const Eigen::VectorXd& p);

/// Matrix Market coordinate format, lower triangle, 1-based. The matrix must be symmetric.
void write_matrix_market(std::ostream& out, const SparseMatrix& A);
void write_matrix_market(const std::string& path, const SparseMatrix& A);

}  // namespace lameeig
