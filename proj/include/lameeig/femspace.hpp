#pragma once

#include <Eigen/Core>
#include <array>
#include <span>
#include <vector>

#include "lameeig/mesh.hpp"

namespace lameeig {

/// Barycentric coordinates (lambda_0..lambda_dim); unused entries are zero.
using Barycentric = std::array<double, 4>;

struct QuadratureRule {
  int dim = 0;
  int degree = 0;
  std::vector<Barycentric> points;
  /// Weights on the reference simplex (they sum to 1/dim!).
  std::vector<double> weights;

  [[nodiscard]] std::size_t size() const { return weights.size(); }
};

/// Collapsed Gauss-Legendre rule on the reference simplex of dimension 1..3,
/// exact for polynomials of total degree <= `degree`. Throws for degrees
/// above 21 (1D), 10 (2D) or 8 (3D).
QuadratureRule quadrature(int dim, int degree);

/// Basis values and reference-coordinate gradients at a set of points.
struct Tabulation {
  Eigen::MatrixXd values;                 // points x basis
  std::vector<Eigen::MatrixXd> gradients;  // per point: basis x dim
};

/// Scalar Lagrange basis of degree 0..3 on the reference simplex with
/// equispaced nodes. Degree 0 is the constant function.
class LagrangeBasis {
 public:
  LagrangeBasis() = default;
  LagrangeBasis(int dim, int degree);

  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] int degree() const { return degree_; }
  [[nodiscard]] int size() const { return static_cast<int>(indices_.size()); }
  /// Multi-index alpha (|alpha| = degree) of each basis function.
  [[nodiscard]] const std::vector<std::array<int, 4>>& multi_indices() const { return indices_; }
  /// Barycentric position of node i.
  [[nodiscard]] Barycentric node(int i) const;

  [[nodiscard]] Tabulation tabulate(std::span<const Barycentric> points) const;

 private:
  int dim_ = 0;
  int degree_ = 0;
  std::vector<std::array<int, 4>> indices_;
};

/// Continuous Lagrange basis of degree k in {1,2,3}; throws otherwise.
Tabulation tabulate_basis(int k, int dim, std::span<const Barycentric> points);

/// Affine map from the reference simplex onto a mesh cell.
struct AffineMap {
  int dim = 0;
  Point origin{};
  Eigen::Matrix3d jacobian = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d inverse_transpose = Eigen::Matrix3d::Identity();
  double det = 0.0;

  static AffineMap of_cell(const Mesh& mesh, int cell);

  [[nodiscard]] Point to_physical(const Barycentric& b) const;
  [[nodiscard]] Barycentric to_barycentric(const Point& x) const;
  /// Maps reference gradients (basis x dim) to physical ones.
  [[nodiscard]] Eigen::MatrixXd physical_gradients(const Eigen::MatrixXd& ref) const;
};

enum class FieldKind { Displacement, Rotation, Pressure };

/// Offsets and sizes of the three unknown blocks (u, omega, p) of the reduced system.
struct BlockLayout {
  Eigen::Index n_u = 0;
  Eigen::Index n_rot = 0;
  Eigen::Index n_p = 0;

  [[nodiscard]] Eigen::Index offset_u() const { return 0; }
  [[nodiscard]] Eigen::Index offset_rot() const { return n_u; }
  [[nodiscard]] Eigen::Index offset_p() const { return n_u + n_rot; }
  [[nodiscard]] Eigen::Index total() const { return n_u + n_rot + n_p; }
};

/// Discrete spaces H_h (continuous vector P_k, zero trace), Z_h and Q_h
/// (discontinuous P_{k-1}) together with their degree-of-freedom maps.
///
/// Displacement dofs are node-major (free_node * dim + component); boundary
/// nodes are eliminated. Rotation and pressure dofs are numbered cell by cell.
class SpaceTriple {
 public:
  SpaceTriple(const Mesh& mesh, int k);

  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] int degree() const { return k_; }
  [[nodiscard]] int rotation_components() const { return dim_ == 2 ? 1 : 3; }
  [[nodiscard]] int num_cells() const { return num_cells_; }

  [[nodiscard]] const LagrangeBasis& displacement_basis() const { return u_basis_; }
  [[nodiscard]] const LagrangeBasis& discontinuous_basis() const { return dg_basis_; }

  [[nodiscard]] int num_nodes() const { return static_cast<int>(node_coords_.size()); }
  [[nodiscard]] int num_free_nodes() const { return num_free_nodes_; }
  [[nodiscard]] const Point& node_coordinate(int n) const { return node_coords_[n]; }
  [[nodiscard]] bool boundary_node(int n) const { return free_index_[n] < 0; }
  /// Global node of local basis function `i` in `cell`.
  [[nodiscard]] int cell_node(int cell, int i) const { return cell_nodes_[cell * u_basis_.size() + i]; }

  [[nodiscard]] const BlockLayout& layout() const { return layout_; }

  /// Reduced displacement dof of (cell, local node, component), or -1 when
  /// the node lies on the boundary.
  [[nodiscard]] Eigen::Index u_dof(int cell, int local, int comp) const {
    const int f = free_index_[cell_node(cell, local)];
    return f < 0 ? -1 : static_cast<Eigen::Index>(f) * dim_ + comp;
  }
  /// Index within the rotation block (add layout().offset_rot() for the system index).
  [[nodiscard]] Eigen::Index rot_dof(int cell, int comp, int local) const {
    return (static_cast<Eigen::Index>(cell) * rotation_components() + comp) * dg_basis_.size() + local;
  }
  /// Index within the pressure block.
  [[nodiscard]] Eigen::Index p_dof(int cell, int local) const {
    return static_cast<Eigen::Index>(cell) * dg_basis_.size() + local;
  }

  /// Un-eliminated displacement dof count, dim x (number of Lagrange nodes).
  [[nodiscard]] Eigen::Index full_displacement_dofs() const { return static_cast<Eigen::Index>(num_nodes()) * dim_; }

 private:
  int dim_;
  int k_;
  int num_cells_;
  LagrangeBasis u_basis_;
  LagrangeBasis dg_basis_;
  std::vector<int> cell_nodes_;
  std::vector<Point> node_coords_;
  std::vector<int> free_index_;
  int num_free_nodes_ = 0;
  BlockLayout layout_;
};

/// Displacement dofs (un-eliminated numbering node * dim + comp) whose node
/// lies on a boundary facet. Only valid for FieldKind::Displacement.
std::vector<Eigen::Index> boundary_dofs(const Mesh& mesh, const SpaceTriple& spaces, FieldKind kind);

/// Values and physical gradients of a discrete field at points of one cell.
struct FieldValues {
  int components = 0;
  int dim = 0;
  Eigen::MatrixXd values;                 // points x components
  std::vector<Eigen::MatrixXd> gradients;  // per point: components x dim

  [[nodiscard]] int num_points() const { return static_cast<int>(values.rows()); }
  /// Divergence of a vector field (components == dim).
  [[nodiscard]] double divergence(int q) const;
  /// Curl with the 2D conventions: vector field -> scalar d1u2 - d2u1,
  /// scalar field -> (d2 t, -d1 t); 3D vector field -> standard curl.
  [[nodiscard]] Eigen::VectorXd curl(int q) const;
};

/// Evaluates one block of a coefficient vector (sized to that block) on
/// `cell` at the given barycentric points. A displacement vector may also be
/// given in the un-eliminated numbering (size full_displacement_dofs()).
FieldValues evaluate_field(const Mesh& mesh, const SpaceTriple& spaces, FieldKind kind, const Eigen::VectorXd& coeffs,
                           int cell, std::span<const Barycentric> points);

/// Rule on the reference facet (dimension dim-1) whose weights are scaled to
/// integrate over physical facet `f`: sum of weights = facet measure.
struct FacetRule {
  std::vector<Barycentric> points;  // w.r.t. the sorted facet vertices
  std::vector<double> weights;
};
FacetRule facet_rule(const Mesh& mesh, int facet, int degree);

/// Facet rule points expressed in the barycentric coordinates of `cell`,
/// which must be adjacent to the facet.
std::vector<Barycentric> facet_points_in_cell(const Mesh& mesh, int facet, int cell, const FacetRule& rule);

/// Nodal interpolant of a vector function into the displacement block.
/// Boundary nodes are dropped (the function should vanish there for the
/// interpolant to be exact).
template <typename F>
Eigen::VectorXd interpolate_displacement(const SpaceTriple& spaces, F&& f) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(spaces.layout().n_u);
  for (int n = 0, free = 0; n < spaces.num_nodes(); ++n) {
    if (spaces.boundary_node(n)) continue;
    const Point v = f(spaces.node_coordinate(n));
    for (int d = 0; d < spaces.dim(); ++d) u[free * spaces.dim() + d] = v[d];
    ++free;
  }
  return u;
}

/// Nodal interpolant in the un-eliminated numbering (node * dim + comp),
/// boundary nodes included.
template <typename F>
Eigen::VectorXd interpolate_displacement_full(const SpaceTriple& spaces, F&& f) {
  Eigen::VectorXd u(spaces.full_displacement_dofs());
  for (int n = 0; n < spaces.num_nodes(); ++n) {
    const Point v = f(spaces.node_coordinate(n));
    for (int d = 0; d < spaces.dim(); ++d) u[static_cast<Eigen::Index>(n) * spaces.dim() + d] = v[d];
  }
  return u;
}

}  // namespace lameeig
