#include "lameeig/femspace.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/special_functions/legendre.hpp>
#include <map>
#include <stdexcept>
#include <string>

namespace lameeig {

namespace {

struct GaussLegendre {
  std::vector<double> nodes;    // on [0, 1]
  std::vector<double> weights;  // sum to 1
};

GaussLegendre gauss_legendre(int n) {
  GaussLegendre g;
  const auto zeros = boost::math::legendre_p_zeros<double>(n);  // non-negative half
  std::vector<std::pair<double, double>> pts;
  for (double x : zeros) {
    const double dp = boost::math::legendre_p_prime(n, x);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    pts.emplace_back(x, w);
    if (x != 0.0) pts.emplace_back(-x, w);
  }
  std::sort(pts.begin(), pts.end());
  for (const auto& [x, w] : pts) {
    g.nodes.push_back(0.5 * (x + 1.0));
    g.weights.push_back(0.5 * w);
  }
  return g;
}

}  // namespace

QuadratureRule quadrature(int dim, int degree) {
  const int max_degree = dim == 1 ? 21 : dim == 2 ? 10 : 8;
  if (dim < 1 || dim > 3) throw std::invalid_argument("quadrature: dimension must be 1, 2 or 3");
  if (degree < 0 || degree > max_degree) {
    throw std::invalid_argument("quadrature: unsupported degree " + std::to_string(degree) + " in dimension " +
                                std::to_string(dim));
  }
  QuadratureRule rule;
  rule.dim = dim;
  rule.degree = degree;
  // The collapsed map adds (dim - 1) powers of (1 - u) to the integrand.
  const int n = std::max(1, (degree + dim + 1) / 2);
  const GaussLegendre g = gauss_legendre(n);
  if (dim == 1) {
    for (int i = 0; i < n; ++i) {
      rule.points.push_back({1.0 - g.nodes[i], g.nodes[i], 0.0, 0.0});
      rule.weights.push_back(g.weights[i]);
    }
  } else if (dim == 2) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double u = g.nodes[i];
        const double v = g.nodes[j];
        const double x1 = u;
        const double x2 = (1.0 - u) * v;
        rule.points.push_back({1.0 - x1 - x2, x1, x2, 0.0});
        rule.weights.push_back(g.weights[i] * g.weights[j] * (1.0 - u));
      }
    }
  } else {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        for (int l = 0; l < n; ++l) {
          const double u = g.nodes[i];
          const double v = g.nodes[j];
          const double w = g.nodes[l];
          const double x1 = u;
          const double x2 = (1.0 - u) * v;
          const double x3 = (1.0 - u) * (1.0 - v) * w;
          rule.points.push_back({1.0 - x1 - x2 - x3, x1, x2, x3});
          rule.weights.push_back(g.weights[i] * g.weights[j] * g.weights[l] * (1.0 - u) * (1.0 - u) * (1.0 - v));
        }
      }
    }
  }
  return rule;
}

LagrangeBasis::LagrangeBasis(int dim, int degree) : dim_(dim), degree_(degree) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("LagrangeBasis: dimension must be 1..3");
  if (degree < 0 || degree > 3) throw std::invalid_argument("LagrangeBasis: degree must be 0..3");
  std::array<int, 4> a{0, 0, 0, 0};
  // Enumerate alpha_1..alpha_dim; alpha_0 takes the remainder.
  auto recurse = [&](auto&& self, int pos, int remaining) -> void {
    if (pos > dim) {
      a[0] = remaining;
      indices_.push_back(a);
      return;
    }
    for (int v = 0; v <= remaining; ++v) {
      a[pos] = v;
      self(self, pos + 1, remaining - v);
    }
    a[pos] = 0;
  };
  recurse(recurse, 1, degree);
}

Barycentric LagrangeBasis::node(int i) const {
  Barycentric b{0.0, 0.0, 0.0, 0.0};
  for (int j = 0; j <= dim_; ++j) {
    b[j] = degree_ == 0 ? 1.0 / (dim_ + 1) : static_cast<double>(indices_[i][j]) / degree_;
  }
  return b;
}

Tabulation LagrangeBasis::tabulate(std::span<const Barycentric> points) const {
  const int nb = size();
  const int np = static_cast<int>(points.size());
  Tabulation t;
  t.values.resize(np, nb);
  t.gradients.assign(np, Eigen::MatrixXd::Zero(nb, dim_));
  const double k = degree_;
  for (int q = 0; q < np; ++q) {
    const Barycentric& lam = points[q];
    for (int b = 0; b < nb; ++b) {
      const auto& alpha = indices_[b];
      // factor_j(lambda_j) = prod_{m < alpha_j} (k lambda_j - m) / (m + 1) and its derivative.
      std::array<double, 4> f{1.0, 1.0, 1.0, 1.0};
      std::array<double, 4> df{0.0, 0.0, 0.0, 0.0};
      for (int j = 0; j <= dim_; ++j) {
        double val = 1.0;
        double der = 0.0;
        for (int m = 0; m < alpha[j]; ++m) {
          const double term = (k * lam[j] - m) / (m + 1);
          der = der * term + val * k / (m + 1);
          val *= term;
        }
        f[j] = val;
        df[j] = der;
      }
      double value = 1.0;
      for (int j = 0; j <= dim_; ++j) value *= f[j];
      t.values(q, b) = value;
      std::array<double, 4> dlam{0.0, 0.0, 0.0, 0.0};
      for (int j = 0; j <= dim_; ++j) {
        double p = df[j];
        for (int l = 0; l <= dim_; ++l) {
          if (l != j) p *= f[l];
        }
        dlam[j] = p;
      }
      // lambda_0 = 1 - sum xi, lambda_j = xi_j.
      for (int d = 0; d < dim_; ++d) t.gradients[q](b, d) = dlam[d + 1] - dlam[0];
    }
  }
  return t;
}

Tabulation tabulate_basis(int k, int dim, std::span<const Barycentric> points) {
  if (k < 1 || k > 3) throw std::invalid_argument("tabulate_basis: k must be 1, 2 or 3");
  return LagrangeBasis(dim, k).tabulate(points);
}

AffineMap AffineMap::of_cell(const Mesh& mesh, int cell) {
  if (cell < 0 || cell >= mesh.num_cells()) throw std::out_of_range("AffineMap: cell index out of range");
  AffineMap m;
  m.dim = mesh.dim();
  const auto& c = mesh.cell(cell);
  m.origin = mesh.vertex(c[0]);
  m.jacobian.setIdentity();
  for (int j = 0; j < m.dim; ++j) {
    const Point& p = mesh.vertex(c[j + 1]);
    for (int i = 0; i < m.dim; ++i) m.jacobian(i, j) = p[i] - m.origin[i];
  }
  const auto J = m.jacobian.topLeftCorner(m.dim, m.dim);
  m.det = J.determinant();
  if (!(std::abs(m.det) > 0.0)) throw std::invalid_argument("AffineMap: zero-measure cell " + std::to_string(cell));
  m.inverse_transpose.setIdentity();
  m.inverse_transpose.topLeftCorner(m.dim, m.dim) = J.inverse().transpose();
  return m;
}

Point AffineMap::to_physical(const Barycentric& b) const {
  Point x = origin;
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) x[i] += jacobian(i, j) * b[j + 1];
  }
  return x;
}

Barycentric AffineMap::to_barycentric(const Point& x) const {
  Barycentric b{0.0, 0.0, 0.0, 0.0};
  // xi = J^{-1} (x - origin) = inverse_transpose^T (x - origin)
  double sum = 0.0;
  for (int j = 0; j < dim; ++j) {
    double xi = 0.0;
    for (int i = 0; i < dim; ++i) xi += inverse_transpose(i, j) * (x[i] - origin[i]);
    b[j + 1] = xi;
    sum += xi;
  }
  b[0] = 1.0 - sum;
  return b;
}

Eigen::MatrixXd AffineMap::physical_gradients(const Eigen::MatrixXd& ref) const {
  return ref * inverse_transpose.topLeftCorner(dim, dim).transpose();
}

SpaceTriple::SpaceTriple(const Mesh& mesh, int k)
    : dim_(mesh.dim()), k_(k), num_cells_(mesh.num_cells()) {
  if (k < 1 || k > 3) throw std::invalid_argument("SpaceTriple: k must be 1, 2 or 3");
  u_basis_ = LagrangeBasis(dim_, k);
  dg_basis_ = LagrangeBasis(dim_, k - 1);
  const int nb = u_basis_.size();
  cell_nodes_.resize(static_cast<std::size_t>(num_cells_) * nb);

  // A node is identified by the sorted (global vertex, weight) pairs of its multi-index.
  std::map<std::array<int, 8>, int> lookup;
  for (int c = 0; c < num_cells_; ++c) {
    const auto& verts = mesh.cell(c);
    for (int i = 0; i < nb; ++i) {
      const auto& alpha = u_basis_.multi_indices()[i];
      std::array<std::pair<int, int>, 4> pairs{};
      int n = 0;
      for (int j = 0; j <= dim_; ++j) {
        if (alpha[j] > 0) pairs[n++] = {verts[j], alpha[j]};
      }
      std::sort(pairs.begin(), pairs.begin() + n);
      std::array<int, 8> key;
      key.fill(-1);
      for (int j = 0; j < n; ++j) {
        key[2 * j] = pairs[j].first;
        key[2 * j + 1] = pairs[j].second;
      }
      auto [it, inserted] = lookup.try_emplace(key, static_cast<int>(node_coords_.size()));
      if (inserted) {
        Point x{0.0, 0.0, 0.0};
        for (int j = 0; j < n; ++j) {
          const Point& v = mesh.vertex(pairs[j].first);
          for (int d = 0; d < 3; ++d) x[d] += v[d] * pairs[j].second / k;
        }
        node_coords_.push_back(x);
      }
      cell_nodes_[c * nb + i] = it->second;
    }
  }

  std::vector<bool> on_boundary(node_coords_.size(), false);
  for (int f = 0; f < mesh.num_facets(); ++f) {
    const Facet& fc = mesh.facet(f);
    if (!fc.on_boundary()) continue;
    for (int i = 0; i < nb; ++i) {
      if (u_basis_.multi_indices()[i][fc.local_in_plus] == 0) on_boundary[cell_node(fc.plus, i)] = true;
    }
  }
  free_index_.assign(node_coords_.size(), -1);
  for (std::size_t n = 0; n < node_coords_.size(); ++n) {
    if (!on_boundary[n]) free_index_[n] = num_free_nodes_++;
  }
  layout_.n_u = static_cast<Eigen::Index>(num_free_nodes_) * dim_;
  layout_.n_rot = static_cast<Eigen::Index>(num_cells_) * rotation_components() * dg_basis_.size();
  layout_.n_p = static_cast<Eigen::Index>(num_cells_) * dg_basis_.size();
}

std::vector<Eigen::Index> boundary_dofs(const Mesh& mesh, const SpaceTriple& spaces, FieldKind kind) {
  if (kind != FieldKind::Displacement) {
    throw std::invalid_argument("boundary_dofs: discontinuous spaces carry no boundary condition");
  }
  if (spaces.num_cells() != mesh.num_cells()) throw std::invalid_argument("boundary_dofs: spaces built on another mesh");
  std::vector<Eigen::Index> out;
  for (int n = 0; n < spaces.num_nodes(); ++n) {
    if (!spaces.boundary_node(n)) continue;
    for (int d = 0; d < spaces.dim(); ++d) out.push_back(static_cast<Eigen::Index>(n) * spaces.dim() + d);
  }
  return out;
}

double FieldValues::divergence(int q) const {
  if (components != dim) throw std::logic_error("divergence: field is not a vector field");
  return gradients[q].trace();
}

Eigen::VectorXd FieldValues::curl(int q) const {
  const Eigen::MatrixXd& g = gradients[q];
  if (dim == 2 && components == 2) {
    Eigen::VectorXd c(1);
    c[0] = g(1, 0) - g(0, 1);
    return c;
  }
  if (dim == 2 && components == 1) {
    Eigen::VectorXd c(2);
    c << g(0, 1), -g(0, 0);
    return c;
  }
  if (dim == 3 && components == 3) {
    Eigen::VectorXd c(3);
    c << g(2, 1) - g(1, 2), g(0, 2) - g(2, 0), g(1, 0) - g(0, 1);
    return c;
  }
  throw std::logic_error("curl: unsupported field shape");
}

FacetRule facet_rule(const Mesh& mesh, int facet, int degree) {
  const int fdim = mesh.dim() - 1;
  const QuadratureRule ref = quadrature(fdim, degree);
  // Reference weights sum to 1/fdim!.
  const double scale = mesh.facet_measure(facet) * (fdim == 2 ? 2.0 : 1.0);
  FacetRule r;
  r.points = ref.points;
  r.weights.reserve(ref.size());
  for (double w : ref.weights) r.weights.push_back(w * scale);
  return r;
}

std::vector<Barycentric> facet_points_in_cell(const Mesh& mesh, int facet, int cell, const FacetRule& rule) {
  const Facet& f = mesh.facet(facet);
  const auto& verts = mesh.cell(cell);
  const int nf = mesh.dim();
  std::array<int, 3> local{};
  for (int j = 0; j < nf; ++j) {
    local[j] = -1;
    for (int i = 0; i <= mesh.dim(); ++i) {
      if (verts[i] == f.vertices[j]) local[j] = i;
    }
    if (local[j] < 0) throw std::invalid_argument("facet_points_in_cell: cell is not adjacent to the facet");
  }
  std::vector<Barycentric> out;
  out.reserve(rule.points.size());
  for (const auto& p : rule.points) {
    Barycentric b{0.0, 0.0, 0.0, 0.0};
    for (int j = 0; j < nf; ++j) b[local[j]] = p[j];
    out.push_back(b);
  }
  return out;
}

FieldValues evaluate_field(const Mesh& mesh, const SpaceTriple& spaces, FieldKind kind, const Eigen::VectorXd& coeffs,
                           int cell, std::span<const Barycentric> points) {
  if (cell < 0 || cell >= mesh.num_cells()) throw std::out_of_range("evaluate_field: cell index out of range");
  const BlockLayout& lay = spaces.layout();
  const int dim = spaces.dim();
  FieldValues fv;
  fv.dim = dim;
  const AffineMap map = AffineMap::of_cell(mesh, cell);
  const int np = static_cast<int>(points.size());

  auto fill = [&](const LagrangeBasis& basis, int comps, auto&& coefficient) {
    fv.components = comps;
    const Tabulation tab = basis.tabulate(points);
    fv.values = Eigen::MatrixXd::Zero(np, comps);
    fv.gradients.assign(np, Eigen::MatrixXd::Zero(comps, dim));
    for (int q = 0; q < np; ++q) {
      const Eigen::MatrixXd grads = map.physical_gradients(tab.gradients[q]);
      for (int i = 0; i < basis.size(); ++i) {
        for (int c = 0; c < comps; ++c) {
          const double a = coefficient(i, c);
          if (a == 0.0) continue;
          fv.values(q, c) += a * tab.values(q, i);
          fv.gradients[q].row(c) += a * grads.row(i);
        }
      }
    }
  };

  switch (kind) {
    case FieldKind::Displacement: {
      if (coeffs.size() == spaces.full_displacement_dofs() && coeffs.size() != lay.n_u) {
        fill(spaces.displacement_basis(), dim, [&](int i, int c) {
          return coeffs[static_cast<Eigen::Index>(spaces.cell_node(cell, i)) * dim + c];
        });
        break;
      }
      if (coeffs.size() != lay.n_u) throw std::invalid_argument("evaluate_field: displacement coefficient size mismatch");
      fill(spaces.displacement_basis(), dim, [&](int i, int c) {
        const Eigen::Index d = spaces.u_dof(cell, i, c);
        return d < 0 ? 0.0 : coeffs[d];
      });
      break;
    }
    case FieldKind::Rotation: {
      if (coeffs.size() != lay.n_rot) throw std::invalid_argument("evaluate_field: rotation coefficient size mismatch");
      fill(spaces.discontinuous_basis(), spaces.rotation_components(),
           [&](int i, int c) { return coeffs[spaces.rot_dof(cell, c, i)]; });
      break;
    }
    case FieldKind::Pressure: {
      if (coeffs.size() != lay.n_p) throw std::invalid_argument("evaluate_field: pressure coefficient size mismatch");
      fill(spaces.discontinuous_basis(), 1, [&](int i, int) { return coeffs[spaces.p_dof(cell, i)]; });
      break;
    }
  }
  return fv;
}

}  // namespace lameeig
