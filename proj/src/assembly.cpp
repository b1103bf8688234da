#include "lameeig/assembly.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lameeig/parallel.hpp"

namespace lameeig {

namespace {

using Triplet = Eigen::Triplet<double, Eigen::Index>;

// Pushes (i,j) and (j,i) together so duplicate summation runs in the same
// order for both and the result is exactly symmetric.
void push_pair(std::vector<Triplet>& out, Eigen::Index i, Eigen::Index j, double v) {
  out.emplace_back(i, j, v);
  if (i != j) out.emplace_back(j, i, v);
}

// Component c of curl(phi e_d) given grad phi. In 2D the curl is scalar (c = 0).
double curl_of_unit(int dim, const Eigen::RowVectorXd& g, int d, int c) {
  if (dim == 2) return d == 0 ? -g[1] : g[0];
  // grad phi x e_d
  const int a = (d + 1) % 3;
  const int b = (d + 2) % 3;
  if (c == a) return g[b];
  if (c == b) return -g[a];
  return 0.0;
}

struct CellOutput {
  std::vector<Triplet> K;
  std::vector<Triplet> M;
};

class ElementKernel {
 public:
  ElementKernel(const Mesh& mesh, const SpaceTriple& spaces, const MaterialParams& params)
      : mesh_(mesh),
        spaces_(spaces),
        params_(params),
        rule_(quadrature(mesh.dim(), 2 * spaces.degree())),
        u_tab_(spaces.displacement_basis().tabulate(rule_.points)),
        dg_tab_(spaces.discontinuous_basis().tabulate(rule_.points)) {}

  CellOutput compute(int cell) const {
    const int dim = mesh_.dim();
    const int nb = spaces_.displacement_basis().size();
    const int nd = spaces_.discontinuous_basis().size();
    const int nc = spaces_.rotation_components();
    const AffineMap map = AffineMap::of_cell(mesh_, cell);
    const double jac = std::abs(map.det);
    const double sqrt_mu = std::sqrt(params_.mu_s);
    const double pressure_weight = 1.0 / (2.0 * params_.mu_s + params_.lambda_s);

    Eigen::MatrixXd mass_u = Eigen::MatrixXd::Zero(nb, nb);
    Eigen::MatrixXd mass_dg = Eigen::MatrixXd::Zero(nd, nd);
    Eigen::MatrixXd div_block = Eigen::MatrixXd::Zero(nd, nb * dim);
    Eigen::MatrixXd curl_block = Eigen::MatrixXd::Zero(nc * nd, nb * dim);
    for (std::size_t q = 0; q < rule_.size(); ++q) {
      const double w = rule_.weights[q] * jac;
      const Eigen::MatrixXd grads = map.physical_gradients(u_tab_.gradients[q]);
      const auto phi = u_tab_.values.row(q);
      const auto psi = dg_tab_.values.row(q);
      mass_u.noalias() += w * phi.transpose() * phi;
      mass_dg.noalias() += w * psi.transpose() * psi;
      for (int j = 0; j < nb; ++j) {
        const Eigen::RowVectorXd g = grads.row(j);
        for (int d = 0; d < dim; ++d) {
          for (int i = 0; i < nd; ++i) {
            div_block(i, j * dim + d) += w * psi[i] * g[d];
            for (int c = 0; c < nc; ++c) curl_block(c * nd + i, j * dim + d) += w * psi[i] * curl_of_unit(dim, g, d, c);
          }
        }
      }
    }

    CellOutput out;
    std::vector<Eigen::Index> u_idx(nb * dim);
    for (int j = 0; j < nb; ++j) {
      for (int d = 0; d < dim; ++d) u_idx[j * dim + d] = spaces_.u_dof(cell, j, d);
    }
    const BlockLayout& lay = spaces_.layout();
    for (int c = 0; c < nc; ++c) {
      for (int i = 0; i < nd; ++i) {
        const Eigen::Index row = lay.offset_rot() + spaces_.rot_dof(cell, c, i);
        for (int j = i; j < nd; ++j) push_pair(out.K, row, lay.offset_rot() + spaces_.rot_dof(cell, c, j), mass_dg(i, j));
        for (int a = 0; a < nb * dim; ++a) {
          if (u_idx[a] >= 0) push_pair(out.K, row, u_idx[a], -sqrt_mu * curl_block(c * nd + i, a));
        }
      }
    }
    for (int i = 0; i < nd; ++i) {
      const Eigen::Index row = lay.offset_p() + spaces_.p_dof(cell, i);
      for (int j = i; j < nd; ++j) push_pair(out.K, row, lay.offset_p() + spaces_.p_dof(cell, j), pressure_weight * mass_dg(i, j));
      for (int a = 0; a < nb * dim; ++a) {
        if (u_idx[a] >= 0) push_pair(out.K, row, u_idx[a], div_block(i, a));
      }
    }
    for (int i = 0; i < nb; ++i) {
      for (int j = i; j < nb; ++j) {
        for (int d = 0; d < dim; ++d) {
          const Eigen::Index a = u_idx[i * dim + d];
          const Eigen::Index b = u_idx[j * dim + d];
          if (a >= 0 && b >= 0) push_pair(out.M, a, b, mass_u(i, j));
        }
      }
    }
    return out;
  }

 private:
  const Mesh& mesh_;
  const SpaceTriple& spaces_;
  const MaterialParams& params_;
  QuadratureRule rule_;
  Tabulation u_tab_;
  Tabulation dg_tab_;
};

void check_spaces(const Mesh& mesh, const SpaceTriple& spaces) {
  if (spaces.dim() != mesh.dim() || spaces.num_cells() != mesh.num_cells()) {
    throw std::invalid_argument("assembly: spaces were built on a different mesh");
  }
}

// Appends h_e int_e [p][q] for every interior facet, pressure block indices
// offset by `offset`, scaled by `weight`.
void append_pressure_jump(const Mesh& mesh, const SpaceTriple& spaces, double weight, Eigen::Index offset,
                          std::vector<Triplet>& out) {
  const LagrangeBasis& dg = spaces.discontinuous_basis();
  const int nd = dg.size();
  const int degree = 2 * (spaces.degree() - 1);
  for (int f = 0; f < mesh.num_facets(); ++f) {
    const Facet& fc = mesh.facet(f);
    if (fc.on_boundary()) continue;
    const FacetRule rule = facet_rule(mesh, f, degree);
    const Eigen::MatrixXd vp = dg.tabulate(facet_points_in_cell(mesh, f, fc.plus, rule)).values;
    const Eigen::MatrixXd vm = dg.tabulate(facet_points_in_cell(mesh, f, fc.minus, rule)).values;
    const double he = mesh.facet_diameter(f);
    std::vector<Eigen::Index> idx(2 * nd);
    for (int i = 0; i < nd; ++i) {
      idx[i] = offset + spaces.p_dof(fc.plus, i);
      idx[nd + i] = offset + spaces.p_dof(fc.minus, i);
    }
    Eigen::MatrixXd local = Eigen::MatrixXd::Zero(2 * nd, 2 * nd);
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      Eigen::VectorXd jump(2 * nd);
      jump.head(nd) = vp.row(q).transpose();
      jump.tail(nd) = -vm.row(q).transpose();
      local.noalias() += rule.weights[q] * jump * jump.transpose();
    }
    for (int a = 0; a < 2 * nd; ++a) {
      for (int b = a; b < 2 * nd; ++b) push_pair(out, idx[a], idx[b], weight * he * local(a, b));
    }
  }
}

}  // namespace

std::pair<double, double> lame_from_poisson(double E, double nu, double max_nu) {
  if (!(E > 0.0)) throw std::invalid_argument("Young's modulus must be positive");
  if (nu >= 0.5) {
    throw std::invalid_argument("Poisson ratio " + std::to_string(nu) +
                                " is at or beyond the incompressible limit; use a near-limit value such as 0.4999 "
                                "together with pressure stabilization");
  }
  if (!(nu > 0.0) || nu > max_nu) {
    throw std::invalid_argument("Poisson ratio must lie in (0, " + std::to_string(max_nu) + "]");
  }
  const double mu = E / (2.0 * (1.0 + nu));
  const double lambda = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  return {mu, lambda};
}

double jump_weight(const MaterialParams& params) {
  return params.alpha_inv / (2.0 * params.mu_s + params.lambda_s);
}

double auto_alpha_inv(int dim, double nu) {
  if (nu <= 0.49) return 0.0;
  return dim == 2 ? 10.0 : 0.5;
}

MaterialParams make_material(int dim, double E, double nu, std::optional<double> alpha_inv, double max_nu) {
  MaterialParams p;
  p.young_E = E;
  p.poisson_nu = nu;
  std::tie(p.mu_s, p.lambda_s) = lame_from_poisson(E, nu, max_nu);
  p.alpha_inv = alpha_inv ? *alpha_inv : auto_alpha_inv(dim, nu);
  if (p.alpha_inv < 0.0) throw std::invalid_argument("stabilization weight must be non-negative");
  return p;
}

SystemPencil assemble_pencil(const Mesh& mesh, const SpaceTriple& spaces, const MaterialParams& params,
                             const AssemblyOptions& options) {
  check_spaces(mesh, spaces);
  if (!(params.mu_s > 0.0) || !(params.lambda_s > 0.0)) throw std::invalid_argument("assembly: Lame constants must be positive");
  const ElementKernel kernel(mesh, spaces, params);
  std::vector<CellOutput> cells(mesh.num_cells());
  parallel_for(mesh.num_cells(), options.threads, [&](int c) { cells[c] = kernel.compute(c); });

  std::vector<Triplet> k_entries, m_entries;
  for (const auto& c : cells) {
    k_entries.insert(k_entries.end(), c.K.begin(), c.K.end());
    m_entries.insert(m_entries.end(), c.M.begin(), c.M.end());
  }
  const BlockLayout& lay = spaces.layout();
  if (params.alpha_inv > 0.0) append_pressure_jump(mesh, spaces, jump_weight(params), lay.offset_p(), k_entries);

  SystemPencil out;
  out.layout = lay;
  out.K.resize(lay.total(), lay.total());
  out.M.resize(lay.total(), lay.total());
  out.K.setFromTriplets(k_entries.begin(), k_entries.end());
  out.M.setFromTriplets(m_entries.begin(), m_entries.end());
  return out;
}

SparseMatrix assemble_full_displacement_mass(const Mesh& mesh, const SpaceTriple& spaces) {
  check_spaces(mesh, spaces);
  const int dim = mesh.dim();
  const QuadratureRule rule = quadrature(dim, 2 * spaces.degree());
  const Tabulation tab = spaces.displacement_basis().tabulate(rule.points);
  const int nb = spaces.displacement_basis().size();
  std::vector<Triplet> entries;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const double jac = std::abs(AffineMap::of_cell(mesh, c).det);
    Eigen::MatrixXd local = Eigen::MatrixXd::Zero(nb, nb);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      local.noalias() += rule.weights[q] * jac * tab.values.row(q).transpose() * tab.values.row(q);
    }
    for (int i = 0; i < nb; ++i) {
      for (int j = i; j < nb; ++j) {
        for (int d = 0; d < dim; ++d) {
          push_pair(entries, static_cast<Eigen::Index>(spaces.cell_node(c, i)) * dim + d,
                    static_cast<Eigen::Index>(spaces.cell_node(c, j)) * dim + d, local(i, j));
        }
      }
    }
  }
  SparseMatrix M(spaces.full_displacement_dofs(), spaces.full_displacement_dofs());
  M.setFromTriplets(entries.begin(), entries.end());
  return M;
}

SparseMatrix assemble_pressure_jump(const Mesh& mesh, const SpaceTriple& spaces) {
  check_spaces(mesh, spaces);
  std::vector<Triplet> entries;
  append_pressure_jump(mesh, spaces, 1.0, 0, entries);
  SparseMatrix S(spaces.layout().n_p, spaces.layout().n_p);
  S.setFromTriplets(entries.begin(), entries.end());
  return S;
}

double triple_norm(const Mesh& mesh, const SpaceTriple& spaces, const MaterialParams& params, const Eigen::VectorXd& u,
                   const Eigen::VectorXd& rot, const Eigen::VectorXd& p) {
  check_spaces(mesh, spaces);
  const QuadratureRule rule = quadrature(mesh.dim(), 2 * spaces.degree());
  double curl2 = 0.0, div2 = 0.0, rot2 = 0.0, p2 = 0.0, p_int = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const double jac = std::abs(AffineMap::of_cell(mesh, c).det);
    const FieldValues fu = evaluate_field(mesh, spaces, FieldKind::Displacement, u, c, rule.points);
    const FieldValues fr = evaluate_field(mesh, spaces, FieldKind::Rotation, rot, c, rule.points);
    const FieldValues fp = evaluate_field(mesh, spaces, FieldKind::Pressure, p, c, rule.points);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const double w = rule.weights[q] * jac;
      const int qi = static_cast<int>(q);
      curl2 += w * fu.curl(qi).squaredNorm();
      div2 += w * fu.divergence(qi) * fu.divergence(qi);
      rot2 += w * fr.values.row(qi).squaredNorm();
      p2 += w * fp.values(qi, 0) * fp.values(qi, 0);
      p_int += w * fp.values(qi, 0);
    }
  }
  const double volume = mesh.total_volume();
  // |q - mean|^2 = |q|^2 - (int q)^2 / |Omega|, clamped against round-off.
  const double p0_2 = std::max(0.0, p2 - p_int * p_int / volume);
  const double value = params.mu_s * curl2 + params.mu_s * div2 + rot2 + p2 / (2.0 * params.mu_s + params.lambda_s) +
                       p0_2 / params.mu_s;
  return std::sqrt(value);
}

double mean_pressure(const Mesh& mesh, const SpaceTriple& spaces, const Eigen::VectorXd& p) {
  check_spaces(mesh, spaces);
  const QuadratureRule rule = quadrature(mesh.dim(), spaces.degree() - 1);
  double integral = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const double jac = std::abs(AffineMap::of_cell(mesh, c).det);
    const FieldValues fp = evaluate_field(mesh, spaces, FieldKind::Pressure, p, c, rule.points);
    for (std::size_t q = 0; q < rule.size(); ++q) integral += rule.weights[q] * jac * fp.values(static_cast<int>(q), 0);
  }
  return integral / mesh.total_volume();
}

void write_matrix_market(std::ostream& out, const SparseMatrix& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("write_matrix_market: matrix must be square");
  const SparseMatrix At = A.transpose();
  if ((A - At).norm() != 0.0) throw std::invalid_argument("write_matrix_market: matrix is not symmetric");
  Eigen::Index nnz = 0;
  for (Eigen::Index j = 0; j < A.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(A, j); it; ++it) nnz += it.row() >= it.col() ? 1 : 0;
  }
  out << "%%MatrixMarket matrix coordinate real symmetric\n";
  out << A.rows() << ' ' << A.cols() << ' ' << nnz << '\n';
  char buf[64];
  for (Eigen::Index j = 0; j < A.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(A, j); it; ++it) {
      if (it.row() < it.col()) continue;
      std::snprintf(buf, sizeof(buf), "%.17g", it.value());
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << buf << '\n';
    }
  }
}

void write_matrix_market(const std::string& path, const SparseMatrix& A) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_matrix_market: cannot open " + path);
  write_matrix_market(out, A);
  if (!out) throw std::runtime_error("write_matrix_market: write failed for " + path);
}

}  // namespace lameeig
