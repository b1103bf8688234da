#include "lameeig/estimator.hpp"

#include <cmath>
#include <stdexcept>

#include "lameeig/parallel.hpp"

namespace lameeig {

namespace {

// omega x n, with a 2D rotation read as omega e_3.
Eigen::VectorXd rotation_cross_normal(const Eigen::RowVectorXd& omega, const Point& n, int dim) {
  Eigen::VectorXd out(dim);
  if (dim == 2) {
    out << -omega[0] * n[1], omega[0] * n[0];
  } else {
    out << omega[1] * n[2] - omega[2] * n[1], omega[2] * n[0] - omega[0] * n[2], omega[0] * n[1] - omega[1] * n[0];
  }
  return out;
}

void check_sizes(const SpaceTriple& spaces, const EigenSolution& s) {
  const BlockLayout& lay = spaces.layout();
  if (s.u.size() != lay.n_u || s.rot.size() != lay.n_rot || s.p.size() != lay.n_p) {
    throw std::invalid_argument("estimator: solution does not match the spaces");
  }
}

}  // namespace

CellResiduals cell_residuals(const Mesh& mesh, const SpaceTriple& spaces, const MaterialParams& params,
                             const EigenSolution& solution, int cell) {
  check_sizes(spaces, solution);
  const QuadratureRule rule = quadrature(mesh.dim(), 2 * spaces.degree());
  const auto u = evaluate_field(mesh, spaces, FieldKind::Displacement, solution.u, cell, rule.points);
  const auto w = evaluate_field(mesh, spaces, FieldKind::Rotation, solution.rot, cell, rule.points);
  const auto p = evaluate_field(mesh, spaces, FieldKind::Pressure, solution.p, cell, rule.points);
  const double jac = std::abs(AffineMap::of_cell(mesh, cell).det);
  const double sqrt_mu = std::sqrt(params.mu_s);
  const double cp = 1.0 / (2.0 * params.mu_s + params.lambda_s);

  CellResiduals r;
  for (int q = 0; q < static_cast<int>(rule.size()); ++q) {
    const double wq = rule.weights[q] * jac;
    const Eigen::VectorXd r1 = solution.kappa * u.values.row(q).transpose() - p.gradients[q].row(0).transpose() -
                               sqrt_mu * w.curl(q);
    const Eigen::VectorXd r2 = sqrt_mu * u.curl(q) - w.values.row(q).transpose();
    const double r3 = cp * p.values(q, 0) + u.divergence(q);
    r.r1 += wq * r1.squaredNorm();
    r.r2 += wq * r2.squaredNorm();
    r.r3 += wq * r3 * r3;
  }
  return r;
}

double facet_jump(const Mesh& mesh, const SpaceTriple& spaces, const MaterialParams& params,
                  const EigenSolution& solution, int facet, bool flip) {
  check_sizes(spaces, solution);
  const Facet& fc = mesh.facet(facet);
  if (fc.on_boundary()) return 0.0;
  const int dim = mesh.dim();
  const int first = flip ? fc.minus : fc.plus;
  const int second = flip ? fc.plus : fc.minus;
  const Point n = mesh.outward_normal(facet, first);
  const FacetRule rule = facet_rule(mesh, facet, 2 * spaces.degree());
  const auto pts_a = facet_points_in_cell(mesh, facet, first, rule);
  const auto pts_b = facet_points_in_cell(mesh, facet, second, rule);
  const auto pa = evaluate_field(mesh, spaces, FieldKind::Pressure, solution.p, first, pts_a);
  const auto pb = evaluate_field(mesh, spaces, FieldKind::Pressure, solution.p, second, pts_b);
  const auto wa = evaluate_field(mesh, spaces, FieldKind::Rotation, solution.rot, first, pts_a);
  const auto wb = evaluate_field(mesh, spaces, FieldKind::Rotation, solution.rot, second, pts_b);
  const double sqrt_mu = std::sqrt(params.mu_s);

  Eigen::VectorXd nv(dim);
  for (int d = 0; d < dim; ++d) nv[d] = n[d];
  double sum = 0.0;
  for (std::size_t q = 0; q < rule.weights.size(); ++q) {
    const int i = static_cast<int>(q);
    const Eigen::VectorXd ta = pa.values(i, 0) * nv + sqrt_mu * rotation_cross_normal(wa.values.row(i), n, dim);
    const Eigen::VectorXd tb = pb.values(i, 0) * nv + sqrt_mu * rotation_cross_normal(wb.values.row(i), n, dim);
    sum += rule.weights[q] * (0.5 * (ta - tb)).squaredNorm();
  }
  return sum;
}

LocalIndicator local_estimator(const CellResiduals& residuals, std::span<const FacetJump> jumps, double h_T,
                               const MaterialParams& params) {
  const double mu = params.mu_s;
  const double lambda = params.lambda_s;
  LocalIndicator out;
  out.volume = h_T * h_T / mu * residuals.r1;
  out.rotation = residuals.r2;
  out.divergence = mu * (2.0 * mu + lambda) / (3.0 * mu + lambda) * residuals.r3;
  for (const FacetJump& j : jumps) out.jumps += j.h_e / mu * j.norm_sq;
  return out;
}

double global_estimator(std::span<const double> zeta_sq) {
  double s = 0.0;
  for (double z : zeta_sq) s += z;
  return std::sqrt(s);
}

std::vector<double> EstimatorField::zeta_sq() const {
  std::vector<double> out;
  out.reserve(cells.size());
  for (const auto& c : cells) out.push_back(c.total());
  return out;
}

EstimatorField estimate(const Mesh& mesh, const SpaceTriple& spaces, const MaterialParams& params,
                        const EigenSolution& solution, const EstimatorOptions& options) {
  check_sizes(spaces, solution);
  EstimatorField field;
  field.facet_jump_sq.assign(mesh.num_facets(), 0.0);
  parallel_for(mesh.num_facets(), options.threads,
               [&](int f) { field.facet_jump_sq[f] = facet_jump(mesh, spaces, params, solution, f); });

  field.cells.resize(mesh.num_cells());
  parallel_for(mesh.num_cells(), options.threads, [&](int c) {
    std::vector<FacetJump> jumps;
    for (int i = 0; i <= mesh.dim(); ++i) {
      const int f = mesh.cell_facet(c, i);
      if (mesh.boundary_facet(f)) continue;
      jumps.push_back({mesh.facet_diameter(f), field.facet_jump_sq[f]});
    }
    field.cells[c] =
        local_estimator(cell_residuals(mesh, spaces, params, solution, c), jumps, mesh.cell_diameter(c), params);
  });
  const std::vector<double> z = field.zeta_sq();
  field.zeta = global_estimator(z);
  return field;
}

EstimatorField estimate(const Mesh& mesh, const SpaceTriple& spaces, const MaterialParams& params,
                        std::span<const EigenSolution> solutions, const EstimatorOptions& options) {
  if (solutions.empty()) throw std::invalid_argument("estimate: no eigenpairs given");
  EstimatorField total = estimate(mesh, spaces, params, solutions.front(), options);
  for (std::size_t i = 1; i < solutions.size(); ++i) {
    const EstimatorField next = estimate(mesh, spaces, params, solutions[i], options);
    for (std::size_t c = 0; c < total.cells.size(); ++c) {
      total.cells[c].volume += next.cells[c].volume;
      total.cells[c].rotation += next.cells[c].rotation;
      total.cells[c].divergence += next.cells[c].divergence;
      total.cells[c].jumps += next.cells[c].jumps;
    }
    for (std::size_t f = 0; f < total.facet_jump_sq.size(); ++f) total.facet_jump_sq[f] += next.facet_jump_sq[f];
  }
  const std::vector<double> z = total.zeta_sq();
  total.zeta = global_estimator(z);
  return total;
}

}  // namespace lameeig
