#include "popup/optimizer.h"

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>
#include <unsupported/Eigen/AutoDiff>
#include <algorithm>
#include <map>
#include <sstream>

namespace popup {

namespace {

template <int D>
using Jet = Eigen::AutoDiffScalar<Eigen::Matrix<double, D, 1>>;

template <int D, int N>
Eigen::Matrix<Jet<D>, N, 1> seed(const int first) {
  Eigen::Matrix<Jet<D>, N, 1> v;
  for (int i = 0; i < N; ++i) v(i) = Jet<D>(0.0, D, first + i);
  return v;
}

template <int D, int M>
void unpack(const Eigen::Matrix<Jet<D>, M, 1>& e, Eigen::VectorXd& r, Eigen::MatrixXd& j) {
  r.resize(M);
  j.resize(M, D);
  for (int i = 0; i < M; ++i) {
    r(i) = e(i).value();
    j.row(i) = e(i).derivatives().transpose();
  }
}

template <int N>
Eigen::Matrix<double, N, N> inverse_sqrt_lower(const Eigen::Matrix<double, N, N>& cov) {
  const Eigen::Matrix<double, N, N> l = cov.llt().matrixL();
  return l.template triangularView<Eigen::Lower>().solve(Eigen::Matrix<double, N, N>::Identity());
}

struct ValueLinearization {
  Eigen::VectorXd residual;
  Eigen::MatrixXd jacobian;  // columns span all touched variables
};

ValueLinearization linearize_raw(const FactorGraph& graph, const Factor& factor) {
  ValueLinearization out;
  std::visit(
      [&](const auto& f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, PriorPoseFactor>) {
          using J = Jet<6>;
          const Pose<J> x = pose_retract(graph.pose(f.pose).template cast<J>(), Vector6<J>(seed<6, 6>(0)));
          unpack<6, 6>(prior_error(x, f.measured), out.residual, out.jacobian);
        } else if constexpr (std::is_same_v<F, OdometryFactor>) {
          using J = Jet<12>;
          const Pose<J> xi = pose_retract(graph.pose(f.from).template cast<J>(), Vector6<J>(seed<12, 6>(0)));
          const Pose<J> xj = pose_retract(graph.pose(f.to).template cast<J>(), Vector6<J>(seed<12, 6>(6)));
          unpack<12, 6>(odometry_error(xi, xj, f.relative), out.residual, out.jacobian);
        } else {
          using J = Jet<9>;
          const Pose<J> x = pose_retract(graph.pose(f.pose).template cast<J>(), Vector6<J>(seed<9, 6>(0)));
          const Vector4<J> q0 = graph.landmark(f.landmark).minimal.coeffs().template cast<J>();
          const Vector4<J> q = quat_mul(quat_exp(Vector3<J>(seed<9, 3>(6))), q0);
          unpack<9, 3>(plane_error(x, q, f.measured), out.residual, out.jacobian);
        }
      },
      factor);
  return out;
}

Eigen::MatrixXd whitening(const Factor& factor) {
  return std::visit(
      [](const auto& f) -> Eigen::MatrixXd {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, PlaneFactor>) {
          return inverse_sqrt_lower<3>(f.covariance);
        } else {
          return inverse_sqrt_lower<6>(f.covariance);
        }
      },
      factor);
}

std::vector<VariableRef> variables_of(const Factor& factor) {
  using Kind = VariableRef::Kind;
  return std::visit(
      [](const auto& f) -> std::vector<VariableRef> {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, PriorPoseFactor>) {
          return {{Kind::Pose, f.pose, 6}};
        } else if constexpr (std::is_same_v<F, OdometryFactor>) {
          return {{Kind::Pose, f.from, 6}, {Kind::Pose, f.to, 6}};
        } else {
          return {{Kind::Pose, f.pose, 6}, {Kind::Landmark, f.landmark, 3}};
        }
      },
      factor);
}

// Offsets of every variable in the stacked tangent vector: poses in id order,
// then landmarks in id order.
struct Ordering {
  std::map<int, int> pose_offset;
  std::map<int, int> landmark_offset;
  int dim = 0;

  explicit Ordering(const FactorGraph& graph) {
    for (const auto& node : graph.poses()) {
      pose_offset[node.id] = dim;
      dim += 6;
    }
    for (const auto& [id, lm] : graph.landmarks()) {
      landmark_offset[id] = dim;
      dim += 3;
    }
  }

  int offset(const VariableRef& v) const {
    return v.kind == VariableRef::Kind::Pose ? pose_offset.at(v.id) : landmark_offset.at(v.id);
  }

  std::string describe(int index) const {
    std::string best;
    for (const auto& [id, off] : pose_offset) {
      if (index >= off && index < off + 6) return "pose " + std::to_string(id);
    }
    for (const auto& [id, off] : landmark_offset) {
      if (index >= off && index < off + 3) return "landmark " + std::to_string(id);
    }
    return "unknown";
  }
};

struct NormalEquations {
  Eigen::SparseMatrix<double> hessian;
  Eigen::VectorXd gradient;
  double chi2 = 0.0;
};

NormalEquations build_normal_equations(const FactorGraph& graph, const Ordering& ordering) {
  std::vector<Eigen::Triplet<double>> triplets;
  NormalEquations ne;
  ne.gradient = Eigen::VectorXd::Zero(ordering.dim);
  for (const auto& factor : graph.factors()) {
    const Linearization lin = linearize_factor(graph, factor, true);
    ne.chi2 += lin.residual.squaredNorm();
    for (std::size_t a = 0; a < lin.variables.size(); ++a) {
      const int oa = ordering.offset(lin.variables[a]);
      ne.gradient.segment(oa, lin.variables[a].dim) += lin.jacobians[a].transpose() * lin.residual;
      for (std::size_t b = 0; b < lin.variables.size(); ++b) {
        const int ob = ordering.offset(lin.variables[b]);
        const Eigen::MatrixXd block = lin.jacobians[a].transpose() * lin.jacobians[b];
        for (int r = 0; r < block.rows(); ++r) {
          for (int c = 0; c < block.cols(); ++c) triplets.emplace_back(oa + r, ob + c, block(r, c));
        }
      }
    }
  }
  // Explicit diagonal keeps the sparsity pattern fixed under damping.
  for (int i = 0; i < ordering.dim; ++i) triplets.emplace_back(i, i, 0.0);
  ne.hessian.resize(ordering.dim, ordering.dim);
  ne.hessian.setFromTriplets(triplets.begin(), triplets.end());
  return ne;
}

void apply_update(FactorGraph& graph, const Ordering& ordering, const Eigen::VectorXd& delta) {
  for (auto& node : graph.poses()) {
    const Eigen::Matrix<double, 6, 1> d = delta.segment<6>(ordering.pose_offset.at(node.id));
    node.pose = pose_retract(node.pose, d);
    // Re-project onto SO(3) to stop round-off accumulating.
    Eigen::Quaterniond q(node.pose.R);
    node.pose.R = q.normalized().toRotationMatrix();
  }
  for (auto& [id, lm] : graph.landmarks()) {
    lm.minimal = lm.minimal.retract(delta.segment<3>(ordering.landmark_offset.at(id)));
  }
}

void check_rank(const NormalEquations& ne, const Ordering& ordering) {
  const Eigen::SparseMatrix<double>& h = ne.hessian;
  const int n = static_cast<int>(h.rows());
  if (n == 0) return;
  const double mean_diag = h.diagonal().sum() / n;
  if (!(mean_diag > 0.0)) {
    throw SingularSystemError("normal equations are empty", Eigen::VectorXd::Zero(n), "all",
                              Eigen::Vector3d::Zero());
  }
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(h);
  if (ldlt.info() == Eigen::Success) {
    const Eigen::VectorXd d = ldlt.vectorD();
    if (d.minCoeff() > 1e-10 * d.cwiseAbs().maxCoeff()) return;
  }
  // Inverse iteration on a slightly shifted matrix isolates the null vector.
  Eigen::SparseMatrix<double> shifted = h;
  for (int i = 0; i < n; ++i) shifted.coeffRef(i, i) += 1e-9 * mean_diag;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(shifted);
  Eigen::VectorXd x = Eigen::VectorXd::Ones(n).normalized();
  for (int it = 0; it < 30; ++it) {
    x = solver.solve(x);
    x.normalize();
  }
  const double rayleigh = x.dot(h * x);
  if (rayleigh > 1e-8 * mean_diag) return;

  Eigen::Index worst = 0;
  x.cwiseAbs().maxCoeff(&worst);
  const std::string variable = ordering.describe(static_cast<int>(worst));
  Eigen::Vector3d dir = Eigen::Vector3d::Zero();
  for (const auto& [id, off] : ordering.pose_offset) {
    if (worst >= off && worst < off + 6) {
      dir = x.segment<3>(off + 3);
      if (dir.norm() > 0.0) dir.normalize();
    }
  }
  std::ostringstream msg;
  msg << "rank-deficient normal equations (min eigenvalue ~" << rayleigh << "), unconstrained " << variable
      << " along translation (" << dir.transpose() << ")";
  throw SingularSystemError(msg.str(), x, variable, dir);
}

}  // namespace

Linearization linearize_factor(const FactorGraph& graph, const Factor& factor, bool whitened) {
  ValueLinearization raw = linearize_raw(graph, factor);
  Linearization lin;
  lin.variables = variables_of(factor);
  if (whitened) {
    const Eigen::MatrixXd w = whitening(factor);
    raw.residual = w * raw.residual;
    raw.jacobian = w * raw.jacobian;
  }
  lin.residual = std::move(raw.residual);
  int col = 0;
  for (const auto& v : lin.variables) {
    lin.jacobians.push_back(raw.jacobian.middleCols(col, v.dim));
    col += v.dim;
  }
  return lin;
}

OptimizeReport optimize(FactorGraph& graph, const SolverSettings& settings) {
  bool has_prior = false;
  for (const auto& f : graph.factors()) has_prior = has_prior || std::holds_alternative<PriorPoseFactor>(f);
  if (!has_prior) {
    throw Error(ErrorCode::PreconditionViolation, "optimization needs at least one prior factor");
  }
  const Ordering ordering(graph);
  OptimizeReport report;
  NormalEquations ne = build_normal_equations(graph, ordering);
  report.initial_chi2 = report.final_chi2 = ne.chi2;
  report.chi2_history.push_back(ne.chi2);
  if (settings.check_rank) check_rank(ne, ordering);
  if (ne.chi2 < 1e-20) {
    report.termination = "already optimal";
    return report;
  }

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  solver.analyzePattern(ne.hessian);
  double lambda = settings.lambda_init;
  double nu = 2.0;
  double chi2 = ne.chi2;
  const auto reject = [&] {
    lambda *= nu;
    nu *= 2.0;
    return lambda <= settings.lambda_max;
  };
  report.termination = "max iterations";
  while (report.iterations < settings.max_iterations) {
    ++report.iterations;
    Eigen::SparseMatrix<double> damped = ne.hessian;
    for (int i = 0; i < ordering.dim; ++i) {
      const double d = std::clamp(ne.hessian.coeff(i, i), 1e-6, 1e32);
      damped.coeffRef(i, i) += lambda * d;
    }
    solver.factorize(damped);
    if (solver.info() != Eigen::Success) {
      if (!reject()) {
        report.termination = "damping limit";
        break;
      }
      continue;
    }
    const Eigen::VectorXd delta = solver.solve(-ne.gradient);
    if (delta.norm() < settings.step_tolerance) {
      report.termination = "small step";
      break;
    }
    FactorGraph trial = graph;
    apply_update(trial, ordering, delta);
    const double trial_chi2 = trial.chi2();
    const double predicted = -(2.0 * ne.gradient.dot(delta) + delta.dot(ne.hessian * delta));
    if (trial_chi2 < chi2) {
      const double decrease = (chi2 - trial_chi2) / chi2;
      const double rho = predicted > 0.0 ? (chi2 - trial_chi2) / predicted : 1.0;
      graph = std::move(trial);
      chi2 = trial_chi2;
      report.chi2_history.push_back(chi2);
      ++report.accepted;
      lambda = std::max(lambda * std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3)), 1e-12);
      nu = 2.0;
      if (decrease < settings.relative_tolerance) {
        report.termination = "relative decrease";
        break;
      }
      if (chi2 < 1e-20) {
        report.termination = "zero residual";
        break;
      }
      ne = build_normal_equations(graph, ordering);
    } else if (!reject()) {
      report.termination = "damping limit";
      break;
    }
  }
  report.final_chi2 = chi2;
  return report;
}

}  // namespace popup
