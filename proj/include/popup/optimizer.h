#pragma once

// Batch Levenberg-Marquardt over pose (6-dof) and plane (3-dof) charts.

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <string>
#include <vector>

#include "popup/factor_graph.h"

namespace popup {

struct SolverSettings {
  int max_iterations = 100;
  double relative_tolerance = 1e-8;  // on chi2 decrease of an accepted step
  double step_tolerance = 1e-10;     // on |delta|
  // Damping scales the Hessian diagonal. It adapts to the ratio of actual to
  // predicted chi2 decrease (Nielsen's rule).
  double lambda_init = 1e-4;
  double lambda_max = 1e12;
  bool check_rank = true;
};

struct OptimizeReport {
  int iterations = 0;
  int accepted = 0;
  double initial_chi2 = 0.0;
  double final_chi2 = 0.0;
  std::vector<double> chi2_history;  // after each accepted step, starting with the initial value
  std::string termination;
};

// Raised when the undamped normal equations have a null direction.
class SingularSystemError : public Error {
 public:
  SingularSystemError(const std::string& what, Eigen::VectorXd null_vector, std::string variable,
                      Eigen::Vector3d translation_direction)
      : Error(ErrorCode::SingularSystem, what),
        null_vector_(std::move(null_vector)),
        variable_(std::move(variable)),
        direction_(translation_direction) {}

  const Eigen::VectorXd& null_vector() const { return null_vector_; }
  // e.g. "pose 3" or "landmark 1": the block carrying the largest share.
  const std::string& variable() const { return variable_; }
  // Unit translation part of the dominant pose block (zero for planes).
  const Eigen::Vector3d& free_direction() const { return direction_; }

 private:
  Eigen::VectorXd null_vector_;
  std::string variable_;
  Eigen::Vector3d direction_;
};

struct VariableRef {
  enum class Kind { Pose, Landmark } kind = Kind::Pose;
  int id = 0;
  int dim = 6;
};

// Whitened residual and Jacobians of one factor; one Jacobian per variable
// block it touches, in the order (pose, ...) then landmark.
struct Linearization {
  Eigen::VectorXd residual;
  std::vector<Eigen::MatrixXd> jacobians;
  std::vector<VariableRef> variables;
};

// Unwhitened error and Jacobians with respect to the local charts of the
// factor's variables, computed by forward-mode automatic differentiation.
Linearization linearize_factor(const FactorGraph& graph, const Factor& factor, bool whitened = true);

// Runs LM in place on the graph. Throws SingularSystemError when the
// problem is rank-deficient.
OptimizeReport optimize(FactorGraph& graph, const SolverSettings& settings = {});

}  // namespace popup
