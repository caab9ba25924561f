#pragma once

#include <string>
#include <vector>

#include "faceaudit/model.hpp"

namespace faceaudit {

struct NotClassifiedKError : std::runtime_error {
  NotClassifiedKError() : std::runtime_error("model does not classify the input as the target class") {}
};
struct DivergedError : std::runtime_error {
  DivergedError() : std::runtime_error("objective became non-finite") {}
};
struct EmptyGroupError : std::runtime_error {
  EmptyGroupError() : std::runtime_error("group has no converged explanations") {}
};

struct CemParams {
  double kappa = 10.0;  // hinge margin
  double beta = 0.1;    // L1 weight
  std::vector<double> c_grid = {0.1, 1.0, 10.0, 100.0};
  int max_iters = 1000;
  double step_size = 0.1;  // initial step; backtracking only shrinks it
  double tolerance = 1e-6;

  void validate() const;
};

/// A minimal sufficient part of the input: delta lives in the box
/// 0 <= delta <= X and, when achieved_f_kappa < 0, is still classified
/// as the target class on its own.
struct PertinentPositive {
  Tensor3 delta;
  double achieved_f_kappa = 0.0;
  double chosen_c = 0.0;
  std::vector<double> objective_trace;  // best-so-far value per iteration, nonincreasing
  bool converged = false;
};

struct AverageMask {
  std::string group;
  Tensor3 mean;
  std::size_t count = 0;  // converged explanations contributing
};

/// Hinge max(max_{k' != k} f_{k'} - f_k, -kappa); >= -kappa always.
double f_kappa(const LogitVector& logits, Gender k, double kappa);

/// Elementwise prox of lambda*|z| plus the [0, hi] box indicator:
/// soft-threshold v by lambda, then clamp to [0, hi].
double prox_box_l1(double v, double lambda, double hi);

double l1_norm(const Tensor3& t);

/// Minimizes c*f_kappa(delta) + beta*|delta|_1 + |delta|_2^2 over the box
/// 0 <= delta <= x by accelerated proximal gradient with backtracking and
/// restart on objective increase. Requires the model to classify x as k.
PertinentPositive pertinent_positive(const CompactNet& net, const Tensor3& x, Gender k,
                                     double c, const CemParams& params);

/// Runs pertinent_positive for every c in params.c_grid and keeps the
/// solution with the smallest L1 norm among those with achieved_f_kappa < 0.
/// When no run preserves the class, returns the run with the lowest
/// f_kappa with converged forced to false.
PertinentPositive search_c(const CompactNet& net, const Tensor3& x, Gender k,
                           const CemParams& params);

/// Elementwise mean of delta over the converged members of a group.
AverageMask average_mask(std::string group, const std::vector<PertinentPositive>& members);

}  // namespace faceaudit
