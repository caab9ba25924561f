#include "faceaudit/explain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

namespace faceaudit {

void CemParams::validate() const {
  if (kappa < 0) throw std::invalid_argument("kappa must be nonnegative");
  if (beta <= 0) throw std::invalid_argument("beta must be positive");
  if (c_grid.empty()) throw std::invalid_argument("c_grid must be nonempty");
  for (double c : c_grid)
    if (c <= 0) throw std::invalid_argument("c values must be positive");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be positive");
  if (step_size <= 0) throw std::invalid_argument("step_size must be positive");
  if (tolerance <= 0) throw std::invalid_argument("tolerance must be positive");
}

double f_kappa(const LogitVector& logits, Gender k, double kappa) {
  const Gender other = k == Gender::Female ? Gender::Male : Gender::Female;
  return std::max(logits.at(other) - logits.at(k), -kappa);
}

double prox_box_l1(double v, double lambda, double hi) {
  double soft = 0.0;
  if (v > lambda)
    soft = v - lambda;
  else if (v < -lambda)
    soft = v + lambda;
  return std::clamp(soft, 0.0, hi);
}

double l1_norm(const Tensor3& t) {
  double sum = 0.0;
  for (double v : t.v) sum += std::fabs(v);
  return sum;
}

namespace {

struct SmoothEval {
  double value = 0.0;  // c * hinge + |delta|_2^2
  double hinge = 0.0;
};

std::vector<bool> support_of(const Tensor3& t) {
  std::vector<bool> s(t.v.size());
  for (std::size_t i = 0; i < t.v.size(); ++i) s[i] = t.v[i] != 0.0;
  return s;
}

}  // namespace

PertinentPositive pertinent_positive(const CompactNet& net, const Tensor3& x, Gender k,
                                     double c, const CemParams& params) {
  params.validate();
  if (c <= 0) throw std::invalid_argument("c must be positive");
  for (double v : x.v)
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("input must lie in the [0,1] box");
  if (net.score(x).decision() != k) throw NotClassifiedKError();

  const Gender other = k == Gender::Female ? Gender::Male : Gender::Female;
  const double d_female = other == Gender::Female ? 1.0 : -1.0;
  const double d_male = -d_female;

  // Smooth part c*hinge + |delta|^2; the hinge gradient vanishes once
  // saturated at -kappa.
  auto eval_smooth = [&](const Tensor3& d, Tensor3* grad) {
    const LogitVector lv = net.logits(d);
    SmoothEval e;
    const double arg = lv.at(other) - lv.at(k);
    e.hinge = std::max(arg, -params.kappa);
    double l2 = 0.0;
    for (double v : d.v) l2 += v * v;
    e.value = c * e.hinge + l2;
    if (grad) {
      if (arg > -params.kappa) {
        *grad = net.input_gradient(d, d_female, d_male);
        for (std::size_t i = 0; i < grad->v.size(); ++i) grad->v[i] = c * grad->v[i] + 2.0 * d.v[i];
      } else {
        *grad = d;
        for (double& v : grad->v) v *= 2.0;
      }
    }
    return e;
  };

  constexpr int kWindow = 20;
  Tensor3 cur = x;  // start from the full input
  Tensor3 prev = cur;
  Tensor3 y = cur;
  double t = 1.0;
  double step = params.step_size;

  PertinentPositive result;
  result.chosen_c = c;

  SmoothEval cur_eval = eval_smooth(cur, nullptr);
  double cur_obj = cur_eval.value + params.beta * l1_norm(cur);
  result.delta = cur;
  result.achieved_f_kappa = cur_eval.hinge;
  double best_obj = cur_obj;
  result.objective_trace.push_back(best_obj);

  std::vector<bool> last_support = support_of(cur);
  int support_stable = 0;

  for (int iter = 1; iter <= params.max_iters; ++iter) {
    Tensor3 grad;
    const SmoothEval y_eval = eval_smooth(y, &grad);

    Tensor3 cand(x.channels, x.height, x.width);
    SmoothEval cand_eval;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t i = 0; i < x.v.size(); ++i)
        cand.v[i] = prox_box_l1(y.v[i] - step * grad.v[i], params.beta * step, x.v[i]);
      cand_eval = eval_smooth(cand, nullptr);
      double bound = y_eval.value;
      double sq = 0.0;
      for (std::size_t i = 0; i < x.v.size(); ++i) {
        const double d = cand.v[i] - y.v[i];
        bound += grad.v[i] * d;
        sq += d * d;
      }
      bound += sq / (2.0 * step);
      if (cand_eval.value <= bound + 1e-12) break;
      step *= 0.5;
    }

    const double prev_obj = cur_obj;
    prev = std::move(cur);
    cur = cand;
    cur_eval = cand_eval;
    cur_obj = cur_eval.value + params.beta * l1_norm(cur);
    if (!std::isfinite(cur_obj)) throw DivergedError();

    const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
    if (cur_obj > prev_obj) {  // restart: drop momentum
      y = cur;
      t = 1.0;
    } else {
      const double momentum = (t - 1.0) / t_next;
      y = cur;
      for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += momentum * (cur.v[i] - prev.v[i]);
      t = t_next;
    }

    if (cur_obj < best_obj) {
      best_obj = cur_obj;
      result.delta = cur;
      result.achieved_f_kappa = cur_eval.hinge;
    }
    result.objective_trace.push_back(best_obj);

    const std::size_t n = result.objective_trace.size();
    if (n > kWindow &&
        result.objective_trace[n - 1 - kWindow] - best_obj < params.tolerance) {
      result.converged = true;
      break;
    }

    std::vector<bool> sup = support_of(cur);
    if (cur_eval.hinge <= -params.kappa && sup == last_support)
      ++support_stable;
    else
      support_stable = 0;
    last_support = std::move(sup);
    if (support_stable >= kWindow) {
      result.converged = true;
      break;
    }
  }

  return result;
}

PertinentPositive search_c(const CompactNet& net, const Tensor3& x, Gender k,
                           const CemParams& params) {
  params.validate();
  std::optional<PertinentPositive> sparsest;
  double sparsest_l1 = std::numeric_limits<double>::infinity();
  std::optional<PertinentPositive> fallback;

  for (double c : params.c_grid) {
    PertinentPositive pp = pertinent_positive(net, x, k, c, params);
    if (pp.achieved_f_kappa < 0.0) {
      const double l1 = l1_norm(pp.delta);
      if (l1 < sparsest_l1) {
        sparsest_l1 = l1;
        sparsest = pp;
      }
    }
    if (!fallback || pp.achieved_f_kappa < fallback->achieved_f_kappa) fallback = pp;
  }

  if (sparsest) return *sparsest;
  fallback->converged = false;
  return *fallback;
}

AverageMask average_mask(std::string group, const std::vector<PertinentPositive>& members) {
  AverageMask mask;
  mask.group = std::move(group);
  for (const PertinentPositive& pp : members) {
    if (!pp.converged) continue;
    if (mask.count == 0) {
      mask.mean = pp.delta;
    } else {
      if (!mask.mean.same_shape(pp.delta)) throw InputShapeError("explanation shapes differ");
      for (std::size_t i = 0; i < mask.mean.v.size(); ++i) mask.mean.v[i] += pp.delta.v[i];
    }
    ++mask.count;
  }
  if (mask.count == 0) throw EmptyGroupError();
  for (double& v : mask.mean.v) v /= static_cast<double>(mask.count);
  return mask;
}

}  // namespace faceaudit
