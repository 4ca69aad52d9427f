#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "ssimadv/metrics.hpp"
#include "ssimadv/model.hpp"

namespace ssimadv {

enum class LossKind { cw_margin, xent };

/// Margin loss: c * max(f_true - max_{s != true} f_s + kappa, 0). The
/// cross-entropy kind ignores c and kappa and is the plain negative
/// log-softmax of the true class.
template <typename Scalar>
struct MarginLossParams {
  Scalar c = Scalar(1);
  Scalar kappa = Scalar(0);
  LossKind kind = LossKind::cw_margin;

  void validate() const {
    if (!(c > 0)) throw std::invalid_argument("MarginLossParams: c must be positive");
    if (!(kappa >= 0)) throw std::invalid_argument("MarginLossParams: kappa must be >= 0");
  }
};

namespace detail {

// Highest-scoring class other than `label`, lowest index on ties.
template <typename Scalar>
int runner_up(const VecX<Scalar>& scores, int label) {
  int best = label == 0 ? 1 : 0;
  for (int i = 0; i < scores.size(); ++i)
    if (i != label && scores[i] > scores[best]) best = i;
  return best;
}

template <typename Scalar>
void check_label(const VecX<Scalar>& scores, int label, const char* where) {
  if (scores.size() < 2) throw std::invalid_argument(std::string(where) + ": need >= 2 scores");
  if (label < 0 || label >= scores.size())
    throw std::invalid_argument(std::string(where) + ": label out of range");
}

}  // namespace detail

template <typename Scalar>
Scalar margin_loss(const VecX<Scalar>& scores, int label, const MarginLossParams<Scalar>& p) {
  detail::check_label(scores, label, "margin_loss");
  if (p.kind == LossKind::xent) return cross_entropy(scores, label);
  const int rival = detail::runner_up(scores, label);
  const Scalar margin = scores[label] - scores[rival] + p.kappa;
  return margin > 0 ? p.c * margin : Scalar(0);
}

/// Gradient of margin_loss with respect to the scores. The max over rival
/// classes routes the gradient through the single attaining class.
template <typename Scalar>
VecX<Scalar> margin_loss_score_grad(const VecX<Scalar>& scores, int label,
                                    const MarginLossParams<Scalar>& p) {
  detail::check_label(scores, label, "margin_loss_score_grad");
  if (p.kind == LossKind::xent) return cross_entropy_score_grad(scores, label);
  VecX<Scalar> g = VecX<Scalar>::Zero(scores.size());
  const int rival = detail::runner_up(scores, label);
  if (scores[label] - scores[rival] + p.kappa > 0) {
    g[label] = p.c;
    g[rival] = -p.c;
  }
  return g;
}

/// Score gradient of the objective PGD ascends: cross-entropy of the true
/// class, or for the margin kind the unhinged rival-minus-true margin (so the
/// push continues past the decision boundary instead of dying in the hinge).
template <typename Scalar>
VecX<Scalar> pgd_ascent_score_grad(const VecX<Scalar>& scores, int label, LossKind kind) {
  detail::check_label(scores, label, "pgd_ascent_score_grad");
  if (kind == LossKind::xent) return cross_entropy_score_grad(scores, label);
  VecX<Scalar> g = VecX<Scalar>::Zero(scores.size());
  g[detail::runner_up(scores, label)] = Scalar(1);
  g[label] = Scalar(-1);
  return g;
}

/// Everything the evaluation needs about one finished attack. The image is
/// the returned adversarial candidate, always inside [0,1]^n.
template <typename Scalar>
struct AttackOutcome {
  bool success = false;
  Image<Scalar> image;
  Scalar ssim = Scalar(1);
  Scalar l1 = 0, l2 = 0, linf = 0;
  int original_label = 0;
  int adversarial_label = 0;
  Scalar c_final = Scalar(1);
  int iterations = 0;
};

template <typename Scalar>
AttackOutcome<Scalar> evaluate_outcome(const ScoreModel<Scalar>& m, const Image<Scalar>& x,
                                       const ArrX<Scalar>& delta, int label,
                                       const SsimParams<Scalar>& sp, Scalar c_final,
                                       int iterations) {
  AttackOutcome<Scalar> out;
  out.image = Image<Scalar>(x.data + delta, x.shape);
  out.adversarial_label = m.predict(out.image.data);
  out.original_label = label;
  out.success = out.adversarial_label != label;
  out.ssim = ssim(x, out.image, sp);
  out.l1 = lp_distortion(delta, LpNorm::l1);
  out.l2 = lp_distortion(delta, LpNorm::l2);
  out.linf = lp_distortion(delta, LpNorm::linf);
  out.c_final = c_final;
  out.iterations = iterations;
  return out;
}

template <typename Scalar>
struct PgdConfig {
  Scalar epsilon = Scalar(0.3);
  int steps = 20;
  Scalar step_size = Scalar(-1);  // nonpositive: use epsilon / 4
  LossKind loss = LossKind::xent;
  SsimParams<Scalar> ssim{};

  Scalar resolved_step() const { return step_size > 0 ? step_size : epsilon / 4; }
  void validate() const {
    if (!(epsilon >= 0)) throw std::invalid_argument("PgdConfig: epsilon must be >= 0");
    if (steps < 1) throw std::invalid_argument("PgdConfig: steps must be >= 1");
  }
};

/// Sign-step ascent under an L-infinity budget. Without filtering returns the
/// final iterate; with filter_ssim returns the successful iterate (the start
/// included) of highest SSIM, falling back to the final iterate if none
/// succeeds.
template <typename Scalar>
AttackOutcome<Scalar> pgd_attack(
    const ScoreModel<Scalar>& m, const Image<Scalar>& x, int label,
    const PgdConfig<Scalar>& cfg, bool filter_ssim,
    const std::type_identity_t<std::function<void(const ArrX<Scalar>&)>>& on_iterate = {}) {
  cfg.validate();
  const Scalar step = cfg.resolved_step();
  ArrX<Scalar> delta = ArrX<Scalar>::Zero(x.data.size());
  Workspace<Scalar> ws;

  bool have_best = false;
  ArrX<Scalar> best_delta;
  Scalar best_ssim = -std::numeric_limits<Scalar>::infinity();
  auto consider = [&](const ArrX<Scalar>& d) {
    if (!filter_ssim) return;
    const Image<Scalar> cand(x.data + d, x.shape);
    if (m.predict(cand.data) == label) return;
    const Scalar s = ssim(x, cand, cfg.ssim);
    if (!have_best || s > best_ssim) {
      have_best = true;
      best_ssim = s;
      best_delta = d;
    }
  };

  consider(delta);
  if (on_iterate) on_iterate(delta);
  for (int t = 0; t < cfg.steps; ++t) {
    const VecX<Scalar>& scores = m.forward(x.data + delta, ws);
    const ArrX<Scalar> grad =
        m.backward_input(ws, pgd_ascent_score_grad(scores, label, cfg.loss));
    delta += step * grad.sign();
    delta = delta.cwiseMax(-cfg.epsilon).cwiseMin(cfg.epsilon);
    delta = clip_to_box(x.data, delta);
    consider(delta);
    if (on_iterate) on_iterate(delta);
  }

  const ArrX<Scalar>& returned = have_best ? best_delta : delta;
  return evaluate_outcome(m, x, returned, label, cfg.ssim, Scalar(1), cfg.steps);
}

// ---------------------------------------------------------------------------
// Binary search over the loss scale c.

/// Search trace entry, mostly for tests: the c tried each round and whether
/// that round's run succeeded.
template <typename Scalar>
struct SearchRound {
  Scalar c;
  bool success;
};

/// Runs `attack(c)` for K rounds, steering c like a bisection bracketed by
/// [0, 1e10]: success shrinks the upper bound to c, failure raises the lower
/// bound; c moves to the midpoint once the upper bound has dropped below 1e9
/// and is multiplied by 10 on failure until then. Returns the successful
/// candidate of highest quality across the rounds, or the last round's
/// outcome with success=false if every round failed. The reported iteration
/// count sums over all rounds.
template <typename Scalar, typename Attack, typename Quality>
AttackOutcome<Scalar> binary_search_c(Attack&& attack, int K, Quality&& quality,
                                      std::vector<SearchRound<Scalar>>* trace = nullptr) {
  if (K < 1) throw std::invalid_argument("binary_search_c: K must be >= 1");
  Scalar c = Scalar(1e-3);
  Scalar lower = Scalar(0);
  Scalar upper = Scalar(1e10);
  AttackOutcome<Scalar> best;
  bool have_best = false;
  Scalar best_q = -std::numeric_limits<Scalar>::infinity();
  AttackOutcome<Scalar> last;
  int total_iters = 0;

  for (int round = 0; round < K; ++round) {
    AttackOutcome<Scalar> out = attack(c);
    total_iters += out.iterations;
    if (trace) trace->push_back({c, out.success});
    last = out;
    if (out.success) {
      const Scalar q = quality(out);
      if (!have_best || q > best_q) {
        have_best = true;
        best_q = q;
        best = out;
      }
      upper = std::min(upper, c);
      if (upper < Scalar(1e9)) c = (lower + upper) / 2;
    } else {
      lower = std::max(lower, c);
      c = upper < Scalar(1e9) ? (lower + upper) / 2 : 10 * c;
    }
  }
  AttackOutcome<Scalar> result = have_best ? best : last;
  result.iterations = total_iters;
  return result;
}

// ---------------------------------------------------------------------------
// Elastic-net attack.

template <typename Scalar>
Scalar soft_threshold(Scalar v, Scalar t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return Scalar(0);
}

template <typename Derived>
ArrX<typename Derived::Scalar> soft_threshold(const Eigen::ArrayBase<Derived>& v,
                                              typename Derived::Scalar t) {
  using S = typename Derived::Scalar;
  return (v - t).cwiseMax(S(0)) + (v + t).cwiseMin(S(0));
}

template <typename Scalar>
struct EnetConfig {
  Scalar beta = Scalar(0.01);
  int iterations = 1000;
  Scalar lr0 = Scalar(0.01);
  int search_steps = 9;
  Scalar kappa = Scalar(0);
  SsimParams<Scalar> ssim{};

  void validate() const {
    if (!(beta > 0)) throw std::invalid_argument("EnetConfig: beta must be positive");
    if (iterations < 1) throw std::invalid_argument("EnetConfig: iterations must be >= 1");
    if (!(lr0 > 0)) throw std::invalid_argument("EnetConfig: lr0 must be positive");
    if (search_steps < 1) throw std::invalid_argument("EnetConfig: search_steps must be >= 1");
  }

  Scalar quality(const AttackOutcome<Scalar>& out) const {
    return -(beta * out.l1 + out.l2 * out.l2);
  }
};

/// One proximal-gradient run at a fixed c: gradient step on the smooth part
/// (margin loss + ||delta||_2^2), soft-threshold by beta * lr_t for the L1
/// term, then box projection. The learning rate decays as lr0 / sqrt(t).
/// Beta may be 0 here, degenerating the threshold to a no-op; enforcing
/// beta > 0 on real runs is the config's job. Returns the successful iterate
/// (start included) of best elastic quality, else the final iterate.
template <typename Scalar>
AttackOutcome<Scalar> enet_single_run(const ScoreModel<Scalar>& m, const Image<Scalar>& x,
                                      int label, const EnetConfig<Scalar>& cfg, Scalar c) {
  MarginLossParams<Scalar> lp{c, cfg.kappa, LossKind::cw_margin};
  ArrX<Scalar> delta = ArrX<Scalar>::Zero(x.data.size());
  Workspace<Scalar> ws;

  bool have_best = false;
  ArrX<Scalar> best_delta;
  Scalar best_q = -std::numeric_limits<Scalar>::infinity();
  auto consider = [&](const ArrX<Scalar>& d) {
    if (m.predict(x.data + d) == label) return;
    const Scalar l2 = lp_distortion(d, LpNorm::l2);
    const Scalar q = -(cfg.beta * lp_distortion(d, LpNorm::l1) + l2 * l2);
    if (!have_best || q > best_q) {
      have_best = true;
      best_q = q;
      best_delta = d;
    }
  };

  consider(delta);
  for (int t = 1; t <= cfg.iterations; ++t) {
    const Scalar lr = cfg.lr0 / std::sqrt(Scalar(t));
    const VecX<Scalar>& scores = m.forward(x.data + delta, ws);
    const ArrX<Scalar> grad =
        m.backward_input(ws, margin_loss_score_grad(scores, label, lp)) + 2 * delta;
    delta = soft_threshold(ArrX<Scalar>(delta - lr * grad), cfg.beta * lr);
    delta = clip_to_box(x.data, delta);
    consider(delta);
  }

  const ArrX<Scalar>& returned = have_best ? best_delta : delta;
  return evaluate_outcome(m, x, returned, label, cfg.ssim, c, cfg.iterations);
}

template <typename Scalar>
AttackOutcome<Scalar> enet_attack(const ScoreModel<Scalar>& m, const Image<Scalar>& x,
                                  int label, const EnetConfig<Scalar>& cfg) {
  cfg.validate();
  return binary_search_c<Scalar>(
      [&](Scalar c) { return enet_single_run(m, x, label, cfg, c); }, cfg.search_steps,
      [&](const AttackOutcome<Scalar>& out) { return cfg.quality(out); });
}

// ---------------------------------------------------------------------------
// SSIM-constrained Lagrangian attack.

/// Adam over the 4 dual variables.
template <typename Scalar>
struct DualAdam {
  Eigen::Array<Scalar, 4, 1> m = Eigen::Array<Scalar, 4, 1>::Zero();
  Eigen::Array<Scalar, 4, 1> v = Eigen::Array<Scalar, 4, 1>::Zero();
  int t = 0;

  /// One descent step on the supplied gradient; returns the updated point.
  Eigen::Array<Scalar, 4, 1> step(const Eigen::Array<Scalar, 4, 1>& param,
                                  const Eigen::Array<Scalar, 4, 1>& grad, Scalar lr,
                                  Scalar beta1, Scalar beta2, Scalar eps) {
    ++t;
    m = beta1 * m + (1 - beta1) * grad;
    v = beta2 * v + (1 - beta2) * grad.square();
    const Eigen::Array<Scalar, 4, 1> mhat = m / (1 - std::pow(beta1, Scalar(t)));
    const Eigen::Array<Scalar, 4, 1> vhat = v / (1 - std::pow(beta2, Scalar(t)));
    return param - lr * mhat / (vhat.sqrt() + eps);
  }
};

template <typename Scalar>
struct SsimAttackConfig {
  enum class Init { zero, enet };

  ConstraintThresholds<Scalar> thresholds{};
  int iterations = 1000;  // T
  Scalar primal_lr = Scalar(0.01);
  Scalar dual_lr = Scalar(0.01);
  Scalar dual_beta1 = Scalar(0.9);
  Scalar dual_beta2 = Scalar(0.999);
  Scalar dual_eps = Scalar(1e-8);
  Init init = Init::zero;
  int search_steps = 9;  // K
  Scalar kappa = Scalar(0);
  SsimParams<Scalar> ssim{};
  // When off, each run returns x + delta_T verbatim instead of the best
  // successful iterate by SSIM.
  bool keep_best = true;

  void validate() const {
    thresholds.validate();
    if (iterations < 1) throw std::invalid_argument("SsimAttackConfig: T must be >= 1");
    if (!(primal_lr > 0))
      throw std::invalid_argument("SsimAttackConfig: primal_lr must be > 0");
    if (!(dual_lr > 0)) throw std::invalid_argument("SsimAttackConfig: dual_lr must be > 0");
    if (search_steps < 1) throw std::invalid_argument("SsimAttackConfig: K must be >= 1");
  }
};

template <typename Scalar>
struct SsimAttackState {
  ArrX<Scalar> delta;
  Eigen::Array<Scalar, 4, 1> lambda = Eigen::Array<Scalar, 4, 1>::Zero();
  DualAdam<Scalar> dual;
  int t = 0;  // completed steps
};

/// Gradient in delta of the Lagrangian
///   margin_loss(x + delta) + sum_i lambda_i g_i(x + delta, x).
template <typename Scalar>
ArrX<Scalar> lagrangian_delta_grad(const ScoreModel<Scalar>& m, const Image<Scalar>& x,
                                   const ArrX<Scalar>& delta,
                                   const Eigen::Array<Scalar, 4, 1>& lambda, int label,
                                   const MarginLossParams<Scalar>& lp,
                                   const SsimParams<Scalar>& sp,
                                   const ConstraintThresholds<Scalar>& th) {
  Workspace<Scalar> ws;
  const VecX<Scalar>& scores = m.forward(x.data + delta, ws);
  ArrX<Scalar> grad = m.backward_input(ws, margin_loss_score_grad(scores, label, lp));
  const Image<Scalar> y(x.data + delta, x.shape);
  grad += (constraint_gradients(y, x, sp, th).matrix() * lambda.matrix()).array();
  return grad;
}

/// One primal-dual update. The dual gradient is the constraint vector
/// evaluated at the pre-update delta; the primal move is plain gradient
/// descent with the decayed rate followed by the box clip; the dual move is
/// an Adam ascent clamped to lambda >= 0.
template <typename Scalar>
void ssim_lagrangian_step(SsimAttackState<Scalar>& state, const Image<Scalar>& x,
                          const ScoreModel<Scalar>& m, int label,
                          const MarginLossParams<Scalar>& lp,
                          const SsimAttackConfig<Scalar>& cfg) {
  const Image<Scalar> y(x.data + state.delta, x.shape);
  const ConstraintValues<Scalar> g = constraints(y, x, cfg.ssim, cfg.thresholds);
  const ArrX<Scalar> grad = lagrangian_delta_grad(m, x, state.delta, state.lambda, label, lp,
                                                  cfg.ssim, cfg.thresholds);
  ++state.t;
  const Scalar eta = cfg.primal_lr / std::sqrt(Scalar(state.t));
  state.delta = clip_to_box(x.data, ArrX<Scalar>(state.delta - eta * grad));
  state.lambda = state.dual
                     .step(state.lambda, Eigen::Array<Scalar, 4, 1>(-g), cfg.dual_lr,
                           cfg.dual_beta1, cfg.dual_beta2, cfg.dual_eps)
                     .cwiseMax(Scalar(0));
}

/// One T-step Lagrangian run at a fixed c, optionally warm-started. Returns
/// the successful iterate (start included) of highest SSIM when keep_best is
/// on, else the final iterate.
template <typename Scalar>
AttackOutcome<Scalar> ssim_single_run(const ScoreModel<Scalar>& m, const Image<Scalar>& x,
                                      int label, const SsimAttackConfig<Scalar>& cfg,
                                      Scalar c, const ArrX<Scalar>* init_delta = nullptr) {
  MarginLossParams<Scalar> lp{c, cfg.kappa, LossKind::cw_margin};
  SsimAttackState<Scalar> state;
  state.delta = init_delta ? *init_delta : ArrX<Scalar>::Zero(x.data.size());

  bool have_best = false;
  ArrX<Scalar> best_delta;
  Scalar best_ssim = -std::numeric_limits<Scalar>::infinity();
  auto consider = [&](const ArrX<Scalar>& d) {
    if (!cfg.keep_best) return;
    if (m.predict(x.data + d) == label) return;
    const Scalar s = ssim(x, Image<Scalar>(x.data + d, x.shape), cfg.ssim);
    if (!have_best || s > best_ssim) {
      have_best = true;
      best_ssim = s;
      best_delta = d;
    }
  };

  consider(state.delta);
  for (int t = 0; t < cfg.iterations; ++t) {
    ssim_lagrangian_step(state, x, m, label, lp, cfg);
    consider(state.delta);
  }

  const ArrX<Scalar>& returned = have_best ? best_delta : state.delta;
  return evaluate_outcome(m, x, returned, label, cfg.ssim, c, cfg.iterations);
}

/// Zero-initialized constrained attack wrapped in the c search; quality is
/// the outcome SSIM.
template <typename Scalar>
AttackOutcome<Scalar> ssim_attack(const ScoreModel<Scalar>& m, const Image<Scalar>& x,
                                  int label, const SsimAttackConfig<Scalar>& cfg) {
  cfg.validate();
  return binary_search_c<Scalar>(
      [&](Scalar c) { return ssim_single_run(m, x, label, cfg, c); }, cfg.search_steps,
      [](const AttackOutcome<Scalar>& out) { return out.ssim; });
}

/// Warm-started variant: restarts the constrained run from a donor
/// perturbation (in practice the elastic-net attack's result), reusing the
/// donor's c with no further search. The donor point itself is the first
/// candidate, so when the donor succeeded the returned SSIM can only match
/// or beat it.
template <typename Scalar>
AttackOutcome<Scalar> ssim_attack_from(const ScoreModel<Scalar>& m, const Image<Scalar>& x,
                                       int label, const SsimAttackConfig<Scalar>& cfg,
                                       const AttackOutcome<Scalar>& donor) {
  cfg.validate();
  require_same_shape(donor.image, x, "ssim_attack_from");
  const ArrX<Scalar> init = donor.image.data - x.data;
  return ssim_single_run(m, x, label, cfg, donor.c_final, &init);
}

}  // namespace ssimadv
