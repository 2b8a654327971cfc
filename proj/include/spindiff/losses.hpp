#pragma once

// Training objectives. Everything here is a pure function of its inputs;
// noise draws and timestep draws happen in the trainer and arrive as data.
//
// Self-play losses compare the current model against a frozen opponent on
// aligned real/synthetic batches. Per sample the argument fed to the convex
// decreasing link ell is
//   u = -( w_real * [||x_{t-1} - mu_theta(x_t)||^2 - ||x_{t-1} - mu_opp(x_t)||^2]
//        - w_syn  * [||x'_{t-1} - mu_theta(x'_t)||^2 - ||x'_{t-1} - mu_opp(x'_t)||^2] )
// so pushing the model toward real pairs and away from opponent pairs drives
// u up and the loss down. u is clamped to [-50, 50] before ell to keep exp
// bounded; clamp events are counted and should be zero in a healthy run.
//
// The noise-space forms replace each ||x_{t-1} - mu(.)||^2 with
// h_t^2 ||eps_target - eps_model(x_t) + (sigma_t/h_t) ehat||^2; with the
// posterior-mean pair construction used here the ehat term drops and the
// weight becomes w = beta_t * h_t^2.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spindiff/autodiff.hpp"
#include "spindiff/diffusion.hpp"
#include "spindiff/schedule.hpp"
#include "spindiff/score_net.hpp"

namespace spindiff {

inline constexpr double kEllArgClamp = 50.0;

enum class EllKind { kLogistic, kHinge, kCorrelation };

inline std::string to_string(EllKind k) {
  switch (k) {
    case EllKind::kLogistic: return "logistic";
    case EllKind::kHinge: return "hinge";
    case EllKind::kCorrelation: return "correlation";
  }
  return "?";
}

inline EllKind ell_kind_from_string(const std::string& s) {
  if (s == "logistic") return EllKind::kLogistic;
  if (s == "hinge") return EllKind::kHinge;
  if (s == "correlation") return EllKind::kCorrelation;
  throw std::invalid_argument("unknown ell kind: " + s);
}

// Monotone decreasing, convex, ell'(0) < 0 for all three kinds.
template <class S>
S ell_generic(EllKind kind, S u) {
  using std::exp;
  using std::log;
  switch (kind) {
    case EllKind::kLogistic: return log(1.0 + exp(-u));
    case EllKind::kHinge: return relu(1.0 - u);
    case EllKind::kCorrelation: return 1.0 - u;
  }
  throw std::invalid_argument("ell_generic: bad kind");
}

inline double ell_value(EllKind kind, double u) { return ell_generic<double>(kind, u); }

inline double ell_deriv(EllKind kind, double u) {
  switch (kind) {
    case EllKind::kLogistic: return -1.0 / (1.0 + std::exp(u));
    case EllKind::kHinge: return u < 1.0 ? -1.0 : 0.0;
    case EllKind::kCorrelation: return -1.0;
  }
  throw std::invalid_argument("ell_deriv: bad kind");
}

inline double ell_at_zero(EllKind kind) { return ell_value(kind, 0.0); }

enum class SpinVariant { kExact, kApproxMu, kApproxEps };
enum class SyntheticPairsMode { kBackward, kForwardized };
enum class EpsForm { kFourTerm, kThreeTerm };

inline std::string to_string(SpinVariant v) {
  switch (v) {
    case SpinVariant::kExact: return "exact";
    case SpinVariant::kApproxMu: return "approx-mu";
    case SpinVariant::kApproxEps: return "approx-eps";
  }
  return "?";
}

inline SpinVariant spin_variant_from_string(const std::string& s) {
  if (s == "exact") return SpinVariant::kExact;
  if (s == "approx-mu") return SpinVariant::kApproxMu;
  if (s == "approx-eps") return SpinVariant::kApproxEps;
  throw std::invalid_argument("unknown spin variant: " + s);
}

struct SpinLossConfig {
  EllKind ell = EllKind::kLogistic;
  std::vector<double> beta;  // [0..T], slot 0 unused
  // Bookkeeping scale tying the comparison weights to reverse-kernel
  // variances (sigma_t^2 = lambda T / (2 beta_t)); the schedule's sigma is
  // authoritative, lambda only feeds test_function diagnostics.
  double lambda = 1.0;
  SpinVariant variant = SpinVariant::kApproxEps;
  SyntheticPairsMode synthetic_pairs = SyntheticPairsMode::kForwardized;
  EpsForm eps_form = EpsForm::kFourTerm;
  bool shared_t = true;

  void validate(int T) const {
    if (beta.size() != static_cast<std::size_t>(T) + 1)
      throw std::invalid_argument("spin config: beta must have T+1 slots");
    for (int t = 1; t <= T; ++t)
      if (!(beta[t] > 0.0)) throw std::invalid_argument("spin config: beta must be positive");
    if (!(lambda > 0.0)) throw std::invalid_argument("spin config: lambda must be positive");
  }
};

// One denoising-loss sample: model sees x_t built from (x0, eps, t).
// Synthetic items carry an opponent sample in x0.
struct DsmItem {
  std::vector<double> x0;
  Condition cond;
  std::vector<double> eps;
  int t = 1;
};
using EpsItem = DsmItem;

struct LossDiag {
  long long clamp_events = 0;
};

namespace detail {

inline double scalar_value(double v) { return v; }
inline double scalar_value(ad::Value v) { return v.val(); }

template <class S>
S sq_dist(std::span<const double> a, std::span<const S> b) {
  S acc = (a[0] - b[0]) * (a[0] - b[0]);
  for (std::size_t i = 1; i < a.size(); ++i) {
    S d = a[i] - b[i];
    acc = acc + d * d;
  }
  return acc;
}

template <class S>
std::vector<S> predict_noise(const ScoreNetArch& arch, std::span<const S> theta,
                             std::span<const double> x, const Condition& cond, int t,
                             int T) {
  std::vector<S> eps;
  eval_score_generic<S>(arch, theta, x, cond, t, T, eps);
  return eps;
}

// ||x_prev - mu(x_cur, predicted noise)||^2 for one step pair.
template <class S>
S mu_match_term(const ScoreNetArch& arch, std::span<const S> theta, const NoiseSchedule& ns,
                const StepPair& pair) {
  std::vector<S> eps = predict_noise<S>(arch, theta, pair.x_cur, pair.cond, pair.t, ns.T);
  std::vector<S> mu = mu_theta_from_eps<S>(ns, pair.t, pair.x_cur, eps);
  return sq_dist<S>(pair.x_prev, mu);
}

template <class S>
S clamp_and_count(S u, LossDiag* diag) {
  double uv = scalar_value(u);
  if (diag != nullptr && (uv < -kEllArgClamp || uv > kEllArgClamp)) ++diag->clamp_events;
  return clamp(u, -kEllArgClamp, kEllArgClamp);
}

inline void check_pair(const ScoreNetArch& arch, const NoiseSchedule& ns,
                       const StepPair& p, const char* side) {
  if (static_cast<int>(p.x_prev.size()) != arch.d ||
      static_cast<int>(p.x_cur.size()) != arch.d)
    throw std::invalid_argument(std::string("spin loss: ") + side + " pair dimension mismatch");
  if (p.t < 1 || p.t > ns.T)
    throw std::invalid_argument(std::string("spin loss: ") + side + " pair t out of range");
}

inline void check_item(const ScoreNetArch& arch, const NoiseSchedule& ns,
                       const DsmItem& it, const char* side) {
  if (static_cast<int>(it.x0.size()) != arch.d ||
      static_cast<int>(it.eps.size()) != arch.d)
    throw std::invalid_argument(std::string("loss: ") + side + " item dimension mismatch");
  if (it.t < 1 || it.t > ns.T)
    throw std::invalid_argument(std::string("loss: ") + side + " item t out of range");
}

}  // namespace detail

// Denoising score-matching loss: mean of gamma_t ||eps_theta(x_t) - eps||^2.
template <class S>
S dsm_loss_generic(const ScoreNetArch& arch, std::span<const S> theta,
                   std::span<const DsmItem> batch, const NoiseSchedule& ns) {
  if (batch.empty()) throw std::invalid_argument("dsm_loss: empty batch");
  bool first = true;
  S acc{};
  for (const DsmItem& it : batch) {
    detail::check_item(arch, ns, it, "dsm");
    std::vector<double> xt = forward_marginal_sample(ns, it.t, it.x0, it.eps);
    std::vector<S> eps_hat = detail::predict_noise<S>(arch, theta, xt, it.cond, it.t, ns.T);
    S term = ns.gamma[it.t] * detail::sq_dist<S>(it.eps, eps_hat);
    acc = first ? term : acc + term;
    first = false;
  }
  return acc * (1.0 / static_cast<double>(batch.size()));
}

inline double dsm_loss(const ScoreModelParams& p, std::span<const DsmItem> batch,
                       const NoiseSchedule& ns) {
  return dsm_loss_generic<double>(p.arch, p.theta, batch, ns);
}

inline GradResult dsm_grad(const ScoreModelParams& p, std::span<const DsmItem> batch,
                           const NoiseSchedule& ns) {
  return grad_loss(p, [&](ad::Tape&, std::span<const ad::Value> theta) {
    return dsm_loss_generic<ad::Value>(p.arch, theta, batch, ns);
  });
}

// Trajectory-level self-play loss: the per-step comparisons are averaged
// inside ell's argument (one ell per trajectory pair).
template <class S>
S spin_exact_loss_generic(const ScoreNetArch& arch, std::span<const S> theta,
                          const ScoreModelParams& opp, std::span<const Trajectory> real,
                          std::span<const Trajectory> synth, const SpinLossConfig& cfg,
                          const NoiseSchedule& ns, LossDiag* diag) {
  cfg.validate(ns.T);
  if (real.empty() || real.size() != synth.size())
    throw std::invalid_argument("spin_exact_loss: batch sizes must match and be nonzero");
  bool first = true;
  S acc{};
  for (std::size_t i = 0; i < real.size(); ++i) {
    if (real[i].T() != ns.T || synth[i].T() != ns.T)
      throw std::invalid_argument("spin_exact_loss: trajectory length mismatch");
    bool t_first = true;
    S real_sum{};
    S synth_sum{};
    for (int t = 1; t <= ns.T; ++t) {
      StepPair rp{real[i].cond, t, real[i].x[t - 1], real[i].x[t], real[i].provenance};
      StepPair sp{synth[i].cond, t, synth[i].x[t - 1], synth[i].x[t], synth[i].provenance};
      detail::check_pair(arch, ns, rp, "real");
      detail::check_pair(arch, ns, sp, "synthetic");
      double w = cfg.beta[t] / static_cast<double>(ns.T);
      S r_term = w * (detail::mu_match_term<S>(arch, theta, ns, rp) -
                      detail::mu_match_term<double>(opp.arch, opp.theta, ns, rp));
      S s_term = w * (detail::mu_match_term<S>(arch, theta, ns, sp) -
                      detail::mu_match_term<double>(opp.arch, opp.theta, ns, sp));
      real_sum = t_first ? r_term : real_sum + r_term;
      synth_sum = t_first ? s_term : synth_sum + s_term;
      t_first = false;
    }
    S u = -(real_sum - synth_sum);
    S term = ell_generic<S>(cfg.ell, detail::clamp_and_count(u, diag));
    acc = first ? term : acc + term;
    first = false;
  }
  return acc * (1.0 / static_cast<double>(real.size()));
}

inline double spin_exact_loss(const ScoreModelParams& p, const ScoreModelParams& opp,
                              std::span<const Trajectory> real,
                              std::span<const Trajectory> synth, const SpinLossConfig& cfg,
                              const NoiseSchedule& ns, LossDiag* diag = nullptr) {
  return spin_exact_loss_generic<double>(p.arch, p.theta, opp, real, synth, cfg, ns, diag);
}

inline GradResult spin_exact_grad(const ScoreModelParams& p, const ScoreModelParams& opp,
                                  std::span<const Trajectory> real,
                                  std::span<const Trajectory> synth,
                                  const SpinLossConfig& cfg, const NoiseSchedule& ns,
                                  LossDiag* diag = nullptr) {
  return grad_loss(p, [&](ad::Tape&, std::span<const ad::Value> theta) {
    return spin_exact_loss_generic<ad::Value>(p.arch, theta, opp, real, synth, cfg, ns, diag);
  });
}

// Per-step self-play loss on aligned (real, synthetic) step-pair batches;
// one ell per aligned index.
template <class S>
S spin_approx_loss_generic(const ScoreNetArch& arch, std::span<const S> theta,
                           const ScoreModelParams& opp, std::span<const StepPair> real,
                           std::span<const StepPair> synth, const SpinLossConfig& cfg,
                           const NoiseSchedule& ns, LossDiag* diag) {
  cfg.validate(ns.T);
  if (real.empty() || real.size() != synth.size())
    throw std::invalid_argument("spin_approx_loss: batch sizes must match and be nonzero");
  bool first = true;
  S acc{};
  for (std::size_t i = 0; i < real.size(); ++i) {
    const StepPair& rp = real[i];
    const StepPair& sp = synth[i];
    detail::check_pair(arch, ns, rp, "real");
    detail::check_pair(arch, ns, sp, "synthetic");
    if (cfg.shared_t && rp.t != sp.t)
      throw std::invalid_argument("spin_approx_loss: t mismatch in aligned pair (shared_t)");
    S real_part = cfg.beta[rp.t] *
                  (detail::mu_match_term<S>(arch, theta, ns, rp) -
                   detail::mu_match_term<double>(opp.arch, opp.theta, ns, rp));
    S synth_part = cfg.beta[sp.t] *
                   (detail::mu_match_term<S>(arch, theta, ns, sp) -
                    detail::mu_match_term<double>(opp.arch, opp.theta, ns, sp));
    S u = -(real_part - synth_part);
    S term = ell_generic<S>(cfg.ell, detail::clamp_and_count(u, diag));
    acc = first ? term : acc + term;
    first = false;
  }
  return acc * (1.0 / static_cast<double>(real.size()));
}

inline double spin_approx_loss(const ScoreModelParams& p, const ScoreModelParams& opp,
                               std::span<const StepPair> real, std::span<const StepPair> synth,
                               const SpinLossConfig& cfg, const NoiseSchedule& ns,
                               LossDiag* diag = nullptr) {
  return spin_approx_loss_generic<double>(p.arch, p.theta, opp, real, synth, cfg, ns, diag);
}

inline GradResult spin_approx_grad(const ScoreModelParams& p, const ScoreModelParams& opp,
                                   std::span<const StepPair> real,
                                   std::span<const StepPair> synth, const SpinLossConfig& cfg,
                                   const NoiseSchedule& ns, LossDiag* diag = nullptr) {
  return grad_loss(p, [&](ad::Tape&, std::span<const ad::Value> theta) {
    return spin_approx_loss_generic<ad::Value>(p.arch, theta, opp, real, synth, cfg, ns, diag);
  });
}

// Noise-space self-play loss. Real and synthetic items both describe a
// forward-marginal state x_t = sqrt(alpha_t) x0 + sqrt(1-alpha_t) eps; the
// synthetic x0 comes from the opponent sampler. Four-term form mirrors the
// pair loss; three-term form replaces the synthetic comparison with the
// model-vs-opponent disagreement ||e_opp(x'_t) - e_theta(x'_t)||^2 (the
// zero-sigma limit, where the opponent's own synthetic residual vanishes).
template <class S>
S spin_eps_loss_generic(const ScoreNetArch& arch, std::span<const S> theta,
                        const ScoreModelParams& opp, std::span<const EpsItem> real,
                        std::span<const EpsItem> synth, const SpinLossConfig& cfg,
                        const NoiseSchedule& ns, LossDiag* diag) {
  cfg.validate(ns.T);
  if (real.empty() || real.size() != synth.size())
    throw std::invalid_argument("spin_eps_loss: batch sizes must match and be nonzero");
  bool first = true;
  S acc{};
  for (std::size_t i = 0; i < real.size(); ++i) {
    const EpsItem& ri = real[i];
    const EpsItem& si = synth[i];
    detail::check_item(arch, ns, ri, "real");
    detail::check_item(arch, ns, si, "synthetic");
    if (cfg.shared_t && ri.t != si.t)
      throw std::invalid_argument("spin_eps_loss: t mismatch in aligned pair (shared_t)");
    double w_real = cfg.beta[ri.t] * ns.h[ri.t] * ns.h[ri.t];
    double w_syn = cfg.beta[si.t] * ns.h[si.t] * ns.h[si.t];

    std::vector<double> xt = forward_marginal_sample(ns, ri.t, ri.x0, ri.eps);
    std::vector<S> e_cur = detail::predict_noise<S>(arch, theta, xt, ri.cond, ri.t, ns.T);
    std::vector<double> e_opp =
        detail::predict_noise<double>(opp.arch, opp.theta, xt, ri.cond, ri.t, ns.T);
    S real_part =
        w_real * (detail::sq_dist<S>(ri.eps, e_cur) -
                  detail::sq_dist<double>(ri.eps, e_opp));

    std::vector<double> xts = forward_marginal_sample(ns, si.t, si.x0, si.eps);
    std::vector<S> e_cur_s = detail::predict_noise<S>(arch, theta, xts, si.cond, si.t, ns.T);
    std::vector<double> e_opp_s =
        detail::predict_noise<double>(opp.arch, opp.theta, xts, si.cond, si.t, ns.T);
    S synth_part{};
    if (cfg.eps_form == EpsForm::kFourTerm) {
      synth_part = w_syn * (detail::sq_dist<S>(si.eps, e_cur_s) -
                            detail::sq_dist<double>(si.eps, e_opp_s));
    } else {
      synth_part = w_syn * detail::sq_dist<S>(e_opp_s, e_cur_s);
    }
    S u = -(real_part - synth_part);
    S term = ell_generic<S>(cfg.ell, detail::clamp_and_count(u, diag));
    acc = first ? term : acc + term;
    first = false;
  }
  return acc * (1.0 / static_cast<double>(real.size()));
}

inline double spin_eps_loss(const ScoreModelParams& p, const ScoreModelParams& opp,
                            std::span<const EpsItem> real, std::span<const EpsItem> synth,
                            const SpinLossConfig& cfg, const NoiseSchedule& ns,
                            LossDiag* diag = nullptr) {
  return spin_eps_loss_generic<double>(p.arch, p.theta, opp, real, synth, cfg, ns, diag);
}

inline GradResult spin_eps_grad(const ScoreModelParams& p, const ScoreModelParams& opp,
                                std::span<const EpsItem> real, std::span<const EpsItem> synth,
                                const SpinLossConfig& cfg, const NoiseSchedule& ns,
                                LossDiag* diag = nullptr) {
  return grad_loss(p, [&](ad::Tape&, std::span<const ad::Value> theta) {
    return spin_eps_loss_generic<ad::Value>(p.arch, theta, opp, real, synth, cfg, ns, diag);
  });
}

// Scaled log-likelihood ratio of a trajectory under the model vs a frozen
// opponent. Normalization constants cancel; only stochastic steps carry
// density, so sigma = 0 steps are excluded and a fully deterministic
// schedule is rejected.
inline double test_function(const ScoreModelParams& p, const ScoreModelParams& opp,
                            const Trajectory& traj, double lambda, const NoiseSchedule& ns) {
  if (!(lambda > 0.0)) throw std::invalid_argument("test_function: lambda must be > 0");
  if (traj.T() != ns.T) throw std::invalid_argument("test_function: trajectory length mismatch");
  bool any = false;
  double sum = 0.0;
  for (int t = 1; t <= ns.T; ++t) {
    if (ns.sigma[t] == 0.0) continue;
    any = true;
    StepPair pair{traj.cond, t, traj.x[t - 1], traj.x[t], traj.provenance};
    double m_cur = detail::mu_match_term<double>(p.arch, p.theta, ns, pair);
    double m_opp = detail::mu_match_term<double>(opp.arch, opp.theta, ns, pair);
    sum += (m_opp - m_cur) / (2.0 * ns.sigma[t] * ns.sigma[t]);
  }
  if (!any)
    throw std::invalid_argument("test_function: schedule has no stochastic step (sigma all 0)");
  return lambda * sum;
}

// Gradient of spin_approx_loss assembled from its labeled pieces:
// per sample, weight * (matching gradient - pushing gradient), where
// weight = -beta_t * ell'(u). Must agree with the tape gradient.
struct DecomposedGrad {
  double value = 0.0;
  std::vector<double> grad;
  std::vector<double> weights;  // per-sample -beta_t ell'(u), >= 0
  LossDiag diag;
};

inline DecomposedGrad spin_gradient_decomposed(const ScoreModelParams& p,
                                               const ScoreModelParams& opp,
                                               std::span<const StepPair> real,
                                               std::span<const StepPair> synth,
                                               const SpinLossConfig& cfg,
                                               const NoiseSchedule& ns) {
  cfg.validate(ns.T);
  if (real.empty() || real.size() != synth.size())
    throw std::invalid_argument("spin_gradient_decomposed: batch sizes must match");
  DecomposedGrad out;
  out.grad.assign(p.theta.size(), 0.0);
  out.weights.reserve(real.size());
  double value_acc = 0.0;
  thread_local ad::Tape tape;
  std::vector<double> grad_match(p.theta.size());
  std::vector<double> grad_push(p.theta.size());
  for (std::size_t i = 0; i < real.size(); ++i) {
    const StepPair& rp = real[i];
    const StepPair& sp = synth[i];
    detail::check_pair(p.arch, ns, rp, "real");
    detail::check_pair(p.arch, ns, sp, "synthetic");
    if (cfg.shared_t && rp.t != sp.t)
      throw std::invalid_argument("spin_gradient_decomposed: t mismatch in aligned pair");

    tape.clear();
    std::vector<ad::Value> leaves;
    leaves.reserve(p.theta.size());
    for (double v : p.theta) leaves.push_back(tape.leaf(v));
    std::span<const ad::Value> theta(leaves);

    ad::Value match = detail::mu_match_term<ad::Value>(p.arch, theta, ns, rp);
    ad::Value push = detail::mu_match_term<ad::Value>(p.arch, theta, ns, sp);
    double m_opp = detail::mu_match_term<double>(opp.arch, opp.theta, ns, rp);
    double p_opp = detail::mu_match_term<double>(opp.arch, opp.theta, ns, sp);

    double real_part = cfg.beta[rp.t] * (match.val() - m_opp);
    double synth_part = cfg.beta[sp.t] * (push.val() - p_opp);
    double u = -(real_part - synth_part);
    bool inside = u > -kEllArgClamp && u < kEllArgClamp;
    if (!inside) ++out.diag.clamp_events;
    double uc = clamp(u, -kEllArgClamp, kEllArgClamp);
    value_acc += ell_value(cfg.ell, uc);

    double dl = ell_deriv(cfg.ell, uc);
    out.weights.push_back(-cfg.beta[rp.t] * dl);
    if (!inside) continue;  // tape loss is flat there

    tape.backward(match);
    for (std::size_t j = 0; j < leaves.size(); ++j) grad_match[j] = tape.grad(leaves[j]);
    tape.backward(push);
    for (std::size_t j = 0; j < leaves.size(); ++j) grad_push[j] = tape.grad(leaves[j]);

    double w_match = -cfg.beta[rp.t] * dl;  // reweighting x matching
    double w_push = -cfg.beta[sp.t] * dl;   // reweighting x pushing
    for (std::size_t j = 0; j < out.grad.size(); ++j)
      out.grad[j] += w_match * grad_match[j] - w_push * grad_push[j];
  }
  double inv_n = 1.0 / static_cast<double>(real.size());
  for (double& g : out.grad) g *= inv_n;
  out.value = value_acc * inv_n;
  return out;
}

}  // namespace spindiff
