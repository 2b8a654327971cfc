#pragma once

// Training loops. Both losses share the optimizer (adaptive moments with
// decoupled weight decay, warmup then linear decay) and the divergence
// guard: abort on non-finite loss immediately, or after 100 consecutive
// steps above 10x the initial loss.
//
// Self-play schedule, per iteration k:
//   1. freeze the opponent = current parameters, regenerate the synthetic
//      cache by ancestral sampling under the opponent,
//   2. descend the configured self-play loss on real-vs-cache batches,
//   3. promote: the trained parameters become the next opponent.
// Real-side samples are drawn fresh each step (they do not depend on the
// opponent); only the synthetic side is cached.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spindiff/data.hpp"
#include "spindiff/diffusion.hpp"
#include "spindiff/losses.hpp"
#include "spindiff/rng.hpp"
#include "spindiff/schedule.hpp"
#include "spindiff/score_net.hpp"

namespace spindiff {

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  int warmup_steps = 200;
};

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  long long step = 0;

  explicit OptimizerState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Linear warmup to lr, then linear decay toward 0 at total_steps.
inline double lr_at(const OptimizerConfig& cfg, long long step, long long total_steps) {
  if (total_steps <= 0) return cfg.lr;
  long long warmup = std::min<long long>(cfg.warmup_steps, total_steps - 1);
  if (warmup > 0 && step < warmup)
    return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total_steps <= warmup) return cfg.lr;
  double frac = static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
  return cfg.lr * (frac < 0.0 ? 0.0 : frac);
}

inline void adam_step(OptimizerState& st, const OptimizerConfig& cfg, double lr,
                      std::span<double> theta, std::span<const double> grad) {
  if (st.m.size() != theta.size())
    throw std::invalid_argument("adam_step: state size mismatch");
  st.step += 1;
  double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    double mhat = st.m[i] / c1;
    double vhat = st.v[i] / c2;
    theta[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * theta[i]);
  }
}

class DivergenceGuard {
public:
  void check(double loss, const std::string& where) {
    if (!std::isfinite(loss)) throw DivergenceError(where + ": non-finite loss");
    if (!seen_) {
      initial_ = loss;
      seen_ = true;
      return;
    }
    if (loss > 10.0 * std::abs(initial_) && std::abs(initial_) > 0.0) {
      if (++consecutive_ >= 100)
        throw DivergenceError(where + ": loss stuck above 10x initial for 100 steps");
    } else {
      consecutive_ = 0;
    }
  }

private:
  double initial_ = 0.0;
  bool seen_ = false;
  int consecutive_ = 0;
};

struct StepRecord {
  std::string phase;  // "sft" or "spin"
  int iteration = 0;  // 0 for sft
  long long step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  double theta_norm = 0.0;
  long long clamp_events = 0;
  double weight_mean = 0.0;  // per-sample reweighting diagnostics, spin only
  double wall_ms = 0.0;
};

using StepCallback = std::function<void(const StepRecord&)>;
// (phase, cumulative optimizer steps, iteration, params)
using SnapshotCallback =
    std::function<void(const std::string&, long long, int, const ScoreModelParams&)>;

namespace detail {

inline double l2_norm(std::span<const double> v) {
  double q = 0.0;
  for (double x : v) q += x * x;
  return std::sqrt(q);
}

inline DsmItem draw_dsm_item(const Dataset& ds, const NoiseSchedule& ns, CounterRng& rng,
                             std::size_t limit) {
  std::size_t idx = static_cast<std::size_t>(rng.uniform_index(limit));
  DsmItem it;
  it.x0 = ds.records[idx].x0;
  it.cond = ds.condition_of(idx);
  it.eps = rng.normal_vec(it.x0.size());
  it.t = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(ns.T)));
  return it;
}

}  // namespace detail

struct SftConfig {
  OptimizerConfig opt;
  long long steps = 2000;
  int batch_size = 64;
  long long snapshot_every = 0;  // 0 disables
};

struct TrainResult {
  ScoreModelParams params;
  double final_loss = 0.0;
  long long steps_done = 0;
};

inline TrainResult train_sft(ScoreModelParams params, const Dataset& ds,
                             const NoiseSchedule& ns, const SftConfig& cfg,
                             std::uint64_t seed, const StepCallback& on_step = {},
                             const SnapshotCallback& on_snapshot = {},
                             long long cum_step_base = 0) {
  if (cfg.steps < 0) throw std::invalid_argument("train_sft: steps must be >= 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("train_sft: batch_size must be >= 1");
  if (ds.records.empty()) throw std::invalid_argument("train_sft: empty dataset");
  OptimizerState opt_state(params.theta.size());
  DivergenceGuard guard;
  CounterRng rng(derive_seed(seed, "sft.inner"));
  TrainResult out{std::move(params), 0.0, 0};
  for (long long step = 0; step < cfg.steps; ++step) {
    std::vector<DsmItem> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b)
      batch.push_back(detail::draw_dsm_item(ds, ns, rng, ds.records.size()));
    GradResult g = dsm_grad(out.params, batch, ns);
    guard.check(g.value, "train_sft");
    double lr = lr_at(cfg.opt, step, cfg.steps);
    adam_step(opt_state, cfg.opt, lr, out.params.theta, g.grad);
    out.final_loss = g.value;
    out.steps_done = step + 1;
    if (on_step) {
      StepRecord rec;
      rec.phase = "sft";
      rec.step = step;
      rec.loss = g.value;
      rec.lr = lr;
      rec.grad_norm = detail::l2_norm(g.grad);
      rec.theta_norm = detail::l2_norm(out.params.theta);
      on_step(rec);
    }
    if (on_snapshot && cfg.snapshot_every > 0 && (step + 1) % cfg.snapshot_every == 0)
      on_snapshot("sft", cum_step_base + step + 1, 0, out.params);
  }
  return out;
}

struct SpinRunConfig {
  int iterations = 3;
  std::vector<long long> steps = {800};      // per iteration, last repeats
  std::vector<double> beta_scale = {4.0, 10.0};  // per iteration, last repeats
  BetaPolicy beta_policy = BetaPolicy::kConstant;
  EllKind ell = EllKind::kLogistic;
  SpinVariant variant = SpinVariant::kApproxEps;
  SyntheticPairsMode synthetic_pairs = SyntheticPairsMode::kForwardized;
  EpsForm eps_form = EpsForm::kFourTerm;
  bool shared_t = true;
  bool shuffle_pairs = false;
  double synthetic_fraction = 1.0;
  double lambda = 1.0;
  bool log_test_function = false;
  int batch_size = 64;
  OptimizerConfig opt;
  long long snapshot_every = 0;

  long long steps_at(int iter) const {
    if (steps.empty()) throw std::invalid_argument("spin config: steps empty");
    return steps[std::min<std::size_t>(static_cast<std::size_t>(iter), steps.size() - 1)];
  }
  double beta_scale_at(int iter) const {
    if (beta_scale.empty()) throw std::invalid_argument("spin config: beta_scale empty");
    return beta_scale[std::min<std::size_t>(static_cast<std::size_t>(iter), beta_scale.size() - 1)];
  }
  void validate() const {
    if (iterations < 1) throw std::invalid_argument("spin config: iterations >= 1");
    if (batch_size < 1) throw std::invalid_argument("spin config: batch_size >= 1");
    if (!(synthetic_fraction > 0.0 && synthetic_fraction <= 1.0))
      throw std::invalid_argument("spin config: synthetic_fraction in (0, 1]");
    if (!(lambda > 0.0)) throw std::invalid_argument("spin config: lambda > 0");
  }
};

struct SpinIterationState {
  ScoreModelParams current;
  ScoreModelParams opponent;
  int iteration = 0;  // completed iterations
};

struct IterationRecord {
  int iteration = 0;
  std::uint64_t synth_cache_digest = 0;
  long long clamp_events = 0;
  double final_loss = 0.0;
  // mean log-ratio diagnostic on real minus synthetic trajectories;
  // present only when log_test_function is on
  std::optional<double> test_fn_gap;
};

namespace detail {

struct SynthCache {
  std::vector<std::vector<double>> x0;      // per cached record
  std::vector<Trajectory> trajectories;     // kept only when needed
  std::vector<std::vector<std::size_t>> by_label;
  std::uint64_t digest = 0;
};

inline SynthCache build_synth_cache(const ScoreModelParams& opponent, const Dataset& ds,
                                    const NoiseSchedule& ns, std::size_t n_synth,
                                    bool keep_trajectories, std::uint64_t seed, int iter) {
  SynthCache cache;
  cache.x0.resize(n_synth);
  if (keep_trajectories) cache.trajectories.resize(n_synth);
  cache.by_label.assign(static_cast<std::size_t>(ds.spec.num_classes()), {});
  std::uint64_t h = kFnvOffset;
  for (std::size_t i = 0; i < n_synth; ++i) {
    CounterRng rng(derive_seed(seed, "spin.synth", static_cast<std::uint64_t>(iter)), i);
    Trajectory traj = reverse_sample(opponent, ns, ds.condition_of(i), rng);
    cache.x0[i] = traj.x[0];
    for (double v : cache.x0[i]) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
      for (int k = 0; k < 8; ++k) {
        h ^= (bits >> (8 * k)) & 0xff;
        h *= kFnvPrime;
      }
    }
    cache.by_label[static_cast<std::size_t>(ds.records[i].label)].push_back(i);
    if (keep_trajectories) cache.trajectories[i] = std::move(traj);
  }
  cache.digest = h;
  return cache;
}

}  // namespace detail

// One opponent round: cache synthetic data under the frozen opponent, run the
// inner descent, then promote. The opponent parameter digest is asserted
// unchanged across the inner loop.
inline SpinIterationState spin_iteration(SpinIterationState state, const Dataset& ds,
                                         const NoiseSchedule& ns, const SpinRunConfig& cfg,
                                         std::uint64_t seed, const StepCallback& on_step = {},
                                         IterationRecord* record = nullptr,
                                         const SnapshotCallback& on_snapshot = {},
                                         long long cum_step_base = 0) {
  cfg.validate();
  const int iter = state.iteration;
  SpinLossConfig loss_cfg;
  loss_cfg.ell = cfg.ell;
  loss_cfg.beta = beta_schedule(ns, cfg.beta_policy, cfg.beta_scale_at(iter));
  loss_cfg.lambda = cfg.lambda;
  loss_cfg.variant = cfg.variant;
  loss_cfg.synthetic_pairs = cfg.synthetic_pairs;
  loss_cfg.eps_form = cfg.eps_form;
  loss_cfg.shared_t = cfg.shared_t;

  bool sigma_all_zero = true;
  for (int t = 1; t <= ns.T; ++t)
    if (ns.sigma[t] > 0.0) sigma_all_zero = false;
  if (cfg.log_test_function && sigma_all_zero)
    throw std::invalid_argument(
        "spin_iteration: test_function diagnostics need a stochastic schedule");

  std::size_t n_synth = static_cast<std::size_t>(
      std::ceil(cfg.synthetic_fraction * static_cast<double>(ds.records.size())));
  if (n_synth == 0 || n_synth > ds.records.size())
    throw std::invalid_argument("spin_iteration: bad synthetic_fraction");
  bool keep_traj = cfg.variant == SpinVariant::kExact ||
                   (cfg.variant == SpinVariant::kApproxMu &&
                    cfg.synthetic_pairs == SyntheticPairsMode::kBackward);
  detail::SynthCache cache =
      detail::build_synth_cache(state.opponent, ds, ns, n_synth, keep_traj, seed, iter);

  std::uint64_t opp_digest_before = params_digest(state.opponent);

  OptimizerState opt_state(state.current.theta.size());
  DivergenceGuard guard;
  CounterRng rng(derive_seed(seed, "spin.inner", static_cast<std::uint64_t>(iter)));
  const long long steps = cfg.steps_at(iter);
  long long clamp_total = 0;
  double last_loss = 0.0;

  auto pick_synth = [&](std::size_t real_idx) -> std::size_t {
    if (!cfg.shuffle_pairs) return real_idx;
    const auto& pool = cache.by_label[static_cast<std::size_t>(ds.records[real_idx].label)];
    if (pool.empty()) return real_idx;
    return pool[rng.uniform_index(pool.size())];
  };

  for (long long step = 0; step < steps; ++step) {
    LossDiag diag;
    GradResult g;
    if (cfg.variant == SpinVariant::kApproxEps) {
      std::vector<EpsItem> real, synth;
      real.reserve(static_cast<std::size_t>(cfg.batch_size));
      synth.reserve(static_cast<std::size_t>(cfg.batch_size));
      for (int b = 0; b < cfg.batch_size; ++b) {
        std::size_t idx = static_cast<std::size_t>(rng.uniform_index(n_synth));
        int t = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(ns.T)));
        EpsItem ri;
        ri.x0 = ds.records[idx].x0;
        ri.cond = ds.condition_of(idx);
        ri.eps = rng.normal_vec(ri.x0.size());
        ri.t = t;
        std::size_t j = pick_synth(idx);
        EpsItem si;
        si.x0 = cache.x0[j];
        si.cond = ds.condition_of(j);
        si.eps = rng.normal_vec(si.x0.size());
        si.t = cfg.shared_t ? t : 1 + static_cast<int>(rng.uniform_index(
                                          static_cast<std::uint64_t>(ns.T)));
        real.push_back(std::move(ri));
        synth.push_back(std::move(si));
      }
      g = spin_eps_grad(state.current, state.opponent, real, synth, loss_cfg, ns, &diag);
    } else if (cfg.variant == SpinVariant::kApproxMu) {
      std::vector<StepPair> real, synth;
      real.reserve(static_cast<std::size_t>(cfg.batch_size));
      synth.reserve(static_cast<std::size_t>(cfg.batch_size));
      for (int b = 0; b < cfg.batch_size; ++b) {
        std::size_t idx = static_cast<std::size_t>(rng.uniform_index(n_synth));
        int t = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(ns.T)));
        real.push_back(pair_from_marginal_posterior(ns, ds.records[idx].x0,
                                                    ds.condition_of(idx), t, rng,
                                                    Provenance::kReal));
        std::size_t j = pick_synth(idx);
        int ts = cfg.shared_t ? t : 1 + static_cast<int>(rng.uniform_index(
                                            static_cast<std::uint64_t>(ns.T)));
        if (cfg.synthetic_pairs == SyntheticPairsMode::kForwardized) {
          synth.push_back(forwardized_synthetic_pair(ns, cache.x0[j], ds.condition_of(j), ts, rng));
        } else {
          const Trajectory& traj = cache.trajectories[j];
          synth.push_back(StepPair{traj.cond, ts, traj.x[ts - 1], traj.x[ts],
                                   Provenance::kSynthetic});
        }
      }
      g = spin_approx_grad(state.current, state.opponent, real, synth, loss_cfg, ns, &diag);
    } else {
      std::vector<Trajectory> real, synth;
      real.reserve(static_cast<std::size_t>(cfg.batch_size));
      synth.reserve(static_cast<std::size_t>(cfg.batch_size));
      for (int b = 0; b < cfg.batch_size; ++b) {
        std::size_t idx = static_cast<std::size_t>(rng.uniform_index(n_synth));
        real.push_back(forward_trajectory(ns, ds.records[idx].x0, ds.condition_of(idx), rng));
        std::size_t j = pick_synth(idx);
        synth.push_back(cache.trajectories[j]);
      }
      g = spin_exact_grad(state.current, state.opponent, real, synth, loss_cfg, ns, &diag);
    }

    guard.check(g.value, "spin_iteration");
    double lr = lr_at(cfg.opt, step, steps);
    adam_step(opt_state, cfg.opt, lr, state.current.theta, g.grad);
    clamp_total += diag.clamp_events;
    last_loss = g.value;
    if (on_step) {
      StepRecord rec;
      rec.phase = "spin";
      rec.iteration = iter + 1;
      rec.step = step;
      rec.loss = g.value;
      rec.lr = lr;
      rec.grad_norm = detail::l2_norm(g.grad);
      rec.theta_norm = detail::l2_norm(state.current.theta);
      rec.clamp_events = diag.clamp_events;
      on_step(rec);
    }
    if (on_snapshot && cfg.snapshot_every > 0 && (step + 1) % cfg.snapshot_every == 0)
      on_snapshot("spin", cum_step_base + step + 1, iter + 1, state.current);
  }

  if (params_digest(state.opponent) != opp_digest_before)
    throw std::logic_error("spin_iteration: opponent parameters changed during inner loop");

  if (record != nullptr) {
    record->iteration = iter + 1;
    record->synth_cache_digest = cache.digest;
    record->clamp_events = clamp_total;
    record->final_loss = last_loss;
    if (cfg.log_test_function) {
      // Squared-error log-ratio gap between real and synthetic trajectories.
      CounterRng trng(derive_seed(seed, "spin.testfn", static_cast<std::uint64_t>(iter)));
      double gap = 0.0;
      const int probes = 32;
      for (int i = 0; i < probes; ++i) {
        std::size_t idx = static_cast<std::size_t>(trng.uniform_index(n_synth));
        Trajectory real =
            forward_trajectory(ns, ds.records[idx].x0, ds.condition_of(idx), trng);
        Trajectory synth = reverse_sample(state.opponent, ns, ds.condition_of(idx), trng);
        gap += test_function(state.current, state.opponent, real, cfg.lambda, ns) -
               test_function(state.current, state.opponent, synth, cfg.lambda, ns);
      }
      record->test_fn_gap = gap / probes;
    }
  }

  SpinIterationState next;
  next.opponent = state.current;  // promotion: trained model becomes the opponent
  next.current = std::move(state.current);
  next.iteration = iter + 1;
  return next;
}

using IterationCallback =
    std::function<void(const SpinIterationState&, const IterationRecord&)>;

inline SpinIterationState run_spin(SpinIterationState state, const Dataset& ds,
                                   const NoiseSchedule& ns, const SpinRunConfig& cfg,
                                   std::uint64_t seed, const StepCallback& on_step = {},
                                   const IterationCallback& on_iteration = {},
                                   const SnapshotCallback& on_snapshot = {}) {
  cfg.validate();
  long long cum = 0;
  for (int it = 0; it < state.iteration; ++it) cum += cfg.steps_at(it);
  while (state.iteration < cfg.iterations) {
    IterationRecord rec;
    state = spin_iteration(std::move(state), ds, ns, cfg, seed, on_step, &rec, on_snapshot, cum);
    cum += cfg.steps_at(state.iteration - 1);
    if (on_iteration) on_iteration(state, rec);
  }
  return state;
}

}  // namespace spindiff
