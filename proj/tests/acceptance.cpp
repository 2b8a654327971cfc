// Acceptance gate: ten executable properties of the self-play training lab.
// Each check prints one PASS/FAIL line with its measured margin and pinned
// tolerance; the process exits with the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <spindiff/checkpoint.hpp>
#include <spindiff/data.hpp>
#include <spindiff/diffusion.hpp>
#include <spindiff/eval.hpp>
#include <spindiff/losses.hpp>
#include <spindiff/schedule.hpp>
#include <spindiff/score_net.hpp>
#include <spindiff/trainer.hpp>

using namespace spindiff;

namespace {

constexpr std::uint64_t kSeed = 0xACCE5EEDull;

int g_failures = 0;

void report(int idx, const char* name, bool pass, const std::string& detail, double secs) {
  std::printf("[%2d] %s  %-44s %s  (%.1f s)\n", idx, pass ? "PASS" : "FAIL", name,
              detail.c_str(), secs);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt(const char* f, ...) {
  char buf[256];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

struct MeanSE {
  double mean = 0.0, se = 0.0;
};

MeanSE mean_se(const std::vector<double>& v) {
  MeanSE r;
  double n = static_cast<double>(v.size());
  for (double x : v) r.mean += x;
  r.mean /= n;
  double q = 0.0;
  for (double x : v) q += (x - r.mean) * (x - r.mean);
  r.se = std::sqrt(q / (n - 1.0) / n);
  return r;
}

ScoreNetArch small_arch(std::vector<int> hidden, int time_dim) {
  ScoreNetArch a;
  a.d = 2;
  a.num_classes = 4;
  a.time_dim = time_dim;
  a.hidden = std::move(hidden);
  a.clamp_bound = 10.0;
  return a;
}

ScoreModelParams jitter(ScoreModelParams p, double scale, std::uint64_t seed) {
  CounterRng rng(seed);
  for (double& v : p.theta) v += scale * rng.normal();
  return p;
}

std::vector<double> draw_x0(const TargetSpec& spec, int label, CounterRng& rng) {
  return sample_target(spec, label, rng);
}

struct PairBatch {
  std::vector<StepPair> real, synth;
};

// both sides noised from (optionally distinct) clean draws, shared t per slot
PairBatch sampled_pairs(const NoiseSchedule& ns, const TargetSpec& spec, int n,
                        std::uint64_t seed) {
  PairBatch b;
  CounterRng rng(seed);
  for (int i = 0; i < n; ++i) {
    int label = static_cast<int>(rng.uniform_index(spec.num_classes()));
    Condition cond(label, spec.num_classes());
    int t = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(ns.T)));
    std::vector<double> xr = draw_x0(spec, label, rng);
    std::vector<double> xs = draw_x0(spec, label, rng);
    b.real.push_back(pair_from_marginal_posterior(ns, xr, cond, t, rng, Provenance::kReal));
    b.synth.push_back(
        pair_from_marginal_posterior(ns, xs, cond, t, rng, Provenance::kSynthetic));
  }
  return b;
}

struct TrajBatch {
  std::vector<Trajectory> real, synth;
};

TrajBatch sampled_trajectories(const NoiseSchedule& ns, const TargetSpec& spec, int n,
                               std::uint64_t seed) {
  TrajBatch b;
  CounterRng rng(seed);
  for (int i = 0; i < n; ++i) {
    int label = static_cast<int>(rng.uniform_index(spec.num_classes()));
    Condition cond(label, spec.num_classes());
    std::vector<double> xr = draw_x0(spec, label, rng);
    std::vector<double> xs = draw_x0(spec, label, rng);
    b.real.push_back(forward_trajectory(ns, xr, cond, rng));
    Trajectory syn = forward_trajectory(ns, xs, cond, rng);
    syn.provenance = Provenance::kSynthetic;
    b.synth.push_back(std::move(syn));
  }
  return b;
}

struct EpsBatch {
  std::vector<EpsItem> real, synth;
};

EpsBatch sampled_eps_items(const NoiseSchedule& ns, const TargetSpec& spec, int n,
                           std::uint64_t seed) {
  EpsBatch b;
  CounterRng rng(seed);
  for (int i = 0; i < n; ++i) {
    int label = static_cast<int>(rng.uniform_index(spec.num_classes()));
    int t = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(ns.T)));
    EpsItem r, s;
    r.cond = s.cond = Condition(label, spec.num_classes());
    r.t = s.t = t;
    r.x0 = draw_x0(spec, label, rng);
    s.x0 = draw_x0(spec, label, rng);
    r.eps = rng.normal_vec(2);
    s.eps = rng.normal_vec(2);
    b.real.push_back(std::move(r));
    b.synth.push_back(std::move(s));
  }
  return b;
}

std::vector<double> uniform_beta(const NoiseSchedule& ns, CounterRng& rng) {
  std::vector<double> beta(static_cast<std::size_t>(ns.T) + 1, 0.0);
  for (int t = 1; t <= ns.T; ++t) beta[static_cast<std::size_t>(t)] = rng.uniform(0.05, 0.3);
  return beta;
}

// ---------------------------------------------------------------------------

// 1. training the current player against itself sits exactly at ell(0)
void c1_fixed_point() {
  double t0 = now_s();
  TargetSpec spec = default_target_spec();
  double worst = 0.0;
  int clamped = 0;
  for (int i = 0; i < 50; ++i) {
    std::uint64_t s = derive_seed(kSeed, "c1", static_cast<std::uint64_t>(i));
    int T = 4 + i % 5;
    ScheduleShape shape = i % 2 ? ScheduleShape::kLinearCumulative : ScheduleShape::kCosine;
    double eta = i % 3 == 0 ? 0.0 : 1.0;
    NoiseSchedule ns = make_schedule(T, shape, eta);
    ScoreNetArch arch = small_arch({6}, 4);
    ScoreModelParams theta_k = jitter(init_score_model(arch, s), 0.25, derive_seed(s, "jit"));

    SpinLossConfig cfg;
    cfg.ell = static_cast<EllKind>(i % 3);
    CounterRng brng(derive_seed(s, "beta"));
    cfg.beta = uniform_beta(ns, brng);
    double l0 = ell_at_zero(cfg.ell);

    PairBatch pairs = sampled_pairs(ns, spec, 3, derive_seed(s, "pairs"));
    TrajBatch trajs = sampled_trajectories(ns, spec, 3, derive_seed(s, "trajs"));
    EpsBatch eps = sampled_eps_items(ns, spec, 3, derive_seed(s, "eps"));

    LossDiag diag;
    cfg.variant = SpinVariant::kApproxMu;
    double la = spin_approx_loss(theta_k, theta_k, pairs.real, pairs.synth, cfg, ns, &diag);
    cfg.variant = SpinVariant::kExact;
    double lx = spin_exact_loss(theta_k, theta_k, trajs.real, trajs.synth, cfg, ns, &diag);
    cfg.variant = SpinVariant::kApproxEps;
    cfg.eps_form = EpsForm::kFourTerm;
    double l4 = spin_eps_loss(theta_k, theta_k, eps.real, eps.synth, cfg, ns, &diag);
    cfg.eps_form = EpsForm::kThreeTerm;
    double l3 = spin_eps_loss(theta_k, theta_k, eps.real, eps.synth, cfg, ns, &diag);
    clamped += static_cast<int>(diag.clamp_events);
    for (double l : {la, lx, l4, l3})
      worst = std::max(worst, std::fabs(l - l0) / std::max(1.0, std::fabs(l0)));
  }
  bool pass = worst <= 1e-12 && clamped == 0;
  report(1, "self-play fixed point sits at ell(0)", pass,
         fmt("max rel dev %.2e (tol 1e-12, 50 configs x 3 variants)", worst), now_s() - t0);
}

// 2. the per-step loss upper-bounds the whole-trajectory loss, pairwise
void c2_step_bound() {
  double t0 = now_s();
  TargetSpec spec = default_target_spec();
  std::vector<double> gaps;
  double worst_violation = -1e300;
  for (int i = 0; i < 60; ++i) {
    std::uint64_t s = derive_seed(kSeed, "c2", static_cast<std::uint64_t>(i));
    NoiseSchedule ns =
        make_schedule(6, i % 2 ? ScheduleShape::kLinearCumulative : ScheduleShape::kCosine, 1.0);
    ScoreNetArch arch = small_arch({6}, 4);
    ScoreModelParams theta = jitter(init_score_model(arch, s), 0.2, derive_seed(s, "a"));
    ScoreModelParams theta_k =
        jitter(init_score_model(arch, derive_seed(s, "k")), 0.2, derive_seed(s, "b"));

    TrajBatch trajs = sampled_trajectories(ns, spec, 2, derive_seed(s, "trajs"));
    std::vector<StepPair> real_pairs, synth_pairs;
    for (std::size_t j = 0; j < trajs.real.size(); ++j) {
      auto rp = pairs_from_trajectory(trajs.real[j]);
      auto sp = pairs_from_trajectory(trajs.synth[j]);
      real_pairs.insert(real_pairs.end(), rp.begin(), rp.end());
      synth_pairs.insert(synth_pairs.end(), sp.begin(), sp.end());
    }

    SpinLossConfig cfg;
    cfg.ell = EllKind::kLogistic;
    CounterRng brng(derive_seed(s, "beta"));
    cfg.beta = uniform_beta(ns, brng);
    LossDiag diag;
    cfg.variant = SpinVariant::kExact;
    double exact = spin_exact_loss(theta, theta_k, trajs.real, trajs.synth, cfg, ns, &diag);
    cfg.variant = SpinVariant::kApproxMu;
    double approx = spin_approx_loss(theta, theta_k, real_pairs, synth_pairs, cfg, ns, &diag);
    if (diag.clamp_events != 0) continue;  // bound needs the smooth region
    gaps.push_back(exact - approx);
    worst_violation = std::max(worst_violation, exact - approx);
  }
  MeanSE g = mean_se(gaps);
  bool pass = gaps.size() >= 50 && worst_violation <= 1e-12 && g.mean < 0.0 &&
              g.mean <= 3.0 * g.se;
  report(2, "step-sampled loss bounds trajectory loss", pass,
         fmt("gap mean %.3e se %.1e, worst %.2e (%zu draws)", g.mean, g.se, worst_violation,
             gaps.size()),
         now_s() - t0);
}

// 3. reverse-mode gradients match central finite differences everywhere
void c3_grad_check() {
  double t0 = now_s();
  TargetSpec spec = default_target_spec();
  NoiseSchedule ns = make_schedule(5, ScheduleShape::kCosine, 1.0);
  ScoreNetArch arch = small_arch({8, 8}, 4);
  const double h = 1e-5, tol = 1e-4, floor = 1e-8;
  double worst = 0.0;
  std::size_t coords = 0;
  for (int seed_i = 0; seed_i < 20; ++seed_i) {
    std::uint64_t s = derive_seed(kSeed, "c3", static_cast<std::uint64_t>(seed_i));
    ScoreModelParams p = jitter(init_score_model(arch, s), 0.2, derive_seed(s, "a"));
    ScoreModelParams opp =
        jitter(init_score_model(arch, derive_seed(s, "k")), 0.2, derive_seed(s, "b"));

    PairBatch pairs = sampled_pairs(ns, spec, 3, derive_seed(s, "pairs"));
    TrajBatch trajs = sampled_trajectories(ns, spec, 2, derive_seed(s, "trajs"));
    EpsBatch eps = sampled_eps_items(ns, spec, 3, derive_seed(s, "eps"));
    std::vector<DsmItem> dsm = eps.real;

    SpinLossConfig cfg;
    cfg.ell = static_cast<EllKind>(seed_i % 3);
    CounterRng brng(derive_seed(s, "beta"));
    cfg.beta = uniform_beta(ns, brng);

    struct LossDef {
      std::vector<double> grad;
      std::function<double(const ScoreModelParams&)> f;
    };
    std::vector<LossDef> defs;
    defs.push_back({dsm_grad(p, dsm, ns).grad,
                    [&](const ScoreModelParams& q) { return dsm_loss(q, dsm, ns); }});
    cfg.variant = SpinVariant::kApproxMu;
    defs.push_back({spin_approx_grad(p, opp, pairs.real, pairs.synth, cfg, ns).grad,
                    [&, cfg](const ScoreModelParams& q) {
                      return spin_approx_loss(q, opp, pairs.real, pairs.synth, cfg, ns);
                    }});
    cfg.variant = SpinVariant::kExact;
    defs.push_back({spin_exact_grad(p, opp, trajs.real, trajs.synth, cfg, ns).grad,
                    [&, cfg](const ScoreModelParams& q) {
                      return spin_exact_loss(q, opp, trajs.real, trajs.synth, cfg, ns);
                    }});
    cfg.variant = SpinVariant::kApproxEps;
    cfg.eps_form = EpsForm::kFourTerm;
    defs.push_back({spin_eps_grad(p, opp, eps.real, eps.synth, cfg, ns).grad,
                    [&, cfg](const ScoreModelParams& q) {
                      return spin_eps_loss(q, opp, eps.real, eps.synth, cfg, ns);
                    }});
    cfg.eps_form = EpsForm::kThreeTerm;
    defs.push_back({spin_eps_grad(p, opp, eps.real, eps.synth, cfg, ns).grad,
                    [&, cfg](const ScoreModelParams& q) {
                      return spin_eps_loss(q, opp, eps.real, eps.synth, cfg, ns);
                    }});

    for (const LossDef& def : defs) {
      for (std::size_t i = 0; i < p.theta.size(); ++i) {
        ScoreModelParams q = p;
        q.theta[i] = p.theta[i] + h;
        double up = def.f(q);
        q.theta[i] = p.theta[i] - h;
        double dn = def.f(q);
        double fd = (up - dn) / (2.0 * h);
        double denom = std::max({std::fabs(def.grad[i]), std::fabs(fd), floor / tol});
        worst = std::max(worst, std::fabs(def.grad[i] - fd) / denom);
        ++coords;
      }
    }
  }
  bool pass = worst < tol;
  report(3, "autodiff matches finite differences", pass,
         fmt("max rel err %.2e (tol 1e-4, %zu coords, P=%zu)", worst, coords,
             arch.param_count()),
         now_s() - t0);
}

// 4. the weight/match/push factorization reproduces the autodiff gradient
void c4_decomposition() {
  double t0 = now_s();
  TargetSpec spec = default_target_spec();
  NoiseSchedule ns = make_schedule(6, ScheduleShape::kCosine, 1.0);
  ScoreNetArch arch = small_arch({6}, 4);
  double worst = 0.0, min_weight = 1e300;
  for (int i = 0; i < 20; ++i) {
    std::uint64_t s = derive_seed(kSeed, "c4", static_cast<std::uint64_t>(i));
    ScoreModelParams p = jitter(init_score_model(arch, s), 0.25, derive_seed(s, "a"));
    ScoreModelParams opp =
        jitter(init_score_model(arch, derive_seed(s, "k")), 0.25, derive_seed(s, "b"));
    PairBatch pairs = sampled_pairs(ns, spec, 4, derive_seed(s, "pairs"));
    SpinLossConfig cfg;
    cfg.ell = static_cast<EllKind>(i % 3);
    cfg.variant = SpinVariant::kApproxMu;
    CounterRng brng(derive_seed(s, "beta"));
    cfg.beta = uniform_beta(ns, brng);

    DecomposedGrad dec = spin_gradient_decomposed(p, opp, pairs.real, pairs.synth, cfg, ns);
    GradResult tape = spin_approx_grad(p, opp, pairs.real, pairs.synth, cfg, ns);
    worst = std::max(worst, std::fabs(dec.value - tape.value) /
                                std::max(1.0, std::fabs(tape.value)));
    for (std::size_t j = 0; j < tape.grad.size(); ++j) {
      double denom = std::max({1e-30, std::fabs(tape.grad[j]), std::fabs(dec.grad[j])});
      if (std::fabs(tape.grad[j]) < 1e-14 && std::fabs(dec.grad[j]) < 1e-14) continue;
      worst = std::max(worst, std::fabs(dec.grad[j] - tape.grad[j]) / denom);
    }
    for (double w : dec.weights) min_weight = std::min(min_weight, w);
  }
  bool pass = worst <= 1e-12 && min_weight >= 0.0;
  report(4, "gradient factorization matches autodiff", pass,
         fmt("max rel dev %.2e (tol 1e-12), min weight %.2e", worst, min_weight),
         now_s() - t0);
}

// 5. the reverse mean is affine in the noise head and residuals transport
void c5_h_identity() {
  double t0 = now_s();
  ScoreNetArch arch = small_arch({6}, 4);
  ScoreModelParams p =
      jitter(init_score_model(arch, derive_seed(kSeed, "c5")), 0.3, derive_seed(kSeed, "c5j"));
  double worst = 0.0;
  int checked = 0;
  CounterRng rng(derive_seed(kSeed, "c5x"));
  for (ScheduleShape shape : {ScheduleShape::kCosine, ScheduleShape::kLinearCumulative}) {
    for (double eta : {1.0, 0.0}) {
      NoiseSchedule ns = make_schedule(12, shape, eta);
      for (int t = 1; t <= ns.T; ++t) {
        double a = std::sqrt(ns.alpha[static_cast<std::size_t>(t) - 1] /
                             ns.alpha[static_cast<std::size_t>(t)]);
        double ht = ns.h[static_cast<std::size_t>(t)];
        if (ht == 0.0) {
          worst = 1e300;  // affine form would be degenerate
          continue;
        }
        std::vector<double> x = rng.normal_vec(2);
        std::vector<double> x_prev = rng.normal_vec(2);
        Condition cond(t % 4, 4);
        std::vector<double> epshat;
        eval_score_generic<double>(p.arch, p.theta, x, cond, t, ns.T, epshat);
        std::vector<double> mu = mu_theta(p, ns, x, cond, t);
        double direct = 0.0, affine_dev = 0.0, eps_form = 0.0;
        for (int k = 0; k < 2; ++k) {
          double mk = a * x[static_cast<std::size_t>(k)] + ht * epshat[static_cast<std::size_t>(k)];
          affine_dev = std::max(affine_dev,
                                std::fabs(mk - mu[static_cast<std::size_t>(k)]) /
                                    std::max(1.0, std::fabs(mu[static_cast<std::size_t>(k)])));
          double r = x_prev[static_cast<std::size_t>(k)] - mu[static_cast<std::size_t>(k)];
          direct += r * r;
          double etil =
              (x_prev[static_cast<std::size_t>(k)] - a * x[static_cast<std::size_t>(k)]) / ht;
          eps_form += (etil - epshat[static_cast<std::size_t>(k)]) *
                      (etil - epshat[static_cast<std::size_t>(k)]);
        }
        eps_form *= ht * ht;
        worst = std::max(worst, affine_dev);
        worst = std::max(worst,
                         std::fabs(direct - eps_form) / std::max(1e-12, std::fabs(direct)));
        ++checked;
      }
    }
  }
  bool pass = worst <= 1e-10;
  report(5, "reverse-mean affine identity holds", pass,
         fmt("max rel dev %.2e (tol 1e-10, %d (shape,eta,t) points)", worst, checked),
         now_s() - t0);
}

// per-slot losses of the step-pair objective, for standard errors
std::vector<double> per_pair_losses(const ScoreModelParams& p, const ScoreModelParams& opp,
                                    const PairBatch& b, const SpinLossConfig& cfg,
                                    const NoiseSchedule& ns) {
  std::vector<double> out;
  out.reserve(b.real.size());
  for (std::size_t i = 0; i < b.real.size(); ++i)
    out.push_back(spin_approx_loss(p, opp, std::span<const StepPair>(&b.real[i], 1),
                                   std::span<const StepPair>(&b.synth[i], 1), cfg, ns));
  return out;
}

// 6. when both players see the same pair distribution, no direction wins
void c6_equilibrium_floor() {
  double t0 = now_s();
  TargetSpec spec = default_target_spec();
  NoiseSchedule ns = make_schedule(8, ScheduleShape::kCosine, 1.0);
  ScoreNetArch arch = small_arch({8}, 4);
  ScoreModelParams theta_k = jitter(init_score_model(arch, derive_seed(kSeed, "c6")), 0.2,
                                    derive_seed(kSeed, "c6j"));
  // real and synthetic slots drawn from one and the same joint
  PairBatch batch = sampled_pairs(ns, spec, 1500, derive_seed(kSeed, "c6pairs"));
  SpinLossConfig cfg;
  cfg.ell = EllKind::kLogistic;
  cfg.variant = SpinVariant::kApproxMu;
  cfg.beta = beta_schedule(ns, BetaPolicy::kConstant, 2.0);
  double l0 = ell_at_zero(cfg.ell);
  double worst_margin = 1e300;
  int violations = 0;
  for (int probe = 0; probe < 20; ++probe) {
    ScoreModelParams theta =
        jitter(theta_k, 0.05, derive_seed(kSeed, "c6probe", static_cast<std::uint64_t>(probe)));
    std::vector<double> ls = per_pair_losses(theta, theta_k, batch, cfg, ns);
    MeanSE m = mean_se(ls);
    double margin = m.mean - (l0 - 3.0 * m.se);
    worst_margin = std::min(worst_margin, margin);
    if (margin < 0.0) ++violations;
  }
  bool pass = violations == 0;
  report(6, "matched players never dip below ell(0)", pass,
         fmt("min margin above ell(0)-3se: %+.2e (20 probes, n=1500)", worst_margin),
         now_s() - t0);
}

// 7. an opponent with reducible denoising loss is strictly beatable
void c7_beatable_opponent() {
  double t0 = now_s();
  TargetSpec spec = default_target_spec();
  NoiseSchedule ns = make_schedule(8, ScheduleShape::kCosine, 1.0);
  ScoreNetArch arch = small_arch({16, 16}, 8);
  // zero noise head: positive reducible denoising loss by construction
  ScoreModelParams theta_k = init_score_model(arch, derive_seed(kSeed, "c7init"));
  Dataset ds = generate_dataset(spec, 1024, {}, derive_seed(kSeed, "c7data"));

  SftConfig sft;
  sft.steps = 400;
  sft.batch_size = 64;
  sft.opt.lr = 5e-3;
  sft.opt.warmup_steps = 40;
  ScoreModelParams theta_star =
      train_sft(theta_k, ds, ns, sft, derive_seed(kSeed, "c7sft")).params;

  // real pairs from the data, synthetic pairs from the opponent's samples
  PairBatch batch;
  CounterRng rng(derive_seed(kSeed, "c7pairs"));
  for (int i = 0; i < 1500; ++i) {
    std::size_t rec = static_cast<std::size_t>(rng.uniform_index(ds.records.size()));
    Condition cond = ds.condition_of(rec);
    int t = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(ns.T)));
    batch.real.push_back(
        pair_from_marginal_posterior(ns, ds.records[rec].x0, cond, t, rng, Provenance::kReal));
    Trajectory gen = reverse_sample(theta_k, ns, cond, rng);
    batch.synth.push_back(forwardized_synthetic_pair(ns, gen.x[0], cond, t, rng));
  }
  SpinLossConfig cfg;
  cfg.ell = EllKind::kLogistic;
  cfg.variant = SpinVariant::kApproxMu;
  cfg.beta = beta_schedule(ns, BetaPolicy::kGammaMatched, 0.05);
  double l0 = ell_at_zero(cfg.ell);
  std::vector<double> ls = per_pair_losses(theta_star, theta_k, batch, cfg, ns);
  MeanSE m = mean_se(ls);
  double margin = (l0 - 3.0 * m.se) - m.mean;  // positive: strictly below the floor
  bool pass = margin > 0.0;
  report(7, "reducible opponent is strictly beatable", pass,
         fmt("loss %.5f vs floor %.5f-3*%.1e, margin %+.2e", m.mean, l0, m.se, margin),
         now_s() - t0);
}

struct E2EOutcome {
  double energy_sft = 0.0, energy_spin = 0.0, win_vs_base = 0.0;
  double loglik_spin = 0.0, loglik_spin_after_sft = 0.0;  // for the saturation check
};

E2EOutcome run_e2e_seed(int seed_i) {
  TargetSpec spec = default_target_spec();
  NoiseSchedule ns = make_schedule(10, ScheduleShape::kCosine, 1.0);
  ScoreNetArch arch = small_arch({24, 24}, 8);
  std::uint64_t s = derive_seed(kSeed, "c8", static_cast<std::uint64_t>(seed_i));

  Dataset ds = generate_dataset(spec, 2048, {}, derive_seed(s, "data"));
  ScoreModelParams init = init_score_model(arch, derive_seed(s, "init"));

  SftConfig warm;
  warm.steps = 300;
  warm.batch_size = 64;
  warm.opt.lr = 5e-3;
  warm.opt.warmup_steps = 50;
  warm.opt.weight_decay = 1e-2;
  ScoreModelParams base = train_sft(init, ds, ns, warm, derive_seed(s, "warm")).params;

  SftConfig more = warm;
  more.steps = 1600;
  ScoreModelParams sft_final = train_sft(base, ds, ns, more, derive_seed(s, "sft")).params;

  // Self-play branch: step count matches the supervised branch; batch size,
  // learning rate, and the beta ramp keep the documented 4x / 2x / 2.5x ratios
  // to the supervised settings.
  SpinRunConfig spin;
  spin.iterations = 2;
  spin.steps = {800};
  spin.batch_size = 1024;
  spin.opt.lr = 1e-2;
  spin.opt.warmup_steps = 50;
  spin.opt.weight_decay = 1e-2;
  spin.beta_scale = {20.0, 50.0};
  SpinIterationState st{base, base, 0};
  st = run_spin(std::move(st), ds, ns, spin, derive_seed(s, "spin"));
  ScoreModelParams spin_final = st.current;

  std::uint64_t eval_seed = derive_seed(s, "eval");
  E2EOutcome out;
  out.energy_sft = evaluate(sft_final, spec, ns, 256, eval_seed, 256).energy_distance_mean;
  EvalReport spin_rep = evaluate(spin_final, spec, ns, 256, eval_seed, 256);
  out.energy_spin = spin_rep.energy_distance_mean;
  out.loglik_spin = spin_rep.mean_loglik;
  out.win_vs_base = win_rate(spin_final, base, spec, ns, 200, derive_seed(s, "wr"));

  SftConfig extra = warm;
  extra.steps = 800;
  ScoreModelParams polished =
      train_sft(spin_final, ds, ns, extra, derive_seed(s, "extra")).params;
  out.loglik_spin_after_sft =
      evaluate(polished, spec, ns, 256, eval_seed, 256).mean_loglik;
  return out;
}

std::vector<E2EOutcome> g_e2e;

// 8. with matched budgets, self-play matches or beats continued supervision
void c8_self_play_vs_sft() {
  double t0 = now_s();
  int wins = 0;
  double wr_sum = 0.0;
  std::string per_seed;
  for (int i = 0; i < 5; ++i) {
    g_e2e.push_back(run_e2e_seed(i));
    const E2EOutcome& o = g_e2e.back();
    if (o.energy_spin <= o.energy_sft) ++wins;
    wr_sum += o.win_vs_base;
    per_seed += fmt("%s%.3f/%.3f", i ? " " : "", o.energy_spin, o.energy_sft);
  }
  double wr_mean = wr_sum / 5.0;
  bool pass = wins >= 3 && wr_mean >= 0.6;
  report(8, "self-play holds matched-budget advantage", pass,
         fmt("energy spin/sft: %s; %d/5 seeds, win vs base %.3f (need >=0.6)",
             per_seed.c_str(), wins, wr_mean),
         now_s() - t0);
}

// 9. an extra supervised phase never degrades the self-play checkpoint
//    beyond noise (paired seeds, sample quality = target log-likelihood)
void c9_sft_saturation() {
  double t0 = now_s();
  std::vector<double> diffs;
  for (const E2EOutcome& o : g_e2e) diffs.push_back(o.loglik_spin_after_sft - o.loglik_spin);
  MeanSE d = mean_se(diffs);
  bool pass = d.mean >= -2.0 * d.se;
  report(9, "extra supervision does not degrade self-play", pass,
         fmt("paired loglik change %+.4f se %.4f (need >= -2se)", d.mean, d.se),
         now_s() - t0);
}

// 10. identical configs give byte-identical datasets and checkpoints
void c10_determinism() {
  double t0 = now_s();
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "spindiff_acceptance_c10";
  fs::remove_all(dir);
  fs::create_directories(dir);

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };

  TargetSpec spec = default_target_spec();
  NoiseSchedule ns = make_schedule(6, ScheduleShape::kCosine, 1.0);
  ScoreNetArch arch = small_arch({12, 12}, 4);
  for (int run = 0; run < 2; ++run) {
    Dataset ds = generate_dataset(spec, 256, {}, derive_seed(kSeed, "c10data"));
    save_dataset((dir / fmt("ds_%d.bin", run)).string(), ds);
    SftConfig sft;
    sft.steps = 60;
    sft.batch_size = 16;
    sft.opt.lr = 5e-3;
    sft.opt.warmup_steps = 10;
    ScoreModelParams m =
        train_sft(init_score_model(arch, derive_seed(kSeed, "c10init")), ds, ns, sft,
                  derive_seed(kSeed, "c10sft"))
            .params;
    save_checkpoint((dir / fmt("sft_%d.bin", run)).string(), m, ns.T);
    SpinRunConfig spin;
    spin.iterations = 2;
    spin.steps = {30};
    spin.batch_size = 16;
    spin.opt.lr = 2e-3;
    spin.opt.warmup_steps = 5;
    SpinIterationState st{m, m, 0};
    int iter = 0;
    st = run_spin(std::move(st), ds, ns, spin, derive_seed(kSeed, "c10spin"), {},
                  [&](const SpinIterationState& cur, const IterationRecord&) {
                    save_checkpoint((dir / fmt("it%d_%d.bin", ++iter, run)).string(),
                                    cur.current, ns.T);
                  });
  }
  bool pass = true;
  for (const char* stem : {"ds", "sft", "it1", "it2"})
    pass = pass && slurp(dir / fmt("%s_0.bin", stem)) == slurp(dir / fmt("%s_1.bin", stem)) &&
           !slurp(dir / fmt("%s_0.bin", stem)).empty();
  fs::remove_all(dir);
  report(10, "reruns are byte-identical", pass,
         pass ? "dataset, sft and both iteration checkpoints match" : "byte mismatch",
         now_s() - t0);
}

}  // namespace

int main() {
  double t0 = now_s();
  std::printf("acceptance checks, fixed seeds, single thread\n");
  void (*checks[])() = {c1_fixed_point, c2_step_bound,        c3_grad_check,
                        c4_decomposition, c5_h_identity,      c6_equilibrium_floor,
                        c7_beatable_opponent, c8_self_play_vs_sft, c9_sft_saturation,
                        c10_determinism};
  int idx = 0;
  for (auto fn : checks) {
    ++idx;
    try {
      fn();
    } catch (const std::exception& e) {
      report(idx, "(crashed)", false, std::string("exception: ") + e.what(), 0.0);
    }
  }
  std::printf("ACCEPTANCE: %d/10 passed (%.1f s total)\n", 10 - g_failures, now_s() - t0);
  return g_failures;
}
