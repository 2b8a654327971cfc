#pragma once

// Sample-quality metrics against the known target density.
//
// energy_distance uses the unbiased two-sample U-statistic
//   2/(nm) sum ||x_i - y_j|| - 1/(n(n-1)) sum_{i != j} ||x_i - x_j||
//                            - 1/(m(m-1)) sum_{i != j} ||y_i - y_j||,
// zero in expectation when both samples share a distribution (individual
// estimates may be slightly negative).

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "spindiff/data.hpp"
#include "spindiff/diffusion.hpp"
#include "spindiff/losses.hpp"
#include "spindiff/rng.hpp"
#include "spindiff/schedule.hpp"
#include "spindiff/score_net.hpp"

namespace spindiff {

namespace detail {

inline double euclid(std::span<const double> a, std::span<const double> b) {
  double q = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double r = a[i] - b[i];
    q += r * r;
  }
  return std::sqrt(q);
}

}  // namespace detail

inline double energy_distance(std::span<const std::vector<double>> x,
                              std::span<const std::vector<double>> y) {
  std::size_t n = x.size(), m = y.size();
  if (n < 2 || m < 2)
    throw std::invalid_argument("energy_distance: needs >= 2 samples per side");
  double cross = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) cross += detail::euclid(x[i], y[j]);
  double within_x = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) within_x += detail::euclid(x[i], x[j]);
  double within_y = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) within_y += detail::euclid(y[i], y[j]);
  return 2.0 * cross / (static_cast<double>(n) * m) -
         2.0 * within_x / (static_cast<double>(n) * (n - 1)) -
         2.0 * within_y / (static_cast<double>(m) * (m - 1));
}

struct EvalReport {
  int n_samples_per_condition = 0;
  std::vector<double> energy_distance_per_condition;
  std::vector<double> mean_loglik_per_condition;
  double energy_distance_mean = 0.0;
  double mean_loglik = 0.0;
  // Monte Carlo denoising loss on held-out target draws, minus the
  // zero-predictor bar E||eps||^2 = d. Negative means the model beats a
  // constant-zero noise predictor.
  double dsm_excess = 0.0;

  void validate_finite() const {
    auto chk = [](double v) {
      if (!std::isfinite(v)) throw DivergenceError("eval: non-finite metric");
    };
    for (double v : energy_distance_per_condition) chk(v);
    for (double v : mean_loglik_per_condition) chk(v);
    chk(energy_distance_mean);
    chk(mean_loglik);
    chk(dsm_excess);
  }
};

inline EvalReport evaluate(const ScoreModelParams& p, const TargetSpec& spec,
                           const NoiseSchedule& ns, int n_per_condition,
                           std::uint64_t seed, int dsm_probes = 2048) {
  if (n_per_condition < 2) throw std::invalid_argument("evaluate: n_per_condition >= 2");
  if (spec.d != p.arch.d || spec.num_classes() != p.arch.num_classes)
    throw std::invalid_argument("evaluate: target/model shape mismatch");
  EvalReport rep;
  rep.n_samples_per_condition = n_per_condition;
  int C = spec.num_classes();
  for (int c = 0; c < C; ++c) {
    Condition cond(c, C);
    std::vector<std::vector<double>> gen(static_cast<std::size_t>(n_per_condition));
    std::vector<std::vector<double>> ref(static_cast<std::size_t>(n_per_condition));
    double ll = 0.0;
    for (int i = 0; i < n_per_condition; ++i) {
      CounterRng grng(derive_seed(seed, "eval.gen", static_cast<std::uint64_t>(c)), i);
      gen[i] = reverse_sample(p, ns, cond, grng).x[0];
      CounterRng rrng(derive_seed(seed, "eval.ref", static_cast<std::uint64_t>(c)), i);
      ref[i] = sample_target(spec, c, rrng);
      ll += target_logpdf(spec, c, gen[i]);
    }
    rep.energy_distance_per_condition.push_back(energy_distance(gen, ref));
    rep.mean_loglik_per_condition.push_back(ll / n_per_condition);
  }
  for (int c = 0; c < C; ++c) {
    rep.energy_distance_mean += rep.energy_distance_per_condition[c] / C;
    rep.mean_loglik += rep.mean_loglik_per_condition[c] / C;
  }

  if (dsm_probes > 0) {
    std::vector<DsmItem> held;
    held.reserve(static_cast<std::size_t>(dsm_probes));
    for (int i = 0; i < dsm_probes; ++i) {
      CounterRng rng(derive_seed(seed, "eval.dsm"), static_cast<std::uint64_t>(i));
      int label = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(C)));
      DsmItem it;
      it.cond = Condition(label, C);
      it.x0 = sample_target(spec, label, rng);
      it.eps = rng.normal_vec(static_cast<std::size_t>(spec.d));
      it.t = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(ns.T)));
      held.push_back(std::move(it));
    }
    rep.dsm_excess = dsm_loss(p, held, ns) - static_cast<double>(spec.d);
  }
  rep.validate_finite();
  return rep;
}

// Paired comparison: for each prompt both models sample with identical noise
// streams; the higher target log-density wins, exact ties split. With
// best_of > 1 each model keeps its best-scoring sample first.
inline double win_rate(const ScoreModelParams& a, const ScoreModelParams& b,
                       const TargetSpec& spec, const NoiseSchedule& ns, int n_prompts,
                       std::uint64_t seed, int best_of = 1) {
  if (n_prompts < 1) throw std::invalid_argument("win_rate: n_prompts >= 1");
  if (best_of < 1) throw std::invalid_argument("win_rate: best_of >= 1");
  int C = spec.num_classes();
  double wins = 0.0;
  for (int i = 0; i < n_prompts; ++i) {
    CounterRng prng(derive_seed(seed, "winrate.prompt"), static_cast<std::uint64_t>(i));
    int label = static_cast<int>(prng.uniform_index(static_cast<std::uint64_t>(C)));
    Condition cond(label, C);
    auto best_score = [&](const ScoreModelParams& m) {
      double best = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < best_of; ++j) {
        CounterRng srng(derive_seed(seed, "winrate.sample", static_cast<std::uint64_t>(i)),
                        static_cast<std::uint64_t>(j));
        double s = target_logpdf(spec, label, reverse_sample(m, ns, cond, srng).x[0]);
        if (s > best) best = s;
      }
      return best;
    };
    double sa = best_score(a);
    double sb = best_score(b);
    if (sa > sb)
      wins += 1.0;
    else if (sa == sb)
      wins += 0.5;
  }
  return wins / n_prompts;
}

}  // namespace spindiff
