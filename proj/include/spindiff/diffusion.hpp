#pragma once

// Forward (noising) and reverse (denoising) chains over R^d.
//
// Forward conditionals, given data x0:
//   marginal   q(x_t | x0)        = N(sqrt(alpha_t) x0, (1 - alpha_t) I)
//   posterior  q(x_{t-1} | x_t, x0) = N(mu_t(x_t, x0), sigma_t^2 I)
//   mu_t = sqrt(alpha_{t-1}) x0
//        + sqrt(1 - alpha_{t-1} - sigma_t^2) (x_t - sqrt(alpha_t) x0) / sqrt(1 - alpha_t)
// This family reproduces the marginal above for every t, so a step pair
// (x_{t-1}, x_t) can be drawn either from a full trajectory or directly via
// marginal-then-posterior; both give the same joint law.
//
// Reverse chain under a model: x_T ~ N(0, I), then
//   x_{t-1} = mu_theta(x_t, c, t) + sigma_t ehat,
//   mu_theta = sqrt(alpha_{t-1}) (x_t - sqrt(1 - alpha_t) e_theta) / sqrt(alpha_t)
//            + sqrt(1 - alpha_{t-1} - sigma_t^2) e_theta.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "spindiff/rng.hpp"
#include "spindiff/schedule.hpp"
#include "spindiff/score_net.hpp"

namespace spindiff {

class DivergenceError : public std::runtime_error {
public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

enum class Provenance : std::uint8_t { kReal, kSynthetic };

struct Trajectory {
  Condition cond;
  std::vector<std::vector<double>> x;  // x[t], t = 0..T
  Provenance provenance = Provenance::kReal;
  std::uint64_t seed = 0;

  int T() const { return static_cast<int>(x.size()) - 1; }
};

struct StepPair {
  Condition cond;
  int t = 1;
  std::vector<double> x_prev;  // sample at step t-1
  std::vector<double> x_cur;   // sample at step t
  Provenance provenance = Provenance::kReal;
};

inline std::vector<double> forward_marginal_sample(const NoiseSchedule& ns, int t,
                                                   std::span<const double> x0,
                                                   std::span<const double> eps) {
  if (t < 1 || t > ns.T) throw std::invalid_argument("forward_marginal_sample: t out of range");
  if (eps.size() != x0.size())
    throw std::invalid_argument("forward_marginal_sample: dimension mismatch");
  double sa = std::sqrt(ns.alpha[t]);
  double sn = std::sqrt(1.0 - ns.alpha[t]);
  std::vector<double> xt(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) xt[i] = sa * x0[i] + sn * eps[i];
  return xt;
}

// Mean of q(x_{t-1} | x_t, x0). With sigma_1 = 0 this returns exactly x0 at t = 1.
inline std::vector<double> posterior_mean(const NoiseSchedule& ns, int t,
                                          std::span<const double> x_cur,
                                          std::span<const double> x0) {
  if (t < 1 || t > ns.T) throw std::invalid_argument("posterior_mean: t out of range");
  double a_prev = ns.alpha[t - 1];
  double a_cur = ns.alpha[t];
  double room = 1.0 - a_prev - ns.sigma[t] * ns.sigma[t];
  if (room < 0.0) room = 0.0;
  double c_dir = std::sqrt(room) / std::sqrt(1.0 - a_cur);
  double sa_prev = std::sqrt(a_prev);
  double sa_cur = std::sqrt(a_cur);
  std::vector<double> mu(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i)
    mu[i] = sa_prev * x0[i] + c_dir * (x_cur[i] - sa_cur * x0[i]);
  return mu;
}

// Samples x_T from the marginal, then walks the posterior down to x_1.
inline Trajectory forward_trajectory(const NoiseSchedule& ns, std::span<const double> x0,
                                     const Condition& cond, CounterRng& rng) {
  Trajectory traj;
  traj.cond = cond;
  traj.provenance = Provenance::kReal;
  traj.x.assign(static_cast<std::size_t>(ns.T) + 1, {});
  traj.x[0].assign(x0.begin(), x0.end());
  std::vector<double> eps(x0.size());
  rng.normal_span(eps);
  traj.x[ns.T] = forward_marginal_sample(ns, ns.T, x0, eps);
  for (int t = ns.T; t >= 2; --t) {
    std::vector<double> mu = posterior_mean(ns, t, traj.x[t], x0);
    std::vector<double>& prev = traj.x[t - 1];
    prev.resize(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) prev[i] = mu[i] + ns.sigma[t] * rng.normal();
  }
  return traj;
}

// Model mean, generic over the scalar type of the predicted noise.
template <class S>
std::vector<S> mu_theta_from_eps(const NoiseSchedule& ns, int t,
                                 std::span<const double> x_cur, std::span<const S> eps_theta) {
  if (t < 1 || t > ns.T) throw std::invalid_argument("mu_theta: t out of range");
  if (eps_theta.size() != x_cur.size())
    throw std::invalid_argument("mu_theta: dimension mismatch");
  double a_prev = ns.alpha[t - 1];
  double a_cur = ns.alpha[t];
  double room = 1.0 - a_prev - ns.sigma[t] * ns.sigma[t];
  if (room < 0.0) room = 0.0;
  double sa_prev = std::sqrt(a_prev);
  double sa_cur = std::sqrt(a_cur);
  double sn_cur = std::sqrt(1.0 - a_cur);
  double c_room = std::sqrt(room);
  std::vector<S> mu;
  mu.reserve(x_cur.size());
  for (std::size_t i = 0; i < x_cur.size(); ++i)
    mu.push_back(sa_prev * ((x_cur[i] - sn_cur * eps_theta[i]) / sa_cur) +
                 c_room * eps_theta[i]);
  return mu;
}

inline std::vector<double> mu_theta(const ScoreModelParams& p, const NoiseSchedule& ns,
                                    std::span<const double> x_cur, const Condition& cond,
                                    int t) {
  std::vector<double> eps;
  eval_score_generic<double>(p.arch, p.theta, x_cur, cond, t, ns.T, eps);
  return mu_theta_from_eps<double>(ns, t, x_cur, eps);
}

// Ancestral sampling under the model, x_T ~ N(0, I). Keeps the whole chain.
inline Trajectory reverse_sample(const ScoreModelParams& p, const NoiseSchedule& ns,
                                 const Condition& cond, CounterRng& rng) {
  Trajectory traj;
  traj.cond = cond;
  traj.provenance = Provenance::kSynthetic;
  traj.x.assign(static_cast<std::size_t>(ns.T) + 1, {});
  std::size_t d = static_cast<std::size_t>(p.arch.d);
  traj.x[ns.T].resize(d);
  rng.normal_span(traj.x[ns.T]);
  for (int t = ns.T; t >= 1; --t) {
    std::vector<double> mu = mu_theta(p, ns, traj.x[t], cond, t);
    std::vector<double>& prev = traj.x[t - 1];
    prev.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      prev[i] = mu[i] + ns.sigma[t] * rng.normal();
      if (!std::isfinite(prev[i]))
        throw DivergenceError("reverse_sample: non-finite state at t=" + std::to_string(t - 1));
    }
  }
  return traj;
}

inline std::vector<StepPair> pairs_from_trajectory(const Trajectory& traj) {
  std::vector<StepPair> pairs;
  pairs.reserve(static_cast<std::size_t>(traj.T()));
  for (int t = 1; t <= traj.T(); ++t)
    pairs.push_back(StepPair{traj.cond, t, traj.x[t - 1], traj.x[t], traj.provenance});
  return pairs;
}

// Draws one (x_{t-1}, x_t) pair directly: x_t from the marginal, x_{t-1} from
// the posterior. Same joint as slicing a full trajectory at t.
inline StepPair pair_from_marginal_posterior(const NoiseSchedule& ns,
                                             std::span<const double> x0,
                                             const Condition& cond, int t, CounterRng& rng,
                                             Provenance provenance) {
  std::vector<double> eps(x0.size());
  rng.normal_span(eps);
  StepPair pair;
  pair.cond = cond;
  pair.t = t;
  pair.provenance = provenance;
  pair.x_cur = forward_marginal_sample(ns, t, x0, eps);
  std::vector<double> mu = posterior_mean(ns, t, pair.x_cur, x0);
  pair.x_prev.resize(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i)
    pair.x_prev[i] = mu[i] + ns.sigma[t] * rng.normal();
  return pair;
}

// Synthetic pair built by pushing a model sample x0' back through the forward
// process; stands in for slicing a reverse trajectory at t.
inline StepPair forwardized_synthetic_pair(const NoiseSchedule& ns,
                                           std::span<const double> x0_synth,
                                           const Condition& cond, int t, CounterRng& rng) {
  return pair_from_marginal_posterior(ns, x0_synth, cond, t, rng, Provenance::kSynthetic);
}

}  // namespace spindiff
