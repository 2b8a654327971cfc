#pragma once

// Discrete noise schedule for a T-step denoising chain.
//
// Index convention: arrays are sized T+1 and addressed by step t. alpha[t]
// is the cumulative signal level with alpha[0] = 1; sigma/gamma/h are defined
// for t in 1..T and slot 0 is unused. sigma[1] is forced to 0: the posterior
// mean coefficient sqrt(1 - alpha[t-1] - sigma[t]^2) requires
// sigma[t]^2 <= 1 - alpha[t-1], which at t = 1 leaves no room.
//
// h[t] is the coefficient of the predicted noise inside the model mean:
//   mu(x_t, e) = sqrt(alpha[t-1]/alpha[t]) * x_t + h[t] * e,
//   h[t] = sqrt(1 - alpha[t-1] - sigma[t]^2)
//        - sqrt(alpha[t-1]/alpha[t]) * sqrt(1 - alpha[t]).
// It can be negative; losses only consume h[t]^2 and sigma[t]/h[t].

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace spindiff {

enum class ScheduleShape { kCosine, kLinearCumulative };

inline std::string to_string(ScheduleShape s) {
  return s == ScheduleShape::kCosine ? "cosine" : "linear-cumulative";
}

inline ScheduleShape schedule_shape_from_string(const std::string& s) {
  if (s == "cosine") return ScheduleShape::kCosine;
  if (s == "linear-cumulative") return ScheduleShape::kLinearCumulative;
  throw std::invalid_argument("unknown schedule shape: " + s);
}

struct NoiseSchedule {
  int T = 0;
  std::vector<double> alpha;  // [0..T], alpha[0] = 1, strictly decreasing
  std::vector<double> sigma;  // [1..T], sigma[1] = 0
  std::vector<double> gamma;  // [1..T], per-step loss weights, default 1
  std::vector<double> h;      // [1..T], noise coefficient of the model mean
};

namespace detail {

inline void validate_schedule(const NoiseSchedule& ns) {
  const int T = ns.T;
  if (T < 2) throw std::invalid_argument("schedule: T must be >= 2");
  if (ns.alpha.size() != static_cast<std::size_t>(T + 1) ||
      ns.sigma.size() != static_cast<std::size_t>(T + 1) ||
      ns.gamma.size() != static_cast<std::size_t>(T + 1) ||
      ns.h.size() != static_cast<std::size_t>(T + 1))
    throw std::invalid_argument("schedule: array sizes must be T+1");
  if (ns.alpha[0] != 1.0) throw std::invalid_argument("schedule: alpha[0] must be 1");
  for (int t = 1; t <= T; ++t) {
    if (!(ns.alpha[t] > 0.0 && ns.alpha[t] < ns.alpha[t - 1]))
      throw std::invalid_argument("schedule: alpha must be strictly decreasing and positive");
  }
  if (!(ns.alpha[T] <= 0.05))
    throw std::invalid_argument("schedule: alpha[T] must be <= 0.05");
  if (ns.sigma[1] != 0.0) throw std::invalid_argument("schedule: sigma[1] must be 0");
  for (int t = 1; t <= T; ++t) {
    if (!(ns.sigma[t] >= 0.0))
      throw std::invalid_argument("schedule: sigma must be nonnegative");
    double room = 1.0 - ns.alpha[t - 1];
    if (ns.sigma[t] * ns.sigma[t] > room * (1.0 + 1e-12) + 1e-15)
      throw std::invalid_argument("schedule: sigma[t]^2 must be <= 1 - alpha[t-1]");
    if (!(ns.gamma[t] > 0.0))
      throw std::invalid_argument("schedule: gamma must be positive");
  }
}

inline double compute_h(double a_prev, double a_cur, double sigma) {
  double room = 1.0 - a_prev - sigma * sigma;
  if (room < 0.0) room = 0.0;  // rounding guard; validation bounds the true value
  return std::sqrt(room) - std::sqrt(a_prev / a_cur) * std::sqrt(1.0 - a_cur);
}

}  // namespace detail

// Largest-variance choice per step: the reverse kernel then matches the
// classic ancestral sampler. eta in [0,1] scales it; eta = 0 is deterministic.
inline double ddpm_sigma(double a_prev, double a_cur) {
  return std::sqrt((1.0 - a_prev) / (1.0 - a_cur)) *
         std::sqrt(1.0 - a_cur / a_prev);
}

// Builds the derived arrays from an explicit cumulative-alpha array.
inline NoiseSchedule schedule_from_alphas(std::vector<double> alpha, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0))
    throw std::invalid_argument("schedule: eta must be in [0, 1]");
  NoiseSchedule ns;
  ns.T = static_cast<int>(alpha.size()) - 1;
  ns.alpha = std::move(alpha);
  ns.sigma.assign(ns.alpha.size(), 0.0);
  ns.gamma.assign(ns.alpha.size(), 1.0);
  ns.gamma[0] = 0.0;
  ns.h.assign(ns.alpha.size(), 0.0);
  for (int t = 2; t <= ns.T; ++t)
    ns.sigma[t] = eta * ddpm_sigma(ns.alpha[t - 1], ns.alpha[t]);
  // sigma[1] stays 0 (and the DDPM formula gives 0 there anyway).
  for (int t = 1; t <= ns.T; ++t)
    ns.h[t] = detail::compute_h(ns.alpha[t - 1], ns.alpha[t], ns.sigma[t]);
  detail::validate_schedule(ns);
  return ns;
}

// Rebuilds a schedule from fully explicit arrays (as echoed into run
// configs); recomputes h and validates everything.
inline NoiseSchedule schedule_from_arrays(std::vector<double> alpha,
                                          std::vector<double> sigma,
                                          std::vector<double> gamma) {
  NoiseSchedule ns;
  ns.T = static_cast<int>(alpha.size()) - 1;
  ns.alpha = std::move(alpha);
  ns.sigma = std::move(sigma);
  ns.gamma = std::move(gamma);
  if (ns.sigma.size() != ns.alpha.size() || ns.gamma.size() != ns.alpha.size())
    throw std::invalid_argument("schedule: array sizes must agree");
  if (!ns.sigma.empty()) ns.sigma[0] = 0.0;
  if (!ns.gamma.empty()) ns.gamma[0] = 0.0;
  ns.h.assign(ns.alpha.size(), 0.0);
  for (int t = 1; t <= ns.T; ++t)
    ns.h[t] = detail::compute_h(ns.alpha[t - 1], ns.alpha[t], ns.sigma[t]);
  detail::validate_schedule(ns);
  return ns;
}

inline NoiseSchedule make_schedule(int T, ScheduleShape shape, double eta) {
  if (T < 2) throw std::invalid_argument("schedule: T must be >= 2");
  const double alpha_T = 0.02;
  std::vector<double> alpha(static_cast<std::size_t>(T) + 1);
  switch (shape) {
    case ScheduleShape::kLinearCumulative:
      // straight line from 1 down to alpha_T
      for (int t = 0; t <= T; ++t)
        alpha[t] = 1.0 - (1.0 - alpha_T) * (static_cast<double>(t) / T);
      break;
    case ScheduleShape::kCosine: {
      // squared-cosine decay, affinely pinned to alpha[0] = 1, alpha[T] = alpha_T
      const double s = 0.008;
      auto f = [s](double u) {
        double c = std::cos((u + s) / (1.0 + s) * std::acos(-1.0) / 2.0);
        return c * c;
      };
      const double f0 = f(0.0), fT = f(1.0);
      for (int t = 0; t <= T; ++t) {
        double raw = (f(static_cast<double>(t) / T) - fT) / (f0 - fT);
        alpha[t] = alpha_T + (1.0 - alpha_T) * raw;
      }
      alpha[0] = 1.0;
      break;
    }
  }
  return schedule_from_alphas(std::move(alpha), eta);
}

enum class BetaPolicy { kConstant, kGammaMatched };

inline std::string to_string(BetaPolicy p) {
  return p == BetaPolicy::kConstant ? "constant" : "gamma-matched";
}

inline BetaPolicy beta_policy_from_string(const std::string& s) {
  if (s == "constant") return BetaPolicy::kConstant;
  if (s == "gamma-matched") return BetaPolicy::kGammaMatched;
  throw std::invalid_argument("unknown beta policy: " + s);
}

// Per-step comparison weights beta[1..T]; slot 0 unused. gamma-matched sets
// beta[t] = s * gamma[t] / h[t]^2, which makes the small-s linearization of
// the self-play objective line up with the gamma-weighted denoising loss.
inline std::vector<double> beta_schedule(const NoiseSchedule& ns, BetaPolicy policy,
                                         double s) {
  if (!(s > 0.0)) throw std::invalid_argument("beta_schedule: s must be > 0");
  std::vector<double> beta(ns.alpha.size(), 0.0);
  for (int t = 1; t <= ns.T; ++t) {
    switch (policy) {
      case BetaPolicy::kConstant:
        beta[t] = s;
        break;
      case BetaPolicy::kGammaMatched: {
        double h2 = ns.h[t] * ns.h[t];
        if (!(h2 > 0.0))
          throw std::invalid_argument("beta_schedule: gamma-matched needs h[t] != 0");
        beta[t] = s * ns.gamma[t] / h2;
        break;
      }
    }
  }
  return beta;
}

}  // namespace spindiff
