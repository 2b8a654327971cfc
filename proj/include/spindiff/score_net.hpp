#pragma once

// Conditional noise-prediction MLP. The forward pass is written once,
// generic over the scalar type: instantiated with double it is a plain
// evaluation, instantiated with ad::Value it records onto a tape and
// grad_loss differentiates any scalar loss built on top of it. Network
// inputs (state, condition, time features) are data, never differentiated;
// gradients are taken with respect to the flat parameter vector only.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "spindiff/autodiff.hpp"
#include "spindiff/rng.hpp"

namespace spindiff {

struct Condition {
  int label = 0;
  int num_classes = 1;

  Condition() = default;
  Condition(int label_, int num_classes_) : label(label_), num_classes(num_classes_) {
    if (num_classes < 1 || label < 0 || label >= num_classes)
      throw std::invalid_argument("condition: label out of range");
  }

  std::vector<double> embedding() const {
    std::vector<double> e(static_cast<std::size_t>(num_classes), 0.0);
    e[static_cast<std::size_t>(label)] = 1.0;
    return e;
  }
};

struct ScoreNetArch {
  int d = 2;
  int num_classes = 4;
  int time_dim = 8;              // even; sin/cos pairs at dyadic frequencies
  std::vector<int> hidden = {64, 64};
  double clamp_bound = 10.0;     // per-coordinate output clamp

  int input_dim() const { return d + num_classes + time_dim; }

  std::size_t param_count() const {
    std::size_t n = 0;
    int in = input_dim();
    for (int hsz : hidden) {
      n += static_cast<std::size_t>(hsz) * in + hsz;
      in = hsz;
    }
    n += static_cast<std::size_t>(d) * in + d;
    return n;
  }

  void validate() const {
    if (d < 1) throw std::invalid_argument("arch: d must be >= 1");
    if (num_classes < 1) throw std::invalid_argument("arch: num_classes must be >= 1");
    if (time_dim < 2 || time_dim % 2 != 0)
      throw std::invalid_argument("arch: time_dim must be even and >= 2");
    for (int hsz : hidden)
      if (hsz < 1) throw std::invalid_argument("arch: hidden widths must be >= 1");
    if (!(clamp_bound > 0.0)) throw std::invalid_argument("arch: clamp bound must be > 0");
  }

  bool operator==(const ScoreNetArch&) const = default;
};

struct ScoreModelParams {
  ScoreNetArch arch;
  std::vector<double> theta;
};

// sin/cos features of tau = t/T at frequencies 1, 2, 4, ...
inline void time_features(int t, int T, int time_dim, std::vector<double>& out) {
  double tau = static_cast<double>(t) / static_cast<double>(T);
  for (int j = 0; j < time_dim / 2; ++j) {
    double a = std::numbers::pi * std::ldexp(tau, j);
    out.push_back(std::sin(a));
    out.push_back(std::cos(a));
  }
}

inline std::vector<double> input_features(const ScoreNetArch& arch,
                                          std::span<const double> x,
                                          const Condition& c, int t, int T) {
  if (static_cast<int>(x.size()) != arch.d)
    throw std::invalid_argument("eval_score: state dimension mismatch");
  if (c.num_classes != arch.num_classes)
    throw std::invalid_argument("eval_score: condition class count mismatch");
  if (t < 1 || t > T) throw std::invalid_argument("eval_score: t out of range");
  std::vector<double> f;
  f.reserve(static_cast<std::size_t>(arch.input_dim()));
  f.insert(f.end(), x.begin(), x.end());
  for (int k = 0; k < arch.num_classes; ++k)
    f.push_back(k == c.label ? 1.0 : 0.0);
  time_features(t, T, arch.time_dim, f);
  return f;
}

// S is double or ad::Value. Writes the d predicted-noise coordinates to out.
template <class S>
void eval_score_generic(const ScoreNetArch& arch, std::span<const S> theta,
                        std::span<const double> x, const Condition& c, int t, int T,
                        std::vector<S>& out) {
  using std::tanh;
  if (theta.size() != arch.param_count())
    throw std::invalid_argument("eval_score: parameter count mismatch");
  std::vector<double> feat = input_features(arch, x, c, t, T);

  std::size_t off = 0;
  std::vector<S> act;  // layer activations; doubles feed the first layer
  const std::vector<double>* plain_in = &feat;
  int in = arch.input_dim();
  for (std::size_t layer = 0; layer <= arch.hidden.size(); ++layer) {
    bool is_out = layer == arch.hidden.size();
    int width = is_out ? arch.d : arch.hidden[layer];
    std::vector<S> next;
    next.reserve(static_cast<std::size_t>(width));
    const S* w = theta.data() + off;
    const S* b = theta.data() + off + static_cast<std::size_t>(width) * in;
    for (int i = 0; i < width; ++i) {
      S acc = b[i];
      const S* row = w + static_cast<std::size_t>(i) * in;
      if (plain_in != nullptr) {
        for (int j = 0; j < in; ++j) acc = acc + row[j] * (*plain_in)[j];
      } else {
        for (int j = 0; j < in; ++j) acc = acc + row[j] * act[j];
      }
      next.push_back(is_out ? clamp(acc, -arch.clamp_bound, arch.clamp_bound)
                            : tanh(acc));
    }
    off += static_cast<std::size_t>(width) * in + width;
    act = std::move(next);
    plain_in = nullptr;
    in = width;
  }
  out = std::move(act);
}

inline std::vector<double> eval_score(const ScoreModelParams& p,
                                      std::span<const double> x, const Condition& c,
                                      int t, int T) {
  std::vector<double> out;
  eval_score_generic<double>(p.arch, p.theta, x, c, t, T, out);
  return out;
}

// Hidden layers: uniform +-1/sqrt(fan_in). Output layer starts at zero so an
// untrained model predicts zero noise everywhere.
inline ScoreModelParams init_score_model(const ScoreNetArch& arch, std::uint64_t seed) {
  arch.validate();
  ScoreModelParams p{arch, std::vector<double>(arch.param_count(), 0.0)};
  CounterRng rng(seed);
  std::size_t off = 0;
  int in = arch.input_dim();
  for (int hsz : arch.hidden) {
    double a = 1.0 / std::sqrt(static_cast<double>(in));
    std::size_t n = static_cast<std::size_t>(hsz) * in + hsz;
    for (std::size_t i = 0; i < n; ++i) p.theta[off + i] = rng.uniform(-a, a);
    off += n;
    in = hsz;
  }
  // output block stays zero
  return p;
}

struct GradResult {
  double value = 0.0;
  std::vector<double> grad;
};

// Loss closure over tape leaves; must use only tape primitives.
using TapeLoss = std::function<ad::Value(ad::Tape&, std::span<const ad::Value>)>;

inline GradResult grad_loss(const ScoreModelParams& p, const TapeLoss& f) {
  thread_local ad::Tape tape;
  tape.clear();
  std::vector<ad::Value> leaves;
  leaves.reserve(p.theta.size());
  for (double v : p.theta) leaves.push_back(tape.leaf(v));
  ad::Value root = f(tape, leaves);
  tape.backward(root);
  GradResult r;
  r.value = root.val();
  r.grad.resize(p.theta.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) r.grad[i] = tape.grad(leaves[i]);
  return r;
}

// Central differences, the reference the tape is checked against in tests.
template <class F>
std::vector<double> finite_diff_gradient(std::vector<double> theta, F&& f, double step) {
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    double keep = theta[i];
    theta[i] = keep + step;
    double up = f(std::span<const double>(theta));
    theta[i] = keep - step;
    double dn = f(std::span<const double>(theta));
    theta[i] = keep;
    g[i] = (up - dn) / (2.0 * step);
  }
  return g;
}

inline std::uint64_t params_digest(const ScoreModelParams& p) {
  std::uint64_t h = kFnvOffset;
  for (double v : p.theta) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int k = 0; k < 8; ++k) {
      h ^= (bits >> (8 * k)) & 0xff;
      h *= kFnvPrime;
    }
  }
  return h;
}

}  // namespace spindiff
