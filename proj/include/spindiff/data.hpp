#pragma once

// Synthetic conditional targets: one diagonal-covariance Gaussian mixture per
// condition label. Ground-truth density is available everywhere, which is
// what makes the evaluation metrics exact rather than estimated.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spindiff/binio.hpp"
#include "spindiff/rng.hpp"
#include "spindiff/score_net.hpp"

namespace spindiff {

struct MixtureComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> var;  // per-axis variances
};

struct TargetSpec {
  int d = 0;
  std::vector<std::vector<MixtureComponent>> per_condition;

  int num_classes() const { return static_cast<int>(per_condition.size()); }

  void validate() const {
    if (d < 1) throw std::invalid_argument("target: d must be >= 1");
    if (per_condition.empty()) throw std::invalid_argument("target: needs >= 1 condition");
    for (const auto& comps : per_condition) {
      if (comps.empty()) throw std::invalid_argument("target: empty mixture");
      double wsum = 0.0;
      for (const MixtureComponent& c : comps) {
        if (!(c.weight > 0.0)) throw std::invalid_argument("target: weights must be > 0");
        if (c.mean.size() != static_cast<std::size_t>(d) ||
            c.var.size() != static_cast<std::size_t>(d))
          throw std::invalid_argument("target: component dimension mismatch");
        for (double v : c.var)
          if (!(v > 0.0)) throw std::invalid_argument("target: variances must be > 0");
        wsum += c.weight;
      }
      if (!(wsum > 0.0)) throw std::invalid_argument("target: weight sum must be > 0");
    }
  }
};

// Four conditions on a ring; each is a two-lobe mixture whose wide second
// lobe leans toward the next condition, so neighbors overlap partially.
inline TargetSpec default_target_spec() {
  TargetSpec spec;
  spec.d = 2;
  const double radius = 1.6;
  const double lean = 50.0 * std::numbers::pi / 180.0;
  for (int c = 0; c < 4; ++c) {
    double a = std::numbers::pi / 2.0 * c;
    MixtureComponent main;
    main.weight = 0.6;
    main.mean = {radius * std::cos(a), radius * std::sin(a)};
    main.var = {0.0625, 0.0625};  // sd 0.25
    MixtureComponent side;
    side.weight = 0.4;
    side.mean = {radius * std::cos(a + lean), radius * std::sin(a + lean)};
    side.var = {0.2025, 0.2025};  // sd 0.45
    spec.per_condition.push_back({main, side});
  }
  return spec;
}

inline std::vector<double> sample_target(const TargetSpec& spec, int label, CounterRng& rng) {
  if (label < 0 || label >= spec.num_classes())
    throw std::invalid_argument("sample_target: label out of range");
  const auto& comps = spec.per_condition[static_cast<std::size_t>(label)];
  std::vector<double> w;
  w.reserve(comps.size());
  for (const auto& c : comps) w.push_back(c.weight);
  const MixtureComponent& comp = comps[rng.categorical(w)];
  std::vector<double> x(static_cast<std::size_t>(spec.d));
  for (int i = 0; i < spec.d; ++i)
    x[i] = comp.mean[i] + std::sqrt(comp.var[i]) * rng.normal();
  return x;
}

inline double target_logpdf(const TargetSpec& spec, int label, std::span<const double> x) {
  if (label < 0 || label >= spec.num_classes())
    throw std::invalid_argument("target_logpdf: label out of range");
  if (x.size() != static_cast<std::size_t>(spec.d))
    throw std::invalid_argument("target_logpdf: dimension mismatch");
  const auto& comps = spec.per_condition[static_cast<std::size_t>(label)];
  double wsum = 0.0;
  for (const auto& c : comps) wsum += c.weight;
  // log sum_j (w_j / wsum) N(x; mean_j, diag var_j), via logsumexp
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> lg(comps.size());
  for (std::size_t j = 0; j < comps.size(); ++j) {
    const MixtureComponent& c = comps[j];
    double q = 0.0;
    for (int i = 0; i < spec.d; ++i) {
      double r = x[i] - c.mean[i];
      q += r * r / c.var[i] + std::log(2.0 * std::numbers::pi * c.var[i]);
    }
    lg[j] = std::log(c.weight / wsum) - 0.5 * q;
    if (lg[j] > best) best = lg[j];
  }
  double acc = 0.0;
  for (double v : lg) acc += std::exp(v - best);
  return best + std::log(acc);
}

struct DatasetRecord {
  int label = 0;
  std::vector<double> x0;
};

struct Dataset {
  TargetSpec spec;
  std::uint64_t seed = 0;
  std::vector<DatasetRecord> records;

  std::size_t size() const { return records.size(); }

  Condition condition_of(std::size_t i) const {
    return Condition(records[i].label, spec.num_classes());
  }
};

// Each record draws from its own RNG stream (stream = record index), so
// generation order or sharding cannot change the contents.
inline Dataset generate_dataset(const TargetSpec& spec, std::size_t n,
                                std::span<const double> condition_weights,
                                std::uint64_t seed) {
  spec.validate();
  if (n == 0) throw std::invalid_argument("generate_dataset: n must be > 0");
  std::vector<double> w(condition_weights.begin(), condition_weights.end());
  if (w.empty()) w.assign(static_cast<std::size_t>(spec.num_classes()), 1.0);
  if (w.size() != static_cast<std::size_t>(spec.num_classes()))
    throw std::invalid_argument("generate_dataset: condition weight count mismatch");
  Dataset ds;
  ds.spec = spec;
  ds.seed = seed;
  ds.records.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(derive_seed(seed, "data.item"), i);
    int label = static_cast<int>(rng.categorical(w));
    ds.records[i] = DatasetRecord{label, sample_target(spec, label, rng)};
  }
  return ds;
}

inline constexpr std::array<std::uint8_t, 8> kDatasetMagic = {'S', 'D', 'I', 'F',
                                                              'F', 'D', 'S', '1'};
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void save_dataset(const std::string& path, const Dataset& ds) {
  BinWriter w(path);
  w.bytes(kDatasetMagic);
  w.u<std::uint32_t>(kDatasetVersion);
  w.u<std::uint32_t>(static_cast<std::uint32_t>(ds.spec.d));
  w.u<std::uint32_t>(static_cast<std::uint32_t>(ds.spec.num_classes()));
  for (const auto& comps : ds.spec.per_condition) {
    w.u<std::uint32_t>(static_cast<std::uint32_t>(comps.size()));
    for (const MixtureComponent& c : comps) {
      w.f64(c.weight);
      w.f64_span(c.mean);
      w.f64_span(c.var);
    }
  }
  w.u<std::uint64_t>(ds.seed);
  w.u<std::uint64_t>(ds.records.size());
  for (const DatasetRecord& r : ds.records) {
    w.u<std::uint32_t>(static_cast<std::uint32_t>(r.label));
    w.f64_span(r.x0);
  }
  w.finish();
}

inline Dataset load_dataset(const std::string& path) {
  BinReader r(path);
  std::array<std::uint8_t, 8> magic{};
  r.bytes(magic);
  if (magic != kDatasetMagic) throw IoError("not a dataset file: " + path);
  std::uint32_t version = r.u<std::uint32_t>();
  if (version != kDatasetVersion)
    throw IoError("unsupported dataset version " + std::to_string(version) + ": " + path);
  Dataset ds;
  ds.spec.d = static_cast<int>(r.u<std::uint32_t>());
  std::uint32_t n_cond = r.u<std::uint32_t>();
  ds.spec.per_condition.resize(n_cond);
  for (auto& comps : ds.spec.per_condition) {
    comps.resize(r.u<std::uint32_t>());
    for (MixtureComponent& c : comps) {
      c.weight = r.f64();
      c.mean.resize(static_cast<std::size_t>(ds.spec.d));
      c.var.resize(static_cast<std::size_t>(ds.spec.d));
      r.f64_span(c.mean);
      r.f64_span(c.var);
    }
  }
  ds.seed = r.u<std::uint64_t>();
  std::uint64_t n = r.u<std::uint64_t>();
  if (n == 0) throw IoError("dataset is empty: " + path);
  ds.records.resize(n);
  for (DatasetRecord& rec : ds.records) {
    rec.label = static_cast<int>(r.u<std::uint32_t>());
    rec.x0.resize(static_cast<std::size_t>(ds.spec.d));
    r.f64_span(rec.x0);
  }
  r.finish();
  ds.spec.validate();
  return ds;
}

}  // namespace spindiff
