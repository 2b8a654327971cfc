#pragma once

// Run configuration: one JSON document drives every command. Parsing is
// strict (unknown keys are errors, so typos cannot silently fall back to
// defaults); emitting writes every field including expanded defaults and the
// fully resolved schedule arrays, so an emitted config replays a run without
// re-deriving anything. parse(emit(cfg)) is the identity.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spindiff/binio.hpp"
#include "spindiff/data.hpp"
#include "spindiff/losses.hpp"
#include "spindiff/schedule.hpp"
#include "spindiff/score_net.hpp"
#include "spindiff/trainer.hpp"

namespace spindiff {

inline constexpr int kConfigSchemaVersion = 1;

struct EvalConfig {
  int n_samples = 512;       // per condition
  int n_prompts = 200;
  int best_of = 1;
  int dsm_probes = 2048;
  int snapshot_samples = 128;  // cheap eval during training snapshots
  bool per_iteration = true;   // evaluate after every self-play iteration
};

struct RunConfig {
  // run
  std::string out_dir = "runs/default";
  std::uint64_t master_seed = 1;
  // data
  std::string dataset_path;  // empty: <out_dir>/dataset.bin
  std::uint64_t n_records = 4096;
  std::vector<double> condition_weights;  // empty: uniform
  TargetSpec target = default_target_spec();
  // schedule
  int T = 20;
  ScheduleShape shape = ScheduleShape::kCosine;
  double eta = 1.0;
  std::vector<double> alpha;  // resolved echoes; authoritative when present
  std::vector<double> sigma;
  std::vector<double> gamma;
  // model
  std::vector<int> hidden = {64, 64};
  int time_dim = 8;
  double clamp_bound = 10.0;
  // training
  SftConfig sft;
  SpinRunConfig spin;
  EvalConfig eval;

  std::string resolved_dataset_path() const {
    return dataset_path.empty() ? out_dir + "/dataset.bin" : dataset_path;
  }

  ScoreNetArch arch() const {
    ScoreNetArch a;
    a.d = target.d;
    a.num_classes = target.num_classes();
    a.time_dim = time_dim;
    a.hidden = hidden;
    a.clamp_bound = clamp_bound;
    return a;
  }

  // Schedule from explicit arrays when present, else derived from (T, shape,
  // eta); gamma override applies either way.
  NoiseSchedule schedule() const {
    NoiseSchedule ns;
    if (!alpha.empty()) {
      std::vector<double> sg = sigma;
      std::vector<double> gm = gamma;
      if (sg.empty()) {
        ns = schedule_from_alphas(alpha, eta);
        sg = ns.sigma;
      }
      if (gm.empty()) gm.assign(alpha.size(), 1.0);
      return schedule_from_arrays(alpha, sg, gm);
    }
    ns = make_schedule(T, shape, eta);
    if (!gamma.empty()) {
      if (gamma.size() != ns.gamma.size())
        throw std::invalid_argument("config: gamma must have T+1 entries");
      return schedule_from_arrays(ns.alpha, ns.sigma, gamma);
    }
    return ns;
  }

  // Fills in the expanded-defaults echo: schedule arrays and dataset path.
  RunConfig resolved() const {
    RunConfig r = *this;
    NoiseSchedule ns = schedule();
    r.T = ns.T;
    r.alpha = ns.alpha;
    r.sigma = ns.sigma;
    r.gamma = ns.gamma;
    r.dataset_path = resolved_dataset_path();
    if (r.condition_weights.empty())
      r.condition_weights.assign(static_cast<std::size_t>(target.num_classes()),
                                 1.0 / target.num_classes());
    return r;
  }
};

namespace cfgdetail {

using nlohmann::json;

inline void check_keys(const json& o, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!o.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  for (const auto& kv : o.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (kv.key() == k) ok = true;
    if (!ok)
      throw std::invalid_argument("config: unknown key '" + kv.key() + "' in " + where);
  }
}

template <class T>
void opt_get(const json& o, const char* k, T& out, const std::string& where) {
  if (!o.contains(k)) return;
  try {
    out = o.at(k).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument("config: bad value for " + where + "." + k + ": " + e.what());
  }
}

inline json target_to_json(const TargetSpec& spec) {
  json per = json::array();
  for (const auto& comps : spec.per_condition) {
    json arr = json::array();
    for (const MixtureComponent& c : comps)
      arr.push_back(json{{"mean", c.mean}, {"var", c.var}, {"weight", c.weight}});
    per.push_back(arr);
  }
  return json{{"d", spec.d}, {"per_condition", per}};
}

inline TargetSpec target_from_json(const json& j) {
  check_keys(j, {"d", "per_condition"}, "data.target");
  TargetSpec spec;
  opt_get(j, "d", spec.d, "data.target");
  if (j.contains("per_condition")) {
    spec.per_condition.clear();
    for (const auto& arr : j.at("per_condition")) {
      std::vector<MixtureComponent> comps;
      for (const auto& cj : arr) {
        check_keys(cj, {"weight", "mean", "var"}, "data.target.per_condition[][]");
        MixtureComponent c;
        opt_get(cj, "weight", c.weight, "component");
        opt_get(cj, "mean", c.mean, "component");
        opt_get(cj, "var", c.var, "component");
        comps.push_back(std::move(c));
      }
      spec.per_condition.push_back(std::move(comps));
    }
  }
  spec.validate();
  return spec;
}

}  // namespace cfgdetail

inline std::string emit_config(const RunConfig& c) {
  using nlohmann::json;
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["run"] = {{"out_dir", c.out_dir}, {"master_seed", c.master_seed}};
  j["data"] = {{"dataset_path", c.dataset_path},
               {"n_records", c.n_records},
               {"condition_weights", c.condition_weights},
               {"target", cfgdetail::target_to_json(c.target)}};
  j["schedule"] = {{"T", c.T},
                   {"shape", to_string(c.shape)},
                   {"eta", c.eta},
                   {"alpha", c.alpha},
                   {"sigma", c.sigma},
                   {"gamma", c.gamma}};
  j["model"] = {{"hidden", c.hidden},
                {"time_dim", c.time_dim},
                {"clamp_bound", c.clamp_bound}};
  j["sft"] = {{"steps", c.sft.steps},
              {"batch_size", c.sft.batch_size},
              {"lr", c.sft.opt.lr},
              {"warmup_steps", c.sft.opt.warmup_steps},
              {"weight_decay", c.sft.opt.weight_decay},
              {"snapshot_every", c.sft.snapshot_every}};
  j["spin"] = {{"iterations", c.spin.iterations},
               {"steps", c.spin.steps},
               {"beta_policy", to_string(c.spin.beta_policy)},
               {"beta_scale", c.spin.beta_scale},
               {"ell", to_string(c.spin.ell)},
               {"variant", to_string(c.spin.variant)},
               {"synthetic_pairs",
                c.spin.synthetic_pairs == SyntheticPairsMode::kForwardized ? "forwardized"
                                                                           : "backward"},
               {"eps_form", c.spin.eps_form == EpsForm::kFourTerm ? "4-term" : "3-term"},
               {"shared_t", c.spin.shared_t},
               {"shuffle_pairs", c.spin.shuffle_pairs},
               {"synthetic_fraction", c.spin.synthetic_fraction},
               {"lambda", c.spin.lambda},
               {"log_test_function", c.spin.log_test_function},
               {"batch_size", c.spin.batch_size},
               {"lr", c.spin.opt.lr},
               {"warmup_steps", c.spin.opt.warmup_steps},
               {"weight_decay", c.spin.opt.weight_decay},
               {"snapshot_every", c.spin.snapshot_every}};
  j["eval"] = {{"n_samples", c.eval.n_samples},
               {"n_prompts", c.eval.n_prompts},
               {"best_of", c.eval.best_of},
               {"dsm_probes", c.eval.dsm_probes},
               {"snapshot_samples", c.eval.snapshot_samples},
               {"per_iteration", c.eval.per_iteration}};
  return j.dump(2) + "\n";
}

inline RunConfig parse_config(const std::string& text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  cfgdetail::check_keys(
      j, {"schema_version", "run", "data", "schedule", "model", "sft", "spin", "eval"},
      "top level");
  int version = 0;
  cfgdetail::opt_get(j, "schema_version", version, "top level");
  if (version != kConfigSchemaVersion)
    throw std::invalid_argument("config: unsupported schema_version " +
                                std::to_string(version));
  RunConfig c;
  if (j.contains("run")) {
    const json& o = j.at("run");
    cfgdetail::check_keys(o, {"out_dir", "master_seed"}, "run");
    cfgdetail::opt_get(o, "out_dir", c.out_dir, "run");
    cfgdetail::opt_get(o, "master_seed", c.master_seed, "run");
  }
  if (j.contains("data")) {
    const json& o = j.at("data");
    cfgdetail::check_keys(o, {"dataset_path", "n_records", "condition_weights", "target"},
                          "data");
    cfgdetail::opt_get(o, "dataset_path", c.dataset_path, "data");
    cfgdetail::opt_get(o, "n_records", c.n_records, "data");
    cfgdetail::opt_get(o, "condition_weights", c.condition_weights, "data");
    if (o.contains("target")) c.target = cfgdetail::target_from_json(o.at("target"));
  }
  if (j.contains("schedule")) {
    const json& o = j.at("schedule");
    cfgdetail::check_keys(o, {"T", "shape", "eta", "alpha", "sigma", "gamma"}, "schedule");
    cfgdetail::opt_get(o, "T", c.T, "schedule");
    std::string shape = to_string(c.shape);
    cfgdetail::opt_get(o, "shape", shape, "schedule");
    c.shape = schedule_shape_from_string(shape);
    cfgdetail::opt_get(o, "eta", c.eta, "schedule");
    cfgdetail::opt_get(o, "alpha", c.alpha, "schedule");
    cfgdetail::opt_get(o, "sigma", c.sigma, "schedule");
    cfgdetail::opt_get(o, "gamma", c.gamma, "schedule");
  }
  if (j.contains("model")) {
    const json& o = j.at("model");
    cfgdetail::check_keys(o, {"hidden", "time_dim", "clamp_bound"}, "model");
    cfgdetail::opt_get(o, "hidden", c.hidden, "model");
    cfgdetail::opt_get(o, "time_dim", c.time_dim, "model");
    cfgdetail::opt_get(o, "clamp_bound", c.clamp_bound, "model");
  }
  if (j.contains("sft")) {
    const json& o = j.at("sft");
    cfgdetail::check_keys(
        o, {"steps", "batch_size", "lr", "warmup_steps", "weight_decay", "snapshot_every"},
        "sft");
    cfgdetail::opt_get(o, "steps", c.sft.steps, "sft");
    cfgdetail::opt_get(o, "batch_size", c.sft.batch_size, "sft");
    cfgdetail::opt_get(o, "lr", c.sft.opt.lr, "sft");
    cfgdetail::opt_get(o, "warmup_steps", c.sft.opt.warmup_steps, "sft");
    cfgdetail::opt_get(o, "weight_decay", c.sft.opt.weight_decay, "sft");
    cfgdetail::opt_get(o, "snapshot_every", c.sft.snapshot_every, "sft");
  }
  if (j.contains("spin")) {
    const json& o = j.at("spin");
    cfgdetail::check_keys(o,
                          {"iterations", "steps", "beta_policy", "beta_scale", "ell",
                           "variant", "synthetic_pairs", "eps_form", "shared_t",
                           "shuffle_pairs", "synthetic_fraction", "lambda",
                           "log_test_function", "batch_size", "lr", "warmup_steps",
                           "weight_decay", "snapshot_every"},
                          "spin");
    cfgdetail::opt_get(o, "iterations", c.spin.iterations, "spin");
    cfgdetail::opt_get(o, "steps", c.spin.steps, "spin");
    std::string policy = to_string(c.spin.beta_policy);
    cfgdetail::opt_get(o, "beta_policy", policy, "spin");
    c.spin.beta_policy = beta_policy_from_string(policy);
    cfgdetail::opt_get(o, "beta_scale", c.spin.beta_scale, "spin");
    std::string ell = to_string(c.spin.ell);
    cfgdetail::opt_get(o, "ell", ell, "spin");
    c.spin.ell = ell_kind_from_string(ell);
    std::string variant = to_string(c.spin.variant);
    cfgdetail::opt_get(o, "variant", variant, "spin");
    c.spin.variant = spin_variant_from_string(variant);
    std::string pairs =
        c.spin.synthetic_pairs == SyntheticPairsMode::kForwardized ? "forwardized" : "backward";
    cfgdetail::opt_get(o, "synthetic_pairs", pairs, "spin");
    if (pairs == "forwardized")
      c.spin.synthetic_pairs = SyntheticPairsMode::kForwardized;
    else if (pairs == "backward")
      c.spin.synthetic_pairs = SyntheticPairsMode::kBackward;
    else
      throw std::invalid_argument("config: unknown synthetic_pairs mode: " + pairs);
    std::string form = c.spin.eps_form == EpsForm::kFourTerm ? "4-term" : "3-term";
    cfgdetail::opt_get(o, "eps_form", form, "spin");
    if (form == "4-term")
      c.spin.eps_form = EpsForm::kFourTerm;
    else if (form == "3-term")
      c.spin.eps_form = EpsForm::kThreeTerm;
    else
      throw std::invalid_argument("config: unknown eps_form: " + form);
    cfgdetail::opt_get(o, "shared_t", c.spin.shared_t, "spin");
    cfgdetail::opt_get(o, "shuffle_pairs", c.spin.shuffle_pairs, "spin");
    cfgdetail::opt_get(o, "synthetic_fraction", c.spin.synthetic_fraction, "spin");
    cfgdetail::opt_get(o, "lambda", c.spin.lambda, "spin");
    cfgdetail::opt_get(o, "log_test_function", c.spin.log_test_function, "spin");
    cfgdetail::opt_get(o, "batch_size", c.spin.batch_size, "spin");
    cfgdetail::opt_get(o, "lr", c.spin.opt.lr, "spin");
    cfgdetail::opt_get(o, "warmup_steps", c.spin.opt.warmup_steps, "spin");
    cfgdetail::opt_get(o, "weight_decay", c.spin.opt.weight_decay, "spin");
    cfgdetail::opt_get(o, "snapshot_every", c.spin.snapshot_every, "spin");
  }
  if (j.contains("eval")) {
    const json& o = j.at("eval");
    cfgdetail::check_keys(o,
                          {"n_samples", "n_prompts", "best_of", "dsm_probes",
                           "snapshot_samples", "per_iteration"},
                          "eval");
    cfgdetail::opt_get(o, "n_samples", c.eval.n_samples, "eval");
    cfgdetail::opt_get(o, "n_prompts", c.eval.n_prompts, "eval");
    cfgdetail::opt_get(o, "best_of", c.eval.best_of, "eval");
    cfgdetail::opt_get(o, "dsm_probes", c.eval.dsm_probes, "eval");
    cfgdetail::opt_get(o, "snapshot_samples", c.eval.snapshot_samples, "eval");
    cfgdetail::opt_get(o, "per_iteration", c.eval.per_iteration, "eval");
  }
  return c;
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for write: " + path);
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace spindiff
