#pragma once

// Command-line front end. Six subcommands share one JSON config:
//
//   gen-data    sample the conditional mixture target to dataset.bin
//   train-sft   denoising regression from the dataset
//   train-spin  self-play iterations starting from a checkpoint
//   sample      draw model samples (or whole trajectories) as CSV
//   eval        score checkpoints, write eval.json
//   report      render SVG charts and summary.txt from run artifacts
//
// Every artifact under out_dir is a deterministic function of the config.
// Wall-clock progress goes to stderr only and never into metrics.ndjson.
//
// Exit codes: 0 ok, 1 bad config or arguments, 2 I/O failure, 3 training
// divergence.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spindiff/checkpoint.hpp"
#include "spindiff/config.hpp"
#include "spindiff/data.hpp"
#include "spindiff/diffusion.hpp"
#include "spindiff/eval.hpp"
#include "spindiff/metrics.hpp"
#include "spindiff/report.hpp"
#include "spindiff/schedule.hpp"
#include "spindiff/score_net.hpp"
#include "spindiff/trainer.hpp"

namespace spindiff::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// Guards a run directory against concurrent writers. The lock file stores the
// owner pid; a lock whose pid is gone is stale and silently taken over.
class RunLock {
 public:
  explicit RunLock(const std::string& dir) : path_(dir + "/.lock") {
    fs::create_directories(dir);
    if (fs::exists(path_)) {
      long long pid = 0;
      std::ifstream in(path_);
      in >> pid;
      if (pid > 0 && fs::exists("/proc/" + std::to_string(pid)))
        throw IoError("run directory " + dir + " is locked by running process " +
                      std::to_string(pid) + "; remove " + path_ + " if that is wrong");
      std::fprintf(stderr, "note: taking over stale lock %s\n", path_.c_str());
    }
    std::ofstream out(path_, std::ios::trunc);
    if (!out) throw IoError("cannot create lock file: " + path_);
    out << ::getpid() << "\n";
    owned_ = true;
  }
  ~RunLock() {
    if (owned_) {
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::string path_;
  bool owned_ = false;
};

namespace clidetail {

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string iter_ckpt_name(int iter) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_iter_%03d.bin", iter);
  return buf;
}

inline std::string snapshot_ckpt_name(const std::string& phase, long long cum) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "ckpt_%s_step_%06lld.bin", phase.c_str(), cum);
  return buf;
}

// Highest N among ckpt_iter_NNN.bin files, if any.
inline std::optional<int> latest_iteration_checkpoint(const std::string& dir) {
  std::optional<int> best;
  if (!fs::is_directory(dir)) return best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string name = entry.path().filename().string();
    const std::string pre = "ckpt_iter_", suf = ".bin";
    if (name.size() <= pre.size() + suf.size()) continue;
    if (name.rfind(pre, 0) != 0 || name.substr(name.size() - suf.size()) != suf) continue;
    std::string digits = name.substr(pre.size(), name.size() - pre.size() - suf.size());
    if (digits.empty() ||
        digits.find_first_not_of("0123456789") != std::string::npos)
      continue;
    int v = std::stoi(digits);
    if (!best || v > *best) best = v;
  }
  return best;
}

inline ScoreModelParams load_model_checked(const RunConfig& r, const NoiseSchedule& ns,
                                           const std::string& path) {
  Checkpoint c = load_checkpoint(path);
  if (c.T != ns.T)
    throw std::invalid_argument("checkpoint " + path + " carries T=" + std::to_string(c.T) +
                                " but the config resolves to T=" + std::to_string(ns.T));
  if (!(c.params.arch == r.arch()))
    throw std::invalid_argument("checkpoint " + path +
                                " does not match the configured model architecture");
  return std::move(c.params);
}

inline Dataset ensure_dataset(const RunConfig& r) {
  std::string path = r.resolved_dataset_path();
  if (fs::exists(path)) {
    Dataset ds = load_dataset(path);
    if (ds.spec.d != r.target.d || ds.spec.num_classes() != r.target.num_classes())
      throw std::invalid_argument("dataset " + path + " does not match the configured target");
    return ds;
  }
  Dataset ds = generate_dataset(r.target, r.n_records, r.condition_weights,
                                derive_seed(r.master_seed, "cli.data"));
  fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  save_dataset(path, ds);
  std::fprintf(stderr, "wrote %zu records to %s\n", ds.records.size(), path.c_str());
  return ds;
}

inline json step_row(const StepRecord& rec) {
  return json{{"kind", "step"},          {"phase", rec.phase},
              {"iteration", rec.iteration}, {"step", rec.step},
              {"loss", rec.loss},        {"lr", rec.lr},
              {"grad_norm", rec.grad_norm}, {"theta_norm", rec.theta_norm},
              {"clamp_events", rec.clamp_events}};
}

inline json eval_row(const std::string& checkpoint, int iteration, const EvalReport& rep) {
  return json{{"kind", "eval"},
              {"checkpoint", checkpoint},
              {"iteration", iteration},
              {"n_samples_per_condition", rep.n_samples_per_condition},
              {"energy_distance_mean", rep.energy_distance_mean},
              {"energy_distance_per_condition", rep.energy_distance_per_condition},
              {"mean_loglik", rep.mean_loglik},
              {"mean_loglik_per_condition", rep.mean_loglik_per_condition},
              {"dsm_excess", rep.dsm_excess}};
}

// Periodic stderr progress; keeps wall-clock out of the metrics log.
class Progress {
 public:
  explicit Progress(std::function<long long(const StepRecord&)> total)
      : total_(std::move(total)), start_(std::chrono::steady_clock::now()) {}

  void tick(const StepRecord& rec) {
    long long total = total_(rec);
    long long every = std::max<long long>(1, total / 10);
    if (rec.step % every != 0 && rec.step + 1 != total) return;
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                          start_)
                    .count();
    std::fprintf(stderr, "[%s it=%d] step %lld/%lld loss=%.6g lr=%.3g (%.0f ms)\n",
                 rec.phase.c_str(), rec.iteration, rec.step + 1, total, rec.loss, rec.lr, ms);
  }

 private:
  std::function<long long(const StepRecord&)> total_;
  std::chrono::steady_clock::time_point start_;
};

struct LoadedConfig {
  RunConfig resolved;
};

// Effective config: explicit --config wins; otherwise the echo written by a
// previous training command in out_dir is picked up; otherwise defaults.
inline LoadedConfig effective_config(const std::string& config_path,
                                     const std::string& out_dir_override, bool seed_set,
                                     std::uint64_t seed_value) {
  RunConfig cfg;
  if (!config_path.empty()) {
    cfg = load_config_file(config_path);
  } else {
    std::string dir = out_dir_override.empty() ? cfg.out_dir : out_dir_override;
    if (fs::exists(dir + "/config.json")) cfg = load_config_file(dir + "/config.json");
  }
  if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
  if (seed_set) cfg.master_seed = seed_value;
  if (!out_dir_override.empty() && !cfg.dataset_path.empty()) {
    // dataset echoed under a previous out_dir must not pin the new run there
    fs::path p(cfg.dataset_path);
    if (p.filename() == "dataset.bin" && !fs::exists(cfg.dataset_path)) cfg.dataset_path.clear();
  }
  return LoadedConfig{cfg.resolved()};
}

inline void echo_config(const RunConfig& r) {
  write_text_file(r.out_dir + "/config.json", emit_config(r));
}

}  // namespace clidetail

inline void cmd_gen_data(const RunConfig& r) {
  RunLock lock(r.out_dir);
  clidetail::echo_config(r);
  std::string path = r.resolved_dataset_path();
  if (fs::exists(path)) fs::remove(path);
  Dataset ds = clidetail::ensure_dataset(r);
  std::printf("dataset: %s (%zu records, %d conditions)\n", path.c_str(), ds.records.size(),
              ds.spec.num_classes());
}

inline void cmd_train_sft(const RunConfig& r) {
  RunLock lock(r.out_dir);
  clidetail::echo_config(r);
  NoiseSchedule ns = r.schedule();
  Dataset ds = clidetail::ensure_dataset(r);
  // sft starts the pipeline, so the metrics log starts fresh here
  if (fs::exists(r.out_dir + "/metrics.ndjson")) fs::remove(r.out_dir + "/metrics.ndjson");
  MetricsWriter metrics(r.out_dir + "/metrics.ndjson");

  ScoreModelParams init = init_score_model(r.arch(), derive_seed(r.master_seed, "init.sft"));
  clidetail::Progress progress([steps = r.sft.steps](const StepRecord&) { return steps; });
  auto on_step = [&](const StepRecord& rec) {
    metrics.row(clidetail::step_row(rec));
    progress.tick(rec);
  };
  auto on_snapshot = [&](const std::string& phase, long long cum, int iteration,
                         const ScoreModelParams& p) {
    std::string name = clidetail::snapshot_ckpt_name(phase, cum);
    save_checkpoint(r.out_dir + "/" + name, p, ns.T);
    metrics.row(json{{"kind", "snapshot"},
                     {"phase", phase},
                     {"iteration", iteration},
                     {"cum_step", cum},
                     {"path", name},
                     {"params_digest", hex64(params_digest(p))}});
  };

  TrainResult res = train_sft(std::move(init), ds, ns, r.sft,
                              derive_seed(r.master_seed, "cli.sft"), on_step, on_snapshot);
  save_checkpoint(r.out_dir + "/ckpt_sft.bin", res.params, ns.T);
  metrics.row(json{{"kind", "checkpoint"},
                   {"phase", "sft"},
                   {"path", "ckpt_sft.bin"},
                   {"steps", res.steps_done},
                   {"final_loss", res.final_loss},
                   {"params_digest", hex64(params_digest(res.params))}});
  if (r.eval.per_iteration) {
    EvalReport rep = evaluate(res.params, r.target, ns, r.eval.n_samples,
                              derive_seed(r.master_seed, "cli.iter_eval", 0), r.eval.dsm_probes);
    metrics.row(clidetail::eval_row("ckpt_sft.bin", 0, rep));
  }
  std::printf("sft done: steps=%lld final_loss=%.6g checkpoint=%s\n", res.steps_done,
              res.final_loss, (r.out_dir + "/ckpt_sft.bin").c_str());
}

inline void cmd_train_spin(const RunConfig& r, const std::string& init_path, bool resume) {
  RunLock lock(r.out_dir);
  clidetail::echo_config(r);
  NoiseSchedule ns = r.schedule();
  Dataset ds = clidetail::ensure_dataset(r);
  MetricsWriter metrics(r.out_dir + "/metrics.ndjson");

  std::optional<int> latest = clidetail::latest_iteration_checkpoint(r.out_dir);
  SpinIterationState state;
  if (resume && latest) {
    std::string path = r.out_dir + "/" + clidetail::iter_ckpt_name(*latest);
    state.current = clidetail::load_model_checked(r, ns, path);
    state.opponent = state.current;  // promotion already ran when this file was written
    state.iteration = *latest;
    std::fprintf(stderr, "resuming from %s (iteration %d)\n", path.c_str(), *latest);
  } else {
    if (latest && *latest >= 1)
      throw std::invalid_argument(
          "out_dir already holds iteration checkpoints; pass --resume or use a fresh "
          "directory");
    if (!init_path.empty()) {
      state.current = clidetail::load_model_checked(r, ns, init_path);
    } else if (fs::exists(r.out_dir + "/ckpt_sft.bin")) {
      state.current = clidetail::load_model_checked(r, ns, r.out_dir + "/ckpt_sft.bin");
    } else {
      std::fprintf(stderr, "no starting checkpoint found, initializing fresh weights\n");
      state.current = init_score_model(r.arch(), derive_seed(r.master_seed, "init.spin"));
    }
    state.opponent = state.current;
    state.iteration = 0;
    save_checkpoint(r.out_dir + "/" + clidetail::iter_ckpt_name(0), state.current, ns.T);
  }
  if (state.iteration >= r.spin.iterations) {
    std::printf("nothing to do: %d of %d iterations already complete\n", state.iteration,
                r.spin.iterations);
    return;
  }

  clidetail::Progress progress(
      [spin = r.spin](const StepRecord& rec) { return spin.steps_at(rec.iteration - 1); });
  auto on_step = [&](const StepRecord& rec) {
    metrics.row(clidetail::step_row(rec));
    progress.tick(rec);
  };
  auto on_snapshot = [&](const std::string& phase, long long cum, int iteration,
                         const ScoreModelParams& p) {
    std::string name = clidetail::snapshot_ckpt_name(phase, cum);
    save_checkpoint(r.out_dir + "/" + name, p, ns.T);
    metrics.row(json{{"kind", "snapshot"},
                     {"phase", phase},
                     {"iteration", iteration},
                     {"cum_step", cum},
                     {"path", name},
                     {"params_digest", hex64(params_digest(p))}});
  };
  auto on_iteration = [&](const SpinIterationState& st, const IterationRecord& rec) {
    std::string name = clidetail::iter_ckpt_name(st.iteration);
    save_checkpoint(r.out_dir + "/" + name, st.current, ns.T);
    json row{{"kind", "iteration"},
             {"iteration", rec.iteration},
             {"final_loss", rec.final_loss},
             {"clamp_events", rec.clamp_events},
             {"synth_cache_digest", hex64(rec.synth_cache_digest)},
             {"params_digest", hex64(params_digest(st.current))},
             {"path", name}};
    if (rec.test_fn_gap) row["test_fn_gap"] = *rec.test_fn_gap;
    metrics.row(row);
    if (r.eval.per_iteration) {
      EvalReport rep =
          evaluate(st.current, r.target, ns, r.eval.n_samples,
                   derive_seed(r.master_seed, "cli.iter_eval",
                               static_cast<std::uint64_t>(rec.iteration)),
                   r.eval.dsm_probes);
      metrics.row(clidetail::eval_row(name, rec.iteration, rep));
      std::fprintf(stderr, "[spin it=%d] energy=%.4f loglik=%.4f excess=%.4f\n",
                   rec.iteration, rep.energy_distance_mean, rep.mean_loglik, rep.dsm_excess);
    }
  };

  state = run_spin(std::move(state), ds, ns, r.spin, derive_seed(r.master_seed, "cli.spin"),
                   on_step, on_iteration, on_snapshot);
  std::printf("spin done: iterations=%d checkpoint=%s\n", state.iteration,
              (r.out_dir + "/" + clidetail::iter_ckpt_name(state.iteration)).c_str());
}

inline void cmd_sample(const RunConfig& r, std::string ckpt_path, int n, int condition,
                       bool trajectory, const std::string& out_path) {
  if (n < 1) throw std::invalid_argument("sample: --n must be >= 1");
  NoiseSchedule ns = r.schedule();
  if (ckpt_path.empty()) {
    std::optional<int> latest = clidetail::latest_iteration_checkpoint(r.out_dir);
    if (latest)
      ckpt_path = r.out_dir + "/" + clidetail::iter_ckpt_name(*latest);
    else if (fs::exists(r.out_dir + "/ckpt_sft.bin"))
      ckpt_path = r.out_dir + "/ckpt_sft.bin";
    else
      throw IoError("no checkpoint found in " + r.out_dir + "; pass --checkpoint");
  }
  ScoreModelParams p = clidetail::load_model_checked(r, ns, ckpt_path);

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot open for write: " + out_path);
    out = &file;
  }
  int C = p.arch.num_classes;
  *out << "label";
  if (trajectory) *out << ",t";
  for (int k = 0; k < p.arch.d; ++k) *out << ",x" << k;
  *out << "\n";
  for (int i = 0; i < n; ++i) {
    int label = condition >= 0 ? condition : i % C;
    Condition cond(label, C);
    CounterRng rng(derive_seed(r.master_seed, "cli.sample", static_cast<std::uint64_t>(i)));
    Trajectory traj = reverse_sample(p, ns, cond, rng);
    if (trajectory) {
      for (int t = ns.T; t >= 0; --t) {
        *out << label << "," << t;
        for (double v : traj.x[static_cast<std::size_t>(t)]) *out << "," << clidetail::g17(v);
        *out << "\n";
      }
    } else {
      *out << label;
      for (double v : traj.x[0]) *out << "," << clidetail::g17(v);
      *out << "\n";
    }
  }
  out->flush();
  if (!*out) throw IoError("write failed while emitting samples");
}

inline void cmd_eval(const RunConfig& r, std::vector<std::string> ckpts) {
  RunLock lock(r.out_dir);
  NoiseSchedule ns = r.schedule();
  bool discovered = ckpts.empty();
  if (discovered) {
    if (fs::exists(r.out_dir + "/ckpt_sft.bin")) ckpts.push_back("ckpt_sft.bin");
    std::optional<int> latest = clidetail::latest_iteration_checkpoint(r.out_dir);
    if (latest)
      for (int i = 0; i <= *latest; ++i) {
        std::string name = clidetail::iter_ckpt_name(i);
        if (fs::exists(r.out_dir + "/" + name)) ckpts.push_back(name);
      }
    if (ckpts.empty()) throw IoError("no checkpoints found in " + r.out_dir);
  }
  auto full_path = [&](const std::string& c) {
    return discovered ? r.out_dir + "/" + c : c;
  };

  std::size_t base_idx = 0;
  for (std::size_t i = 0; i < ckpts.size(); ++i)
    if (fs::path(ckpts[i]).filename() == "ckpt_iter_000.bin") base_idx = i;
  ScoreModelParams base = clidetail::load_model_checked(r, ns, full_path(ckpts[base_idx]));

  json out;
  out["base"] = ckpts[base_idx];
  out["n_samples_per_condition"] = r.eval.n_samples;
  out["n_prompts"] = r.eval.n_prompts;
  out["best_of"] = r.eval.best_of;
  out["checkpoints"] = json::array();
  std::printf("%-28s %12s %12s %12s %12s\n", "checkpoint", "energy", "loglik", "excess",
              "win_vs_base");
  for (std::size_t i = 0; i < ckpts.size(); ++i) {
    ScoreModelParams p = clidetail::load_model_checked(r, ns, full_path(ckpts[i]));
    // one shared stream: scores are paired across checkpoints, so identical
    // weights score identically and differences reflect the models alone
    EvalReport rep = evaluate(p, r.target, ns, r.eval.n_samples,
                              derive_seed(r.master_seed, "cli.eval"), r.eval.dsm_probes);
    double wr = win_rate(p, base, r.target, ns, r.eval.n_prompts,
                         derive_seed(r.master_seed, "cli.winrate"), r.eval.best_of);
    json entry{{"path", ckpts[i]},
               {"params_digest", hex64(params_digest(p))},
               {"n_samples_per_condition", rep.n_samples_per_condition},
               {"energy_distance_mean", rep.energy_distance_mean},
               {"energy_distance_per_condition", rep.energy_distance_per_condition},
               {"mean_loglik", rep.mean_loglik},
               {"mean_loglik_per_condition", rep.mean_loglik_per_condition},
               {"dsm_excess", rep.dsm_excess},
               {"win_rate_vs_base", wr}};
    out["checkpoints"].push_back(entry);
    std::printf("%-28s %12.5f %12.5f %12.5f %12.4f\n",
                fs::path(ckpts[i]).filename().string().c_str(), rep.energy_distance_mean,
                rep.mean_loglik, rep.dsm_excess, wr);
  }
  write_text_file(r.out_dir + "/eval.json", out.dump(2) + "\n");
  std::printf("wrote %s\n", (r.out_dir + "/eval.json").c_str());
}

inline void cmd_report(const RunConfig& r) {
  RunLock lock(r.out_dir);
  ReportFiles files = write_report(r.out_dir);
  for (const std::string& f : files.written) std::printf("wrote %s\n", f.c_str());
}

inline int run_cli(int argc, char** argv) {
  CLI::App app{"desk-scale lab for self-play fine-tuning of denoising diffusion samplers"};
  app.require_subcommand(1);

  struct Common {
    std::string config;
    std::string out_dir;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
  };
  auto add_common = [](CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "JSON config file");
    sub->add_option("--out-dir", c.out_dir, "run directory (overrides config)");
    c.seed_opt = sub->add_option("--seed", c.seed, "master seed (overrides config)");
  };
  auto resolve = [](const Common& c) {
    return clidetail::effective_config(c.config, c.out_dir, c.seed_opt->count() > 0, c.seed)
        .resolved;
  };

  Common gd;
  CLI::App* gen = app.add_subcommand("gen-data", "sample the target mixture into dataset.bin");
  add_common(gen, gd);
  gen->callback([&] { cmd_gen_data(resolve(gd)); });

  Common sf;
  CLI::App* sft = app.add_subcommand("train-sft", "train the denoiser on the dataset");
  add_common(sft, sf);
  sft->callback([&] { cmd_train_sft(resolve(sf)); });

  Common sp;
  std::string init_path;
  bool resume = false;
  CLI::App* spin = app.add_subcommand("train-spin", "run self-play iterations");
  add_common(spin, sp);
  spin->add_option("--init", init_path, "starting checkpoint (default: out_dir/ckpt_sft.bin)");
  spin->add_flag("--resume", resume, "continue from the latest iteration checkpoint");
  spin->callback([&] { cmd_train_spin(resolve(sp), init_path, resume); });

  Common sm;
  std::string sample_ckpt, sample_out;
  int sample_n = 16, sample_cond = -1;
  bool sample_traj = false;
  CLI::App* sample = app.add_subcommand("sample", "draw samples from a checkpoint as CSV");
  add_common(sample, sm);
  sample->add_option("--checkpoint", sample_ckpt, "checkpoint (default: latest in out_dir)");
  sample->add_option("--n", sample_n, "number of samples");
  sample->add_option("--condition", sample_cond, "fixed condition label (default: cycle)");
  sample->add_flag("--trajectory", sample_traj, "emit every intermediate state");
  sample->add_option("--out", sample_out, "output file (default: stdout)");
  sample->callback([&] {
    cmd_sample(resolve(sm), sample_ckpt, sample_n, sample_cond, sample_traj, sample_out);
  });

  Common ev;
  std::vector<std::string> eval_ckpts;
  CLI::App* eval = app.add_subcommand("eval", "score checkpoints and write eval.json");
  add_common(eval, ev);
  eval->add_option("--checkpoint", eval_ckpts,
                   "checkpoint path, repeatable (default: discover in out_dir)");
  eval->callback([&] { cmd_eval(resolve(ev), eval_ckpts); });

  Common rp;
  CLI::App* report = app.add_subcommand("report", "render charts and summary from a run");
  add_common(report, rp);
  report->callback([&] { cmd_report(resolve(rp)); });

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: training diverged: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace spindiff::cli
