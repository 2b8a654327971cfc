#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <spindiff/eval.hpp>
#include <spindiff/trainer.hpp>

using namespace spindiff;
using Catch::Matchers::WithinAbs;

namespace {

TargetSpec gauss1d_target() {
  TargetSpec spec;
  spec.d = 1;
  MixtureComponent c;
  c.weight = 1.0;
  c.mean = {1.5};
  c.var = {0.25};
  spec.per_condition = {{c}};
  return spec;
}

ScoreNetArch arch1d() {
  ScoreNetArch a;
  a.d = 1;
  a.num_classes = 1;
  a.time_dim = 4;
  a.hidden = {16, 16};
  return a;
}

ScoreNetArch arch2d() {
  ScoreNetArch a;
  a.d = 2;
  a.num_classes = 4;
  a.time_dim = 4;
  a.hidden = {8, 8};
  return a;
}

std::vector<DsmItem> held_out_items(const TargetSpec& spec, const NoiseSchedule& ns, int n,
                                    std::uint64_t seed) {
  std::vector<DsmItem> items;
  items.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    CounterRng rng(derive_seed(seed, "held"), static_cast<std::uint64_t>(i));
    int label = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(spec.num_classes())));
    DsmItem it;
    it.cond = Condition(label, spec.num_classes());
    it.x0 = sample_target(spec, label, rng);
    it.eps = rng.normal_vec(static_cast<std::size_t>(spec.d));
    it.t = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(ns.T)));
    items.push_back(std::move(it));
  }
  return items;
}

}  // namespace

TEST_CASE("learning rate ramps linearly, then decays linearly to zero") {
  OptimizerConfig cfg;
  cfg.lr = 1.0;
  cfg.warmup_steps = 4;
  CHECK(lr_at(cfg, 0, 20) == 0.25);
  CHECK(lr_at(cfg, 1, 20) == 0.5);
  CHECK(lr_at(cfg, 3, 20) == 1.0);
  CHECK(lr_at(cfg, 4, 20) == 1.0);
  CHECK(lr_at(cfg, 12, 20) == 0.5);
  CHECK_THAT(lr_at(cfg, 19, 20), WithinAbs(0.0625, 1e-15));
  CHECK(lr_at(cfg, 5, 0) == 1.0);  // unknown horizon: constant
  // horizon shorter than the warmup: still reaches full rate
  OptimizerConfig tight = cfg;
  tight.warmup_steps = 100;
  CHECK(lr_at(tight, 2, 3) == 1.0);
}

TEST_CASE("optimizer update matches an independent reimplementation") {
  OptimizerConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.01;
  const std::size_t n = 10;
  std::vector<double> theta(n), shadow(n), m(n, 0.0), v(n, 0.0);
  CounterRng rng(606);
  for (std::size_t i = 0; i < n; ++i) theta[i] = shadow[i] = rng.normal();

  OptimizerState st(n);
  for (int step = 1; step <= 20; ++step) {
    std::vector<double> grad(n);
    for (auto& g : grad) g = rng.normal();
    adam_step(st, cfg, cfg.lr, theta, grad);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grad[i];
      v[i] = 0.999 * v[i] + 0.001 * grad[i] * grad[i];
      double mh = m[i] / (1.0 - std::pow(0.9, step));
      double vh = v[i] / (1.0 - std::pow(0.999, step));
      shadow[i] -= cfg.lr * (mh / (std::sqrt(vh) + 1e-8) + 0.01 * shadow[i]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) CHECK_THAT(theta[i], WithinAbs(shadow[i], 1e-14));

  OptimizerState wrong(3);
  std::vector<double> g4(4, 0.0), t4(4, 0.0);
  CHECK_THROWS_AS(adam_step(wrong, cfg, 0.1, t4, g4), std::invalid_argument);
}

TEST_CASE("divergence guard: non-finite aborts at once, sustained blowup after 100 steps") {
  DivergenceGuard g1;
  CHECK_THROWS_AS(g1.check(std::nan(""), "here"), DivergenceError);
  DivergenceGuard g2;
  g2.check(1.0, "x");
  CHECK_THROWS_AS(g2.check(-std::numeric_limits<double>::infinity(), "x"), DivergenceError);

  DivergenceGuard g3;
  g3.check(1.0, "x");
  for (int i = 0; i < 99; ++i) g3.check(11.0, "x");
  g3.check(2.0, "x");  // dip resets the streak
  for (int i = 0; i < 99; ++i) g3.check(11.0, "x");
  CHECK_THROWS_AS(g3.check(11.0, "x"), DivergenceError);
}

TEST_CASE("zero training steps return the input parameters untouched") {
  Dataset ds = generate_dataset(default_target_spec(), 32, {}, 4);
  NoiseSchedule ns = make_schedule(5, ScheduleShape::kCosine, 1.0);
  ScoreModelParams p = init_score_model(arch2d(), 77);
  SftConfig cfg;
  cfg.steps = 0;
  TrainResult r = train_sft(p, ds, ns, cfg, 1);
  CHECK(r.steps_done == 0);
  CHECK(params_digest(r.params) == params_digest(p));
}

TEST_CASE("supervised training is deterministic in (params, data, seed)") {
  Dataset ds = generate_dataset(default_target_spec(), 64, {}, 4);
  NoiseSchedule ns = make_schedule(5, ScheduleShape::kCosine, 1.0);
  ScoreModelParams p = init_score_model(arch2d(), 77);
  SftConfig cfg;
  cfg.steps = 20;
  cfg.batch_size = 8;
  cfg.opt.warmup_steps = 5;

  std::vector<StepRecord> log1, log2;
  TrainResult a = train_sft(p, ds, ns, cfg, 12, [&](const StepRecord& r) { log1.push_back(r); });
  TrainResult b = train_sft(p, ds, ns, cfg, 12, [&](const StepRecord& r) { log2.push_back(r); });
  CHECK(params_digest(a.params) == params_digest(b.params));
  REQUIRE(log1.size() == 20u);
  REQUIRE(log2.size() == 20u);
  for (std::size_t i = 0; i < log1.size(); ++i) {
    CHECK(log1[i].loss == log2[i].loss);
    CHECK(log1[i].grad_norm == log2[i].grad_norm);
    CHECK(log1[i].step == static_cast<long long>(i));
    CHECK(log1[i].phase == "sft");
    CHECK(std::isfinite(log1[i].loss));
    CHECK(log1[i].lr > 0.0);
  }
  TrainResult c = train_sft(p, ds, ns, cfg, 13);
  CHECK(params_digest(c.params) != params_digest(a.params));
}

TEST_CASE("denoising training on a single Gaussian approaches the analytic floor") {
  TargetSpec spec = gauss1d_target();
  NoiseSchedule ns = make_schedule(5, ScheduleShape::kCosine, 1.0);
  Dataset ds = generate_dataset(spec, 512, {}, 21);
  ScoreModelParams p = init_score_model(arch1d(), 3);

  // optimal predictor residual: per step, alpha s0^2 / (alpha s0^2 + 1 - alpha)
  const double s0sq = 0.25;
  double floor = 0.0;
  for (int t = 1; t <= ns.T; ++t)
    floor += ns.alpha[t] * s0sq / (ns.alpha[t] * s0sq + 1.0 - ns.alpha[t]) / ns.T;

  auto held = held_out_items(spec, ns, 2000, 99);
  double before = dsm_loss(p, held, ns);
  CHECK_THAT(before, WithinAbs(1.0, 0.15));  // zero predictor pays E||eps||^2 = d

  SftConfig cfg;
  cfg.steps = 600;
  cfg.batch_size = 32;
  cfg.opt.lr = 5e-3;
  cfg.opt.warmup_steps = 50;
  TrainResult r = train_sft(p, ds, ns, cfg, 7);
  double after = dsm_loss(r.params, held, ns);
  CHECK(after < before * 0.6);
  CHECK(after < floor + 0.25);
  CHECK(after > floor - 0.05);  // cannot beat the conditional-mean bound
}

TEST_CASE("sustained blowup in training raises the divergence error") {
  Dataset ds = generate_dataset(default_target_spec(), 32, {}, 4);
  NoiseSchedule ns = make_schedule(4, ScheduleShape::kCosine, 1.0);
  ScoreModelParams p = init_score_model(arch2d(), 1);
  SftConfig cfg;
  cfg.steps = 300;
  cfg.batch_size = 4;
  cfg.opt.lr = 50.0;  // output clamp bounds the loss, so the 10x rule must fire
  cfg.opt.warmup_steps = 0;
  CHECK_THROWS_AS(train_sft(p, ds, ns, cfg, 2), DivergenceError);
}

TEST_CASE("self-play iteration freezes the opponent, then promotes the trained model") {
  Dataset ds = generate_dataset(default_target_spec(), 48, {}, 11);
  NoiseSchedule ns = make_schedule(4, ScheduleShape::kCosine, 1.0);
  ScoreModelParams base = init_score_model(arch2d(), 5);

  SpinRunConfig cfg;
  cfg.iterations = 1;
  cfg.steps = {5};
  cfg.beta_scale = {0.5};
  cfg.batch_size = 4;
  cfg.opt.warmup_steps = 2;

  SpinIterationState st;
  st.current = base;
  st.opponent = base;
  IterationRecord rec;
  std::vector<StepRecord> steps;
  SpinIterationState next = spin_iteration(std::move(st), ds, ns, cfg, 31,
                                           [&](const StepRecord& r) { steps.push_back(r); }, &rec);

  CHECK(next.iteration == 1);
  CHECK(params_digest(next.opponent) == params_digest(next.current));  // promotion
  CHECK(params_digest(next.current) != params_digest(base));           // training moved
  CHECK(rec.iteration == 1);
  CHECK(rec.synth_cache_digest != 0);
  CHECK(std::isfinite(rec.final_loss));
  CHECK_FALSE(rec.test_fn_gap.has_value());
  REQUIRE(steps.size() == 5u);
  CHECK(steps[0].phase == "spin");
  CHECK(steps[0].iteration == 1);
}

TEST_CASE("self-play run walks the iteration ladder deterministically") {
  Dataset ds = generate_dataset(default_target_spec(), 48, {}, 11);
  NoiseSchedule ns = make_schedule(4, ScheduleShape::kCosine, 1.0);
  ScoreModelParams base = init_score_model(arch2d(), 5);

  SpinRunConfig cfg;
  cfg.iterations = 2;
  cfg.steps = {4, 2};
  cfg.beta_scale = {0.5};
  cfg.batch_size = 4;
  cfg.opt.warmup_steps = 1;
  cfg.log_test_function = true;

  std::vector<IterationRecord> recs;
  SpinIterationState st;
  st.current = base;
  st.opponent = base;
  SpinIterationState done = run_spin(st, ds, ns, cfg, 17, {},
                                     [&](const SpinIterationState&, const IterationRecord& r) {
                                       recs.push_back(r);
                                     });
  CHECK(done.iteration == 2);
  REQUIRE(recs.size() == 2u);
  CHECK(recs[0].iteration == 1);
  CHECK(recs[1].iteration == 2);
  CHECK(recs[0].synth_cache_digest != recs[1].synth_cache_digest);
  CHECK(recs[0].test_fn_gap.has_value());
  CHECK(recs[1].test_fn_gap.has_value());

  SpinIterationState rerun = run_spin(st, ds, ns, cfg, 17);
  CHECK(params_digest(rerun.current) == params_digest(done.current));

  // resuming from a completed first iteration reproduces the two-shot result
  SpinRunConfig one = cfg;
  one.iterations = 1;
  SpinIterationState mid = run_spin(st, ds, ns, one, 17);
  CHECK(mid.iteration == 1);
  SpinIterationState finished = run_spin(mid, ds, ns, cfg, 17);
  CHECK(params_digest(finished.current) == params_digest(done.current));
}

TEST_CASE("every self-play variant trains and promotes") {
  Dataset ds = generate_dataset(default_target_spec(), 24, {}, 3);
  NoiseSchedule ns = make_schedule(4, ScheduleShape::kCosine, 1.0);
  ScoreModelParams base = init_score_model(arch2d(), 9);

  for (SpinVariant variant :
       {SpinVariant::kApproxEps, SpinVariant::kApproxMu, SpinVariant::kExact}) {
    for (SyntheticPairsMode mode :
         {SyntheticPairsMode::kForwardized, SyntheticPairsMode::kBackward}) {
      SpinRunConfig cfg;
      cfg.iterations = 1;
      cfg.steps = {2};
      cfg.beta_scale = {0.5};
      cfg.batch_size = 2;
      cfg.variant = variant;
      cfg.synthetic_pairs = mode;
      SpinIterationState st;
      st.current = base;
      st.opponent = base;
      IterationRecord rec;
      SpinIterationState next = spin_iteration(std::move(st), ds, ns, cfg, 77, {}, &rec);
      CHECK(next.iteration == 1);
      CHECK(std::isfinite(rec.final_loss));
    }
  }

  // shuffled pairing and a partial cache also run
  SpinRunConfig cfg;
  cfg.iterations = 1;
  cfg.steps = {2};
  cfg.beta_scale = {0.5};
  cfg.batch_size = 2;
  cfg.shuffle_pairs = true;
  cfg.synthetic_fraction = 0.25;
  SpinIterationState st;
  st.current = base;
  st.opponent = base;
  IterationRecord rec;
  spin_iteration(std::move(st), ds, ns, cfg, 78, {}, &rec);
  CHECK(rec.synth_cache_digest != 0);
}

TEST_CASE("self-play config: ladder indexing and validation") {
  SpinRunConfig cfg;
  cfg.steps = {5, 3};
  cfg.beta_scale = {1.0, 2.0, 4.0};
  CHECK(cfg.steps_at(0) == 5);
  CHECK(cfg.steps_at(1) == 3);
  CHECK(cfg.steps_at(7) == 3);
  CHECK(cfg.beta_scale_at(2) == 4.0);
  CHECK(cfg.beta_scale_at(9) == 4.0);

  SpinRunConfig bad = cfg;
  bad.iterations = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.synthetic_fraction = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.synthetic_fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.lambda = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  // log-ratio diagnostics are meaningless on a deterministic sampler
  Dataset ds = generate_dataset(default_target_spec(), 16, {}, 3);
  NoiseSchedule frozen = make_schedule(4, ScheduleShape::kCosine, 0.0);
  ScoreModelParams base = init_score_model(arch2d(), 9);
  SpinRunConfig diag;
  diag.iterations = 1;
  diag.steps = {1};
  diag.beta_scale = {0.5};
  diag.batch_size = 2;
  diag.log_test_function = true;
  SpinIterationState st;
  st.current = base;
  st.opponent = base;
  CHECK_THROWS_AS(spin_iteration(std::move(st), ds, frozen, diag, 5), std::invalid_argument);
}

TEST_CASE("snapshot callbacks fire on the configured cadence") {
  Dataset ds = generate_dataset(default_target_spec(), 32, {}, 4);
  NoiseSchedule ns = make_schedule(4, ScheduleShape::kCosine, 1.0);
  ScoreModelParams p = init_score_model(arch2d(), 2);

  SftConfig cfg;
  cfg.steps = 5;
  cfg.batch_size = 4;
  cfg.snapshot_every = 2;
  std::vector<long long> at;
  train_sft(p, ds, ns, cfg, 1, {},
            [&](const std::string& phase, long long cum, int iter, const ScoreModelParams&) {
              CHECK(phase == "sft");
              CHECK(iter == 0);
              at.push_back(cum);
            });
  CHECK(at == std::vector<long long>{2, 4});

  SpinRunConfig scfg;
  scfg.iterations = 2;
  scfg.steps = {3};
  scfg.beta_scale = {0.5};
  scfg.batch_size = 2;
  scfg.snapshot_every = 3;
  std::vector<std::pair<long long, int>> spin_at;
  SpinIterationState st;
  st.current = p;
  st.opponent = p;
  run_spin(st, ds, ns, scfg, 6, {}, {},
           [&](const std::string& phase, long long cum, int iter, const ScoreModelParams&) {
             CHECK(phase == "spin");
             spin_at.emplace_back(cum, iter);
           });
  REQUIRE(spin_at.size() == 2u);
  CHECK(spin_at[0] == std::make_pair(3ll, 1));
  CHECK(spin_at[1] == std::make_pair(6ll, 2));
}
