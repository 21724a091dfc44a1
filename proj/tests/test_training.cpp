#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "grada/dataset.hpp"
#include "grada/training.hpp"
#include "oracles.hpp"

using namespace grada;

namespace {

TrainConfig small_config(AblationMode mode) {
  TrainConfig c;
  c.batch_size = 8;
  c.encoder_hidden = 8;
  c.decoder_hidden = 8;
  c.latent_dim = 4;
  c.classifier_hidden = 8;
  c.epochs = 3;
  c.ablation_mode = mode;
  return c;
}

SynthDomains toy_domains(std::size_t per_class, std::uint64_t seed) {
  SynthSpec s;
  s.graphs_per_class = per_class;
  s.min_nodes = 8;
  s.max_nodes = 12;
  s.seed = seed;
  return generate_synthetic(s);
}

struct Fixture {
  SynthDomains d = toy_domains(5, 3);
  GraphBatch source = batch_graphs(d.source);
  UnlabeledBatch target{batch_graphs(d.target)};
};

bool same_params(const ModelParams& a, const ModelParams& b) {
  const auto na = a.named(), nb = b.named();
  for (std::size_t k = 0; k < na.size(); ++k)
    if (!(*na[k].second == *nb[k].second)) return false;
  return true;
}

}  // namespace

TEST_CASE("adam matches a scalar reference loop") {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor p(2, 3);
  for (double& v : p.data()) v = u(rng);
  std::vector<oracle::ScalarAdam> ref(p.size());
  std::vector<double> ref_p(p.data().begin(), p.data().end());
  OptimizerState opt;
  for (int step = 0; step < 100; ++step) {
    Tensor g(2, 3);
    for (double& v : g.data()) v = step < 50 ? 0.3 : u(rng);
    const double lr = 0.01 / (1 + step);
    for (std::size_t i = 0; i < p.size(); ++i) ref_p[i] = ref[i].step(ref_p[i], g[i], lr, 0.0005);
    adam_update(opt, {&p}, {g}, lr, 0.0005);
  }
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - ref_p[i]) < 1e-12);
  CHECK(opt.step == 100);
  CHECK(opt.first_moment[0].rows() == 2);
}

TEST_CASE("adam edge cases") {
  Tensor p = Tensor::from_rows({{0.5, -2.0}});
  const Tensor before = p;
  OptimizerState opt;
  adam_update(opt, {&p}, {Tensor(1, 2)}, 0.1, 0.0);
  CHECK(p == before);

  OptimizerState fresh;
  Tensor q = Tensor::from_rows({{1.0, 1.0}});
  adam_update(fresh, {&q}, {Tensor::from_rows({{3.0, -0.2}})}, 0.01, 0.0);
  CHECK(q(0, 0) == doctest::Approx(1.0 - 0.01).epsilon(1e-8));
  CHECK(q(0, 1) == doctest::Approx(1.0 + 0.01).epsilon(1e-8));

  CHECK_THROWS_AS(adam_update(fresh, {&q}, {Tensor(2, 2)}, 0.01, 0.0), ShapeError);
  CHECK_THROWS_AS(adam_update(fresh, {&q}, {}, 0.01, 0.0), ShapeError);
}

TEST_CASE("learning-rate and reversal schedules") {
  TrainConfig c;
  c.learning_rate = 0.02;
  CHECK(lr_at(0, 100, c) == 0.02);
  CHECK(lr_at(100, 100, c) == doctest::Approx(0.02 / std::pow(11.0, 0.75)).epsilon(1e-14));
  CHECK(lr_at(100, 100, c) / 0.02 == doctest::Approx(0.1659).epsilon(1e-3));
  double prev = lr_at(0, 1000, c), prev_grl = grl_lambda_at(0, 1000);
  CHECK(prev_grl == 0.0);
  for (std::size_t s = 1; s <= 1000; ++s) {
    CHECK(lr_at(s, 1000, c) <= prev);
    CHECK(grl_lambda_at(s, 1000) >= prev_grl);
    prev = lr_at(s, 1000, c);
    prev_grl = grl_lambda_at(s, 1000);
  }
  CHECK(prev_grl == doctest::Approx(2.0 / (1.0 + std::exp(-10.0)) - 1.0));
}

TEST_CASE("ablation names round trip") {
  for (AblationMode m : {AblationMode::kFull, AblationMode::kDnanD, AblationMode::kDnanN, AblationMode::kSourceOnly})
    CHECK(parse_ablation(to_string(m)) == m);
  CHECK_THROWS(parse_ablation("dnan"));
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.p_drop = 1.5;
  CHECK_THROWS_WITH(c.validate(), doctest::Contains("p_drop"));
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_WITH(c.validate(), doctest::Contains("batch_size"));
}

TEST_CASE("zero loss weights with no reversal leave parameters unchanged") {
  Fixture f;
  TrainConfig c = small_config(AblationMode::kFull);
  c.lambda_cls = c.lambda_elbo = c.lambda_nwd = c.lambda_e = 0.0;
  c.weight_decay = 0.0;
  Rng rng(2);
  ModelParams params = init_params(dims_for(c, 7, 2), rng);
  const ModelParams before = params;
  OptimizerState opt;
  const StepReport r = train_step(params, opt, f.source, f.target, c, Schedule{0, 10}, rng);
  CHECK(r.optimizer_steps == 2);
  CHECK(r.clean.total == 0.0);
  CHECK(same_params(params, before));
}

TEST_CASE("optimizer steps per train_step by mode") {
  Fixture f;
  const std::pair<AblationMode, std::size_t> cases[] = {{AblationMode::kFull, 2},
                                                        {AblationMode::kDnanN, 2},
                                                        {AblationMode::kDnanD, 1},
                                                        {AblationMode::kSourceOnly, 1}};
  for (const auto& [mode, steps] : cases) {
    const TrainConfig c = small_config(mode);
    Rng rng(3);
    ModelParams params = init_params(dims_for(c, 7, 2), rng);
    OptimizerState opt;
    const StepReport r = train_step(params, opt, f.source, f.target, c, Schedule{1, 10}, rng);
    CHECK(r.optimizer_steps == steps);
    CHECK(opt.step == steps);
    CHECK(r.augmented.has_value() == (steps == 2));
    if (mode == AblationMode::kDnanN) {
      CHECK(r.clean.nwd == 0.0);
      CHECK(r.augmented->nwd == 0.0);
    }
    if (mode == AblationMode::kDnanD || mode == AblationMode::kSourceOnly) {
      CHECK(r.clean.elbo == 0.0);
      CHECK(r.clean.entropy_reg == 0.0);
    }
    if (mode == AblationMode::kSourceOnly) CHECK(r.clean.nwd == 0.0);
    if (r.augmented) CHECK(r.augmented->cls == 0.0);
  }
}

TEST_CASE("train_step is deterministic in the seed") {
  Fixture f;
  const TrainConfig c = small_config(AblationMode::kFull);
  auto run = [&] {
    Rng rng(4);
    ModelParams params = init_params(dims_for(c, 7, 2), rng);
    OptimizerState opt;
    std::vector<StepReport> reports;
    for (std::size_t s = 0; s < 5; ++s) reports.push_back(train_step(params, opt, f.source, f.target, c, {s, 5}, rng));
    return std::pair{reports, params};
  };
  const auto [ra, pa] = run();
  const auto [rb, pb] = run();
  for (std::size_t s = 0; s < ra.size(); ++s) {
    CHECK(ra[s].clean == rb[s].clean);
    CHECK(*ra[s].augmented == *rb[s].augmented);
  }
  CHECK(same_params(pa, pb));
}

TEST_CASE("empty batches are rejected") {
  Fixture f;
  const TrainConfig c = small_config(AblationMode::kFull);
  Rng rng(5);
  ModelParams params = init_params(dims_for(c, 7, 2), rng);
  OptimizerState opt;
  CHECK_THROWS(train_step(params, opt, GraphBatch{}, f.target, c, {0, 1}, rng));
}

TEST_CASE("the clean objective descends on a 20-graph toy set") {
  const SynthDomains d = toy_domains(5, 6);
  const FeatureScaler scaler = FeatureScaler::fit(d.source);
  const GraphBatch source = batch_graphs(scaler.apply(d.source));
  const UnlabeledBatch target(batch_graphs(scaler.apply(d.target)));
  REQUIRE(source.num_graphs() + target.graphs().num_graphs() == 20);
  TrainConfig c = small_config(AblationMode::kFull);
  c.dropout = 0.0;
  Rng rng(6);
  ModelParams params = init_params(dims_for(c, 7, 2), rng);
  OptimizerState opt;
  double first = 0.0, last = 0.0;
  for (std::size_t s = 0; s < 50; ++s) {
    const StepReport r = train_step(params, opt, source, target, c, {s, 50}, rng);
    if (s == 0) first = r.clean.total;
    last = r.clean.total;
  }
  CHECK(last < first);
}

TEST_CASE("evaluate_pass gradients agree with train_step's update direction") {
  Fixture f;
  const TrainConfig c = small_config(AblationMode::kSourceOnly);
  Rng rng(7);
  const ModelParams params = init_params(dims_for(c, 7, 2), rng);
  std::vector<Tensor> grads;
  Rng r1(8);
  TrainConfig no_dropout = c;
  no_dropout.dropout = 0.0;
  const LossReport rep = evaluate_pass(params, f.source, f.target, nullptr, nullptr, true, no_dropout, 0.0, r1, &grads);
  CHECK(grads.size() == params.named().size());
  CHECK(rep.total == rep.cls);
  CHECK(rep.cls > 0.0);
}

TEST_CASE("feature scaler") {
  Graph a, b;
  a.adjacency = b.adjacency = Tensor(2, 2);
  a.features = Tensor::from_rows({{1.0, 5.0}, {3.0, 5.0}});
  b.features = Tensor::from_rows({{5.0, 5.0}, {7.0, 5.0}});
  const FeatureScaler s = FeatureScaler::fit({a, b});
  CHECK(s.mean(0, 0) == 4.0);
  CHECK(s.mean(0, 1) == 5.0);
  CHECK(s.stddev(0, 1) == 1e-8);
  const Graph sa = s.apply(a);
  CHECK(sa.features(0, 1) == 0.0);
  CHECK(sa.features(0, 0) == doctest::Approx(-3.0 / std::sqrt(5.0)));
  Graph wide = a;
  wide.features = Tensor(2, 3);
  CHECK_THROWS_AS(s.apply(wide), ShapeError);
}

TEST_CASE("run_experiment accounting and source-only separability") {
  const SynthDomains d = toy_domains(40, 9);
  TrainConfig c = small_config(AblationMode::kFull);
  c.epochs = 4;
  std::size_t callbacks = 0;
  const ExperimentResult full = run_experiment(c, d.source, d.target, [&](const EpochMetrics&) { ++callbacks; });
  CHECK(callbacks == 4);
  REQUIRE(full.epochs.size() == 4);
  std::size_t reports = 0;
  for (const EpochMetrics& m : full.epochs) {
    reports += 1 + m.augmented.has_value();
    CHECK(m.optimizer_steps == 2 * m.batches);
  }
  CHECK(reports == 2 * c.epochs);

  // default 12-24 node graphs separate the two densities cleanly
  SynthSpec spec;
  spec.graphs_per_class = 100;
  spec.seed = 9;
  const SynthDomains wide = generate_synthetic(spec);
  TrainConfig so = small_config(AblationMode::kSourceOnly);
  so.epochs = 30;
  so.encoder_hidden = so.classifier_hidden = 16;
  so.dropout = 0.2;
  const ExperimentResult r = run_experiment(so, wide.source, wide.target);
  CHECK(r.f1_source >= 0.95);
  for (const EpochMetrics& m : r.epochs) {
    CHECK_FALSE(m.augmented.has_value());
    CHECK(m.optimizer_steps == m.batches);
  }
}
