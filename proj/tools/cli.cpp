#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <json.hpp>
#include <map>
#include <mutex>
#include <thread>

#include "grada/autodiff.hpp"
#include "grada/checkpoint.hpp"
#include "grada/config.hpp"
#include "grada/dataset.hpp"
#include "grada/selfcheck.hpp"
#include "grada/training.hpp"

namespace grada::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t thread_cap() {
  if (const char* env = std::getenv("GRADA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw UserError(std::string("GRADA_THREADS must be a positive integer, got '") + env + "'");
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void require_file(const std::string& what, const std::string& path) {
  if (path.empty()) throw UserError(what + " path is not set");
  if (!fs::is_regular_file(path)) throw UserError(what + " file not found: " + path);
}

fs::path make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UserError("cannot create output directory: " + dir);
  return dir;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw UserError("cannot write " + p.string());
  return f;
}

json losses_json(const LossReport& r) {
  return json{{"recon", r.recon}, {"kl", r.kl},   {"elbo", r.elbo},   {"entropy_reg", r.entropy_reg},
              {"cls", r.cls},     {"nwd", r.nwd}, {"total", r.total}};
}

json metrics_record(const EpochMetrics& m) {
  json j{{"epoch", m.epoch}, {"f1_target", m.f1_target}, {"f1_source", m.f1_source}};
  const json losses = losses_json(m.clean);
  for (auto& [k, v] : losses.items()) j[k] = v;
  j["lr"] = m.lr;
  j["steps"] = m.optimizer_steps;
  j["batches"] = m.batches;
  j["augmented"] = m.augmented ? losses_json(*m.augmented) : json(nullptr);
  return j;
}

constexpr const char* kCsvHeader =
    "epoch,f1_target,f1_source,recon,kl,elbo,entropy_reg,cls,nwd,total,lr,steps,batches,"
    "aug_recon,aug_kl,aug_elbo,aug_entropy_reg,aug_cls,aug_nwd,aug_total";

std::string csv_row(const EpochMetrics& m) {
  std::string row = std::to_string(m.epoch);
  auto add = [&row](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    row += buf;
  };
  auto add_losses = [&add](const LossReport& r) {
    for (double v : {r.recon, r.kl, r.elbo, r.entropy_reg, r.cls, r.nwd, r.total}) add(v);
  };
  add(m.f1_target);
  add(m.f1_source);
  add_losses(m.clean);
  add(m.lr);
  row += "," + std::to_string(m.optimizer_steps) + "," + std::to_string(m.batches);
  if (m.augmented)
    add_losses(*m.augmented);
  else
    row += ",,,,,,,";
  return row;
}

json settings_json(const ExperimentConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : effective_settings(cfg)) j[k] = v;
  return j;
}

struct Datasets {
  std::vector<Graph> source, target;
};

Datasets load_pair(const ExperimentConfig& cfg) {
  require_file("source dataset", cfg.source);
  require_file("target dataset", cfg.target);
  if (thread_cap() > 1) {
    auto s = std::async(std::launch::async, [&] { return load_dataset(cfg.source); });
    std::vector<Graph> t = load_dataset(cfg.target);
    return {s.get(), std::move(t)};
  }
  return {load_dataset(cfg.source), load_dataset(cfg.target)};
}

// Common flags of commands that take an experiment configuration.
struct ConfigFlags {
  std::string config;
  std::vector<std::string> set;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> ablation;
  std::optional<std::string> out, source, target;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "key = value config file");
    cmd->add_option("--set", set, "override one key (key=value), repeatable");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--ablation", ablation, "full, dnan_d, dnan_n or source_only");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--source", source, "source dataset file");
    cmd->add_option("--target", target, "target dataset file");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!config.empty()) {
      require_file("config", config);
      cfg = load_config(config);
    }
    for (const std::string& kv : set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UserError("--set expects key=value, got '" + kv + "'");
      apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.train.seed = *seed;
    if (ablation) apply_setting(cfg, "ablation_mode", *ablation);
    if (out) cfg.out = *out;
    if (source) cfg.source = *source;
    if (target) cfg.target = *target;
    try {
      cfg.train.validate();
    } catch (const std::invalid_argument& e) {
      throw UserError(e.what());
    }
    return cfg;
  }
};

json train_one(const ExperimentConfig& cfg, const Datasets& data, bool csv) {
  const fs::path dir = make_dir(cfg.out);
  std::ofstream metrics = open_out(dir / "metrics.jsonl");
  std::ofstream csv_file;
  if (csv) {
    csv_file = open_out(dir / "metrics.csv");
    csv_file << kCsvHeader << '\n';
  }
  const auto start = std::chrono::steady_clock::now();
  const ExperimentResult result = run_experiment(cfg.train, data.source, data.target, [&](const EpochMetrics& m) {
    metrics << metrics_record(m).dump() << '\n' << std::flush;
    if (csv) csv_file << csv_row(m) << '\n' << std::flush;
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  save_checkpoint((dir / "checkpoint.grada").string(), Checkpoint{result.params, result.scaler});
  const EpochMetrics& last = result.epochs.back();
  json summary{{"seed", cfg.train.seed},
               {"ablation", to_string(cfg.train.ablation_mode)},
               {"f1_target", result.f1_target},
               {"f1_source", result.f1_source},
               {"losses", losses_json(last.clean)},
               {"augmented_losses", last.augmented ? losses_json(*last.augmented) : json(nullptr)},
               {"epochs", result.epochs.size()},
               {"optimizer_steps", result.optimizer_steps},
               {"wall_clock_seconds", seconds},
               {"config", settings_json(cfg)}};
  open_out(dir / "summary.json") << summary.dump(2) << '\n';
  return summary;
}

int cmd_train(const ConfigFlags& flags, bool csv, std::ostream& out) {
  const ExperimentConfig cfg = flags.resolve();
  const Datasets data = load_pair(cfg);
  out << train_one(cfg, data, csv).dump(2) << '\n';
  return kExitOk;
}

struct SynthFlags {
  SynthSpec spec;
  std::string out = "data";
};

int cmd_synth(const SynthFlags& flags, std::ostream& out) {
  try {
    flags.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UserError(e.what());
  }
  const SynthDomains d = generate_synthetic(flags.spec);
  const fs::path dir = make_dir(flags.out);
  save_dataset((dir / "source.grada").string(), d.source);
  save_dataset((dir / "target.grada").string(), d.target);
  out << "wrote " << (dir / "source.grada").string() << " (" << d.source.size() << " graphs)\n"
      << "wrote " << (dir / "target.grada").string() << " (" << d.target.size() << " graphs)\n";
  return kExitOk;
}

Checkpoint load_checked(const std::string& path, const ConfigFlags& flags) {
  require_file("checkpoint", path);
  Checkpoint ckpt = load_checkpoint(path);
  if (!flags.config.empty() || !flags.set.empty()) {
    const ExperimentConfig cfg = flags.resolve();
    const ModelDims want = dims_for(cfg.train, ckpt.params.dims.input_dim, ckpt.params.dims.num_classes);
    if (!(want == ckpt.params.dims))
      throw UserError("checkpoint dimensions do not match the configuration (encoder_hidden, latent_dim, "
                      "decoder_hidden or classifier_hidden differ)");
  }
  return ckpt;
}

std::vector<Graph> load_for(const Checkpoint& ckpt, const std::string& path) {
  require_file("dataset", path);
  std::vector<Graph> graphs = load_dataset(path);
  for (const Graph& g : graphs)
    if (g.features.cols() != ckpt.params.dims.input_dim)
      throw UserError("dataset " + path + ": graph '" + g.id + "' has " + std::to_string(g.features.cols()) +
                      " feature columns, checkpoint expects " + std::to_string(ckpt.params.dims.input_dim));
  return ckpt.scaler.apply(graphs);
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset, const ConfigFlags& flags, std::ostream& out) {
  const Checkpoint ckpt = load_checked(ckpt_path, flags);
  const std::vector<Graph> graphs = load_for(ckpt, dataset);
  for (const Graph& g : graphs)
    if (!g.label) throw UserError("dataset " + dataset + " is unlabelled; eval needs labels");
  const GraphBatch batch = batch_graphs(graphs);
  const std::vector<int> preds = predict(ckpt.params, batch);
  const std::vector<int> labels = labels_of(graphs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
  const json j{{"dataset", dataset},
               {"graphs", graphs.size()},
               {"f1", f1_score(preds, labels)},
               {"accuracy", static_cast<double>(correct) / static_cast<double>(graphs.size())}};
  out << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_dump(const std::string& ckpt_path, std::vector<std::string> datasets, std::vector<std::string> domains,
             const std::string& output, const ConfigFlags& flags, std::ostream& out) {
  const Checkpoint ckpt = load_checked(ckpt_path, flags);
  if (datasets.empty()) {
    const ExperimentConfig cfg = flags.resolve();
    datasets = {cfg.source, cfg.target};
    if (domains.empty()) domains = {"source", "target"};
  }
  if (domains.empty())
    for (std::size_t i = 0; i < datasets.size(); ++i) domains.push_back(datasets.size() == 1 ? "target" : "d" + std::to_string(i));
  if (domains.size() != datasets.size()) throw UserError("--domain must be given once per --dataset");

  fs::path path = output;
  if (path.empty()) path = make_dir(flags.out.value_or("out")) / "embeddings.csv";
  else if (path.has_parent_path()) make_dir(path.parent_path().string());
  std::ofstream csv = open_out(path);
  csv << "graph_id,domain,label";
  for (std::size_t f = 0; f < ckpt.params.dims.latent_dim; ++f) csv << ",z" << f;
  csv << '\n';
  std::size_t rows = 0;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const std::vector<Graph> graphs = load_for(ckpt, datasets[d]);
    if (graphs.empty()) continue;
    const Tensor emb = embed_graphs(ckpt.params, batch_graphs(graphs));
    char buf[40];
    for (std::size_t i = 0; i < graphs.size(); ++i, ++rows) {
      csv << graphs[i].id << ',' << domains[d] << ',' << (graphs[i].label ? std::to_string(*graphs[i].label) : "");
      for (std::size_t f = 0; f < emb.cols(); ++f) {
        std::snprintf(buf, sizeof buf, ",%.17g", emb(i, f));
        csv << buf;
      }
      csv << '\n';
    }
  }
  out << "wrote " << rows << " rows to " << path.string() << '\n';
  return kExitOk;
}

int cmd_selfcheck(std::uint64_t seed, bool corrupt, std::ostream& out) {
  ad::testing::corrupt_nuclear_gradient = corrupt;
  std::vector<CheckResult> results;
  try {
    results = run_selfcheck(seed);
  } catch (...) {
    ad::testing::corrupt_nuclear_gradient = false;
    throw;
  }
  ad::testing::corrupt_nuclear_gradient = false;
  std::size_t failed = 0;
  char buf[64];
  for (const CheckResult& r : results) {
    std::snprintf(buf, sizeof buf, " measured=%.3e tol=%.1e", r.measured, r.tolerance);
    out << (r.passed ? "PASS " : "FAIL ") << r.name << buf << '\n';
    failed += !r.passed;
  }
  out << results.size() - failed << "/" << results.size() << " checks passed\n";
  return failed == 0 ? kExitOk : kExitCheckFailure;
}

struct SweepFlags {
  std::vector<std::uint64_t> seeds{27};
  std::vector<std::string> ablations{"full"};
  std::size_t workers = 1;
  bool csv = false;
};

int cmd_sweep(const ConfigFlags& flags, const SweepFlags& sweep, std::ostream& out) {
  const ExperimentConfig base = flags.resolve();
  const Datasets data = load_pair(base);
  std::vector<ExperimentConfig> runs;
  for (const std::string& ab : sweep.ablations) {
    for (std::uint64_t seed : sweep.seeds) {
      ExperimentConfig cfg = base;
      apply_setting(cfg, "ablation_mode", ab);
      cfg.train.seed = seed;
      cfg.out = (fs::path(base.out) / (ab + "-seed" + std::to_string(seed))).string();
      runs.push_back(cfg);
    }
  }
  const fs::path dir = make_dir(base.out);
  std::vector<json> summaries(runs.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < runs.size();) {
      try {
        summaries[i] = train_one(runs[i], data, sweep.csv);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(std::min(sweep.workers, thread_cap()), 1, runs.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::ofstream lines = open_out(dir / "sweep.jsonl");
  std::map<std::string, std::pair<double, std::size_t>> mean;
  for (const json& s : summaries) {
    lines << s.dump() << '\n';
    auto& [total, count] = mean[s["ablation"].get<std::string>()];
    total += s["f1_target"].get<double>();
    ++count;
  }
  json agg = json::object();
  for (const std::string& ab : sweep.ablations) agg[ab] = mean[ab].first / static_cast<double>(mean[ab].second);
  const json summary{{"runs", runs.size()}, {"mean_f1_target", agg}, {"config", settings_json(base)}};
  open_out(dir / "sweep_summary.json") << summary.dump(2) << '\n';
  out << summary.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph domain adaptation with denoising VGAE and nuclear-norm Wasserstein discrepancy", "grada"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  bool csv = false;
  CLI::App* train = app.add_subcommand("train", "train a model, writing metrics, checkpoint and summary");
  train_flags.attach(train);
  train->add_flag("--csv", csv, "also write metrics.csv");

  SynthFlags synth_flags;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic source/target pair");
  synth->add_option("--out", synth_flags.out, "output directory");
  synth->add_option("--seed", synth_flags.spec.seed);
  synth->add_option("--graphs-per-class", synth_flags.spec.graphs_per_class);
  synth->add_option("--min-nodes", synth_flags.spec.min_nodes);
  synth->add_option("--max-nodes", synth_flags.spec.max_nodes);
  synth->add_option("--q0", synth_flags.spec.q0, "class 0 edge density");
  synth->add_option("--q1", synth_flags.spec.q1, "class 1 edge density");
  synth->add_option("--delta", synth_flags.spec.delta_density, "target density shift");
  synth->add_option("--sigma-shift", synth_flags.spec.sigma_shift, "target feature noise");

  ConfigFlags eval_flags;
  std::string eval_ckpt, eval_data;
  CLI::App* eval = app.add_subcommand("eval", "F1 of a checkpoint on a labelled dataset");
  eval_flags.attach(eval);
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--dataset", eval_data)->required();

  ConfigFlags dump_flags;
  std::string dump_ckpt, dump_output;
  std::vector<std::string> dump_data, dump_domains;
  CLI::App* dump = app.add_subcommand("dump-embeddings", "write pooled graph embeddings as CSV");
  dump_flags.attach(dump);
  dump->add_option("--checkpoint", dump_ckpt)->required();
  dump->add_option("--dataset", dump_data, "dataset file, repeatable; defaults to the config's source and target");
  dump->add_option("--domain", dump_domains, "domain tag per dataset");
  dump->add_option("--output", dump_output, "CSV path (default <out>/embeddings.csv)");

  std::uint64_t check_seed = 7;
  bool corrupt = false;
  CLI::App* check = app.add_subcommand("selfcheck", "run the numeric self-checks");
  check->add_option("--seed", check_seed);
  check->add_flag("--corrupt-nuclear-grad", corrupt)->group("");

  ConfigFlags sweep_flags;
  SweepFlags sweep_opts;
  CLI::App* sweep = app.add_subcommand("sweep", "train over a grid of seeds and ablations");
  sweep_flags.attach(sweep);
  sweep->add_option("--seeds", sweep_opts.seeds)->delimiter(',');
  sweep->add_option("--ablations", sweep_opts.ablations)->delimiter(',');
  sweep->add_option("--workers", sweep_opts.workers, "parallel runs (capped by GRADA_THREADS)");
  sweep->add_flag("--csv", sweep_opts.csv);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUserError;
  }

  try {
    if (*train) return cmd_train(train_flags, csv, out);
    if (*synth) return cmd_synth(synth_flags, out);
    if (*eval) return cmd_eval(eval_ckpt, eval_data, eval_flags, out);
    if (*dump) return cmd_dump(dump_ckpt, dump_data, dump_domains, dump_output, dump_flags, out);
    if (*check) return cmd_selfcheck(check_seed, corrupt, out);
    if (*sweep) return cmd_sweep(sweep_flags, sweep_opts, out);
  } catch (const UserError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUserError;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUserError;
  } catch (const DatasetError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUserError;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUserError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitCheckFailure;
  }
  return kExitUserError;
}

}  // namespace grada::cli
