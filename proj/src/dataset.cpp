#include "grada/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "grada/features.hpp"

namespace grada {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

[[noreturn]] void fail(std::size_t record, const std::string& field, const std::string& what) {
  throw DatasetError("record " + std::to_string(record) + ", field '" + field + "': " + what);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct RawRecord {
  std::string id;
  std::size_t nodes = 0;
  std::optional<int> label;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::vector<double>> features;
  bool has_features = false;
};

RawRecord parse_header(const std::string& line, std::size_t record) {
  std::istringstream ss(line);
  std::string kw, id, nodes_tok, label_tok, extra;
  ss >> kw >> id >> nodes_tok >> label_tok;
  if (kw != "graph" || id.empty()) fail(record, "graph", "expected 'graph <id> nodes=<n> label=<int|none>'");
  if (ss >> extra) fail(record, "graph", "unexpected token '" + extra + "'");
  RawRecord r;
  r.id = id;
  if (!starts_with(nodes_tok, "nodes=")) fail(record, "nodes", "missing nodes=<n>");
  try {
    std::size_t pos = 0;
    const std::string v = nodes_tok.substr(6);
    const long long n = std::stoll(v, &pos);
    if (pos != v.size() || n <= 0) throw std::invalid_argument("");
    r.nodes = static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    fail(record, "nodes", "not a positive integer: '" + nodes_tok.substr(6) + "'");
  }
  if (!starts_with(label_tok, "label=")) fail(record, "label", "missing label=<int|none>");
  const std::string lv = label_tok.substr(6);
  if (lv != "none") {
    try {
      std::size_t pos = 0;
      const int l = std::stoi(lv, &pos);
      if (pos != lv.size() || l < 0) throw std::invalid_argument("");
      r.label = l;
    } catch (const std::exception&) {
      fail(record, "label", "not a non-negative integer or 'none': '" + lv + "'");
    }
  }
  return r;
}

Graph finish_record(RawRecord&& r, std::size_t record, const LoadOptions& opts) {
  Graph g;
  g.id = std::move(r.id);
  g.label = r.label;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (auto [i, j] : r.edges) {
    if (i >= r.nodes || j >= r.nodes)
      fail(record, "edges", "endpoint of (" + std::to_string(i) + ", " + std::to_string(j) + ") >= nodes=" +
                                std::to_string(r.nodes));
    if (i >= j) fail(record, "edges", "pair (" + std::to_string(i) + ", " + std::to_string(j) + ") must have i < j");
    if (!seen.insert({i, j}).second)
      fail(record, "edges", "duplicate edge (" + std::to_string(i) + ", " + std::to_string(j) + ")");
  }
  g.adjacency = adjacency_from_edges(r.nodes, r.edges);
  if (r.has_features && !opts.recompute_features) {
    if (r.features.size() != r.nodes)
      fail(record, "features", std::to_string(r.features.size()) + " rows for " + std::to_string(r.nodes) + " nodes");
    const std::size_t k = r.features.front().size();
    if (k == 0) fail(record, "features", "empty feature row");
    Tensor x(r.nodes, k);
    for (std::size_t i = 0; i < r.nodes; ++i) {
      if (r.features[i].size() != k)
        fail(record, "features", "row " + std::to_string(i) + " has " + std::to_string(r.features[i].size()) +
                                     " values, expected " + std::to_string(k));
      for (std::size_t j = 0; j < k; ++j) {
        if (!std::isfinite(r.features[i][j])) fail(record, "features", "non-finite value in row " + std::to_string(i));
        x(i, j) = r.features[i][j];
      }
    }
    g.features = std::move(x);
  } else {
    g.features = compute_node_features(g.adjacency);
  }
  return g;
}

}  // namespace

std::vector<Graph> parse_dataset(std::istream& in, const LoadOptions& opts) {
  std::string line;
  if (!std::getline(in, line)) throw DatasetError("empty dataset file");
  const std::string header = trim(line);
  if (header != kDatasetHeader) throw DatasetError("unsupported dataset header '" + header + "'");

  enum class Section { kNone, kEdges, kFeatures };
  std::vector<Graph> graphs;
  std::optional<RawRecord> cur;
  Section section = Section::kNone;
  std::size_t record = 0;

  auto flush = [&] {
    if (cur) {
      graphs.push_back(finish_record(std::move(*cur), record, opts));
      cur.reset();
      ++record;
    }
  };

  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) {
      section = Section::kNone;
      continue;
    }
    if (starts_with(t, "graph ")) {
      flush();
      cur = parse_header(t, record);
      section = Section::kNone;
      continue;
    }
    if (!cur) throw DatasetError("record " + std::to_string(record) + ": content before 'graph' line: '" + t + "'");
    if (t == "edges:") {
      section = Section::kEdges;
      continue;
    }
    if (t == "features:") {
      section = Section::kFeatures;
      cur->has_features = true;
      continue;
    }
    std::istringstream ss(t);
    if (section == Section::kEdges) {
      long long i = -1, j = -1;
      std::string extra;
      if (!(ss >> i >> j) || (ss >> extra) || i < 0 || j < 0) fail(record, "edges", "malformed edge line '" + t + "'");
      cur->edges.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    } else if (section == Section::kFeatures) {
      std::vector<double> row;
      std::string tok;
      while (ss >> tok) {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
          fail(record, "features", "not a finite number: '" + tok + "'");
        row.push_back(v);
      }
      cur->features.push_back(std::move(row));
    } else {
      fail(record, "graph", "unexpected line '" + t + "'");
    }
  }
  flush();

  if (!graphs.empty()) {
    const bool labelled = graphs.front().label.has_value();
    for (std::size_t r = 0; r < graphs.size(); ++r)
      if (graphs[r].label.has_value() != labelled)
        fail(r, "label", "labels must be present on all graphs or on none");
  }
  return graphs;
}

std::vector<Graph> load_dataset(const std::string& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset '" + path + "'");
  return parse_dataset(in, opts);
}

void write_dataset(std::ostream& out, const std::vector<Graph>& graphs, bool include_features) {
  out << kDatasetHeader << '\n';
  for (std::size_t r = 0; r < graphs.size(); ++r) {
    const Graph& g = graphs[r];
    out << '\n'
        << "graph " << (g.id.empty() ? std::to_string(r) : g.id) << " nodes=" << g.num_nodes()
        << " label=" << (g.label ? std::to_string(*g.label) : "none") << '\n';
    out << "edges:\n";
    for (std::size_t i = 0; i < g.num_nodes(); ++i)
      for (std::size_t j = i + 1; j < g.num_nodes(); ++j)
        if (g.adjacency(i, j) != 0.0) out << i << ' ' << j << '\n';
    if (include_features && !g.features.empty()) {
      out << "features:\n";
      for (std::size_t i = 0; i < g.features.rows(); ++i) {
        for (std::size_t j = 0; j < g.features.cols(); ++j) out << (j ? " " : "") << format_double(g.features(i, j));
        out << '\n';
      }
    }
  }
}

void save_dataset(const std::string& path, const std::vector<Graph>& graphs, bool include_features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write dataset '" + path + "'");
  write_dataset(out, graphs, include_features);
  if (!out) throw DatasetError("write failed for '" + path + "'");
}

void SynthSpec::validate() const {
  auto in_open_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (graphs_per_class == 0) throw std::invalid_argument("graphs_per_class must be positive");
  if (min_nodes < 2 || max_nodes < min_nodes) throw std::invalid_argument("node range must satisfy 2 <= min <= max");
  if (!in_open_unit(q0)) throw std::invalid_argument("q0 must lie in (0, 1)");
  if (!in_open_unit(q1)) throw std::invalid_argument("q1 must lie in (0, 1)");
  if (!in_open_unit(q0 + delta_density)) throw std::invalid_argument("q0 + delta must lie in (0, 1)");
  if (!in_open_unit(q1 + delta_density)) throw std::invalid_argument("q1 + delta must lie in (0, 1)");
  if (!(sigma_shift >= 0.0)) throw std::invalid_argument("sigma_shift must be non-negative");
}

SynthDomains generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::uniform_int_distribution<std::size_t> size_dist(spec.min_nodes, spec.max_nodes);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  auto make_domain = [&](double shift, double sigma, const std::string& tag) {
    std::vector<Graph> out;
    for (int c = 0; c < 2; ++c) {
      const double q = (c == 0 ? spec.q0 : spec.q1) + shift;
      for (std::size_t k = 0; k < spec.graphs_per_class; ++k) {
        const std::size_t n = size_dist(rng);
        Graph g;
        g.id = tag + std::to_string(c) + "_" + std::to_string(k);
        g.adjacency = Tensor(n, n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = i + 1; j < n; ++j)
            if (unif(rng) < q) g.adjacency(i, j) = g.adjacency(j, i) = 1.0;
        g.features = compute_node_features(g.adjacency);
        if (sigma > 0.0)
          for (double& v : g.features.data()) v += sigma * noise(rng);
        g.label = c;
        out.push_back(std::move(g));
      }
    }
    return out;
  };

  SynthDomains d;
  d.source = make_domain(0.0, 0.0, "s");
  d.target = make_domain(spec.delta_density, spec.sigma_shift, "t");
  return d;
}

double f1_score(std::span<const int> predictions, std::span<const int> labels, int positive_class) {
  if (predictions.empty()) throw std::invalid_argument("f1_score: empty input");
  if (predictions.size() != labels.size())
    throw std::invalid_argument("f1_score: " + std::to_string(predictions.size()) + " predictions for " +
                                std::to_string(labels.size()) + " labels");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool pred = predictions[i] == positive_class;
    const bool real = labels[i] == positive_class;
    tp += pred && real;
    fp += pred && !real;
    fn += !pred && real;
  }
  const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

std::pair<std::vector<Graph>, std::vector<Graph>> split(const std::vector<Graph>& dataset, double train_fraction,
                                                        std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split: train_fraction must lie in (0, 1)");
  Rng rng(seed);
  const bool labelled = !dataset.empty() && std::all_of(dataset.begin(), dataset.end(),
                                                        [](const Graph& g) { return g.label.has_value(); });
  std::map<int, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < dataset.size(); ++i) strata[labelled ? *dataset[i].label : 0].push_back(i);

  std::vector<std::size_t> train_idx, test_idx;
  for (auto& [label, idx] : strata) {
    if (labelled && idx.size() < 2)
      throw std::invalid_argument("split: class " + std::to_string(label) + " has fewer than 2 samples");
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, idx.size() > 1 ? 1 : 0, idx.size() > 1 ? idx.size() - 1 : idx.size());
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::shuffle(train_idx.begin(), train_idx.end(), rng);
  std::shuffle(test_idx.begin(), test_idx.end(), rng);

  std::pair<std::vector<Graph>, std::vector<Graph>> out;
  for (std::size_t i : train_idx) out.first.push_back(dataset[i]);
  for (std::size_t i : test_idx) out.second.push_back(dataset[i]);
  return out;
}

std::vector<int> labels_of(const std::vector<Graph>& graphs) {
  std::vector<int> out;
  out.reserve(graphs.size());
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    if (!graphs[i].label) throw std::invalid_argument("graph " + graphs[i].id + " has no label");
    out.push_back(*graphs[i].label);
  }
  return out;
}

}  // namespace grada
