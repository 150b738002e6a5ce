#pragma once

// Persistence and configuration: graph CSVs, dataset bundles, the flat
// key = value run configuration, checkpoints, run reports and metric curves.
//
// Edge CSV:  src,dst,<edge feature columns...>
// Node CSV:  id,label,<node feature columns...>   label in {0, 1, ""}
// Split CSV: id,split                             split in {train,val,test,none}

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "linemvgnn/autodiff.hpp"
#include "linemvgnn/error.hpp"
#include "linemvgnn/graph.hpp"
#include "linemvgnn/model.hpp"
#include "linemvgnn/synthgen.hpp"
#include "linemvgnn/train.hpp"

namespace lmv {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Text helpers

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_fields(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i)
    if (i == line.size() || line[i] == sep) {
      out.emplace_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  return out;
}

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// ---------------------------------------------------------------------------
// Graph CSV

struct GraphSchema {
  std::vector<std::string> node_columns;
  std::vector<std::string> edge_columns;
  friend bool operator==(const GraphSchema&, const GraphSchema&) = default;
};

/// One graph of a bundle with its original account ids (row i = dense id i).
struct BundleGraph {
  std::string name;
  double time = 0.0;
  TransactionGraph graph;
  std::vector<std::string> node_ids;
};

struct DatasetBundle {
  GraphSchema schema;
  std::vector<BundleGraph> graphs;
  json provenance = json::array();
};

/// Parses an edge CSV and optional node CSV. Dense ids follow node-file order
/// when a node file is given (every edge endpoint must then be listed),
/// otherwise first appearance in the edge file.
inline BundleGraph read_graph_csv(std::istream& edges, std::istream* nodes, GraphSchema& schema,
                                  const std::string& edge_name = "edges", const std::string& node_name = "nodes") {
  auto fail = [](const std::string& file, std::size_t line, const std::string& what) -> data_error {
    return data_error(file + ":" + std::to_string(line) + ": " + what);
  };
  BundleGraph bg;
  std::unordered_map<std::string, NodeId> id_of;
  std::vector<Label> labels;
  std::vector<double> node_feat;
  std::string line;

  if (nodes) {
    if (!std::getline(*nodes, line)) throw fail(node_name, 1, "missing header");
    auto header = split_fields(line);
    if (header.size() < 2 || header[0] != "id" || header[1] != "label")
      throw fail(node_name, 1, "header must start with id,label");
    schema.node_columns.assign(header.begin() + 2, header.end());
    std::size_t lineno = 1;
    while (std::getline(*nodes, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      auto f = split_fields(line);
      if (f.size() != header.size())
        throw fail(node_name, lineno, "expected " + std::to_string(header.size()) + " fields");
      if (f[0].empty()) throw fail(node_name, lineno, "empty node id");
      if (!id_of.emplace(f[0], bg.node_ids.size()).second) throw fail(node_name, lineno, "duplicate node id " + f[0]);
      bg.node_ids.push_back(f[0]);
      if (f[1].empty()) labels.push_back(Label::unlabeled);
      else if (f[1] == "0") labels.push_back(Label::licit);
      else if (f[1] == "1") labels.push_back(Label::illicit);
      else throw fail(node_name, lineno, "label must be 0, 1 or empty");
      for (std::size_t c = 2; c < f.size(); ++c) {
        auto v = parse_double(f[c]);
        if (!v) throw fail(node_name, lineno, "bad number '" + f[c] + "'");
        node_feat.push_back(*v);
      }
    }
  } else {
    schema.node_columns.clear();
  }

  if (!std::getline(edges, line)) throw fail(edge_name, 1, "missing header");
  auto header = split_fields(line);
  if (header.size() < 2 || header[0] != "src" || header[1] != "dst")
    throw fail(edge_name, 1, "header must start with src,dst");
  schema.edge_columns.assign(header.begin() + 2, header.end());
  std::vector<Edge> edge_list;
  std::vector<double> edge_feat;
  std::size_t lineno = 1;
  auto resolve = [&](const std::string& id) -> NodeId {
    auto it = id_of.find(id);
    if (it != id_of.end()) return it->second;
    if (nodes) throw fail(edge_name, lineno, "dangling node reference '" + id + "' not in node file");
    id_of.emplace(id, bg.node_ids.size());
    bg.node_ids.push_back(id);
    return bg.node_ids.size() - 1;
  };
  while (std::getline(edges, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_fields(line);
    if (f.size() != header.size()) throw fail(edge_name, lineno, "expected " + std::to_string(header.size()) + " fields");
    if (f[0].empty() || f[1].empty()) throw fail(edge_name, lineno, "empty endpoint id");
    const NodeId s = resolve(f[0]);
    const NodeId d = resolve(f[1]);
    edge_list.push_back({s, d});
    for (std::size_t c = 2; c < f.size(); ++c) {
      auto v = parse_double(f[c]);
      if (!v) throw fail(edge_name, lineno, "bad number '" + f[c] + "'");
      edge_feat.push_back(*v);
    }
  }
  const std::size_t n = bg.node_ids.size();
  if (!nodes) labels.assign(n, Label::unlabeled);
  const std::size_t m = edge_list.size();
  bg.graph = TransactionGraph(n, std::move(edge_list), Matrix(n, schema.node_columns.size(), std::move(node_feat)),
                              Matrix(m, schema.edge_columns.size(), std::move(edge_feat)), std::move(labels));
  return bg;
}

inline void write_edges_csv(std::ostream& os, const BundleGraph& bg, const GraphSchema& schema) {
  const auto& g = bg.graph;
  if (schema.edge_columns.size() != g.edge_features().cols()) throw argument_error("edge schema width mismatch");
  os << "src,dst";
  for (const auto& c : schema.edge_columns) os << ',' << c;
  os << '\n';
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    os << bg.node_ids[g.edges()[e].src] << ',' << bg.node_ids[g.edges()[e].dst];
    for (double x : g.edge_features().row(e)) os << ',' << format_double(x);
    os << '\n';
  }
}

inline void write_nodes_csv(std::ostream& os, const BundleGraph& bg, const GraphSchema& schema) {
  const auto& g = bg.graph;
  if (schema.node_columns.size() != g.node_features().cols()) throw argument_error("node schema width mismatch");
  os << "id,label";
  for (const auto& c : schema.node_columns) os << ',' << c;
  os << '\n';
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    os << bg.node_ids[v] << ',';
    if (g.labels()[v] != Label::unlabeled) os << int(g.labels()[v]);
    for (double x : g.node_features().row(v)) os << ',' << format_double(x);
    os << '\n';
  }
}

inline void write_splits_csv(std::ostream& os, const BundleGraph& bg) {
  os << "id,split\n";
  for (NodeId v = 0; v < bg.graph.num_nodes(); ++v) os << bg.node_ids[v] << ',' << to_string(bg.graph.splits()[v]) << '\n';
}

inline TransactionGraph read_splits_csv(std::istream& is, const BundleGraph& bg, const std::string& name = "splits") {
  std::unordered_map<std::string, NodeId> id_of;
  for (NodeId v = 0; v < bg.node_ids.size(); ++v) id_of.emplace(bg.node_ids[v], v);
  std::vector<Split> splits(bg.graph.num_nodes(), Split::none);
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line) || split_fields(line) != std::vector<std::string>{"id", "split"})
    throw data_error(name + ":1: header must be id,split");
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_fields(line);
    if (f.size() != 2) throw data_error(name + ":" + std::to_string(lineno) + ": expected 2 fields");
    auto it = id_of.find(f[0]);
    if (it == id_of.end()) throw data_error(name + ":" + std::to_string(lineno) + ": unknown node id " + f[0]);
    Split s = Split::none;
    if (f[1] == "train") s = Split::train;
    else if (f[1] == "val") s = Split::val;
    else if (f[1] == "test") s = Split::test;
    else if (f[1] != "none") throw data_error(name + ":" + std::to_string(lineno) + ": bad split '" + f[1] + "'");
    splits[it->second] = s;
  }
  try {
    return bg.graph.with_splits(std::move(splits));
  } catch (const argument_error& e) {
    throw data_error(name + ": " + e.what());
  }
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw data_error("cannot open " + p.string());
  return is;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw data_error("cannot write " + p.string());
  return os;
}

/// Single-graph bundle from CSV files.
inline DatasetBundle ingest_csv(const std::filesystem::path& edge_file,
                                const std::optional<std::filesystem::path>& node_file = std::nullopt,
                                double time = 0.0) {
  DatasetBundle b;
  auto es = open_in(edge_file);
  std::optional<std::ifstream> ns;
  if (node_file) ns = open_in(*node_file);
  BundleGraph bg = read_graph_csv(es, ns ? &*ns : nullptr, b.schema, edge_file.string(),
                                  node_file ? node_file->string() : "nodes");
  bg.name = edge_file.stem().string();
  bg.time = time;
  b.graphs.push_back(std::move(bg));
  b.provenance.push_back({{"step", "ingest"}, {"edges", edge_file.string()},
                          {"nodes", node_file ? json(node_file->string()) : json(nullptr)}});
  return b;
}

/// Adds another graph with the same schema.
inline void append_graph(DatasetBundle& b, DatasetBundle other) {
  if (other.graphs.empty()) return;
  if (!b.graphs.empty() && !(b.schema == other.schema)) throw data_error("bundle graphs must share one schema");
  if (b.graphs.empty()) b.schema = other.schema;
  for (auto& g : other.graphs) b.graphs.push_back(std::move(g));
  for (auto& p : other.provenance) b.provenance.push_back(std::move(p));
}

constexpr int kBundleVersion = 1;

inline void save_bundle(const DatasetBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest{{"format", "linemvgnn-bundle"},
                {"version", kBundleVersion},
                {"schema", {{"node_columns", b.schema.node_columns}, {"edge_columns", b.schema.edge_columns}}},
                {"provenance", b.provenance},
                {"graphs", json::array()}};
  for (std::size_t i = 0; i < b.graphs.size(); ++i) {
    const auto& bg = b.graphs[i];
    const std::string stem = "g" + std::to_string(i);
    {
      auto os = open_out(dir / (stem + ".edges.csv"));
      write_edges_csv(os, bg, b.schema);
    }
    {
      auto os = open_out(dir / (stem + ".nodes.csv"));
      write_nodes_csv(os, bg, b.schema);
    }
    {
      auto os = open_out(dir / (stem + ".splits.csv"));
      write_splits_csv(os, bg);
    }
    manifest["graphs"].push_back({{"name", bg.name},
                                  {"time", bg.time},
                                  {"edges", stem + ".edges.csv"},
                                  {"nodes", stem + ".nodes.csv"},
                                  {"splits", stem + ".splits.csv"}});
  }
  auto os = open_out(dir / "bundle.json");
  os << manifest.dump(2) << '\n';
}

inline DatasetBundle load_bundle(const std::filesystem::path& dir) {
  json manifest;
  try {
    auto is = open_in(dir / "bundle.json");
    manifest = json::parse(is);
  } catch (const json::exception& e) {
    throw data_error("bundle.json: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "linemvgnn-bundle") throw data_error("not a linemvgnn bundle: " + dir.string());
  if (manifest.value("version", 0) != kBundleVersion) throw data_error("unsupported bundle version");
  DatasetBundle b;
  b.provenance = manifest.value("provenance", json::array());
  for (const auto& entry : manifest.at("graphs")) {
    GraphSchema schema;
    auto es = open_in(dir / entry.at("edges").get<std::string>());
    auto ns = open_in(dir / entry.at("nodes").get<std::string>());
    BundleGraph bg = read_graph_csv(es, &ns, schema, entry.at("edges"), entry.at("nodes"));
    bg.name = entry.value("name", "");
    bg.time = entry.value("time", 0.0);
    if (entry.contains("splits")) {
      auto ss = open_in(dir / entry.at("splits").get<std::string>());
      bg.graph = read_splits_csv(ss, bg, entry.at("splits"));
    }
    if (b.graphs.empty()) b.schema = schema;
    else if (!(schema == b.schema)) throw data_error("bundle graphs disagree on schema");
    b.graphs.push_back(std::move(bg));
  }
  return b;
}

/// Orders graphs by time and gives whole graphs to train/val/test. Every
/// split gets at least one graph.
inline DatasetBundle chronological_split(DatasetBundle b, std::array<double, 3> ratios = {0.6, 0.2, 0.2}) {
  const std::size_t n = b.graphs.size();
  if (n < 3) throw data_error("chronological_split: need at least 3 graphs, got " + std::to_string(n));
  std::stable_sort(b.graphs.begin(), b.graphs.end(),
                   [](const BundleGraph& x, const BundleGraph& y) { return x.time < y.time; });
  SplitSizes sz = split_sizes(n, ratios);
  while (sz.val == 0 || sz.test == 0) {
    if (sz.train <= 1) throw data_error("chronological_split: ratios leave a split empty");
    --sz.train;
    if (sz.val == 0) ++sz.val;
    else ++sz.test;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Split s = i < sz.train ? Split::train : (i < sz.train + sz.val ? Split::val : Split::test);
    auto& g = b.graphs[i].graph;
    std::vector<Split> splits(g.num_nodes(), Split::none);
    for (NodeId v = 0; v < g.num_nodes(); ++v)
      if (g.labels()[v] != Label::unlabeled) splits[v] = s;
    g = g.with_splits(std::move(splits));
  }
  b.provenance.push_back({{"step", "chronological_split"}, {"ratios", ratios},
                          {"sizes", {sz.train, sz.val, sz.test}}});
  return b;
}

inline std::vector<TransactionGraph> graphs_of(const DatasetBundle& b) {
  std::vector<TransactionGraph> out;
  for (const auto& bg : b.graphs) out.push_back(bg.graph);
  return out;
}

// ---------------------------------------------------------------------------
// Run configuration (flat key = value text)

struct RunConfig {
  ModelConfig model;
  TrainingConfig training;
  double lr = 0.001;
  SyntheticBenchmarkConfig synthetic;
  StructuralFeatureOptions snf;
  std::array<double, 3> split_ratios{0.6, 0.2, 0.2};
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw argument_error("config " + key + ": expected a boolean, got '" + v + "'");
}

inline double parse_real(const std::string& key, const std::string& v) {
  auto d = parse_double(v);
  if (!d) throw argument_error("config " + key + ": expected a number, got '" + v + "'");
  return *d;
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t x = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw argument_error("config " + key + ": expected a non-negative integer, got '" + v + "'");
  return x;
}

inline std::vector<std::string> parse_list(const std::string& v) {
  std::string s = v;
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  std::vector<std::string> out;
  for (auto& f : split_fields(s))
    if (!f.empty()) out.push_back(f);
  return out;
}

inline SizeRange parse_range(const std::string& key, const std::string& v) {
  auto f = parse_list(v);
  if (f.size() != 2) throw argument_error("config " + key + ": expected min,max");
  return {parse_count(key, f[0]), parse_count(key, f[1])};
}

}  // namespace detail

/// Applies one key. Unknown keys are an error.
inline void apply_setting(RunConfig& rc, const std::string& key, const std::string& value) {
  using namespace detail;
  auto& m = rc.model;
  auto& t = rc.training;
  auto& s = rc.synthetic;
  auto& inj = rc.synthetic.injection;
  if (key == "depth") m.depth = parse_count(key, value);
  else if (key == "hidden_dim") m.hidden_dim = parse_count(key, value);
  else if (key == "combine") {
    if (value == "add") m.combine = Combine::add;
    else if (value == "cat") m.combine = Combine::cat;
    else throw argument_error("config combine: expected add or cat");
  } else if (key == "line_graph_view") m.use_line_graph_view = parse_bool(key, value);
  else if (key == "two_way") m.use_two_way = parse_bool(key, value);
  else if (key == "non_backtracking") m.non_backtracking = parse_bool(key, value);
  else if (key == "refined_mode") m.refined_mode = parse_bool(key, value);
  else if (key == "tau") m.tau = value == "none" || value.empty() ? std::nullopt : std::optional(parse_count(key, value));
  else if (key == "sampling_seed") m.sampling_seed = parse_count(key, value);
  else if (key == "max_epochs") t.max_epochs = parse_count(key, value);
  else if (key == "patience") t.patience = parse_count(key, value);
  else if (key == "lr") rc.lr = parse_real(key, value);
  else if (key == "lr_grid") {
    t.lr_grid.clear();
    for (auto& f : parse_list(value)) t.lr_grid.push_back(parse_real(key, f));
  } else if (key == "tau_grid") {
    t.tau_grid.clear();
    for (auto& f : parse_list(value)) t.tau_grid.push_back(parse_count(key, f));
  } else if (key == "seed") t.seed = parse_count(key, value);
  else if (key == "class_weighting") {
    if (value == "none") t.class_weighting = ClassWeighting::none;
    else if (value == "inv_sqrt") t.class_weighting = ClassWeighting::inv_sqrt;
    else throw argument_error("config class_weighting: expected none or inv_sqrt");
  } else if (key == "eval_every") t.eval_every = parse_count(key, value);
  else if (key == "first_restart") t.first_restart = parse_count(key, value);
  else if (key == "jobs") t.jobs = parse_count(key, value);
  else if (key == "background_nodes") s.background_nodes = parse_count(key, value);
  else if (key == "avg_out_degree") s.avg_out_degree = parse_real(key, value);
  else if (key == "pool_rows") s.pool_rows = parse_count(key, value);
  else if (key == "log_scale_degrees") {
    s.log_scale_degrees = parse_bool(key, value);
    rc.snf.log_scale = s.log_scale_degrees;
  } else if (key == "target_illicit_fraction") inj.target_illicit_fraction = parse_real(key, value);
  else if (key == "pattern_weights") {
    auto f = parse_list(value);
    if (f.size() != 4) throw argument_error("config pattern_weights: expected 4 values");
    for (std::size_t i = 0; i < 4; ++i) inj.pattern_weights[i] = parse_real(key, f[i]);
  } else if (key == "path_size") inj.path_size = parse_range(key, value);
  else if (key == "cycle_size") inj.cycle_size = parse_range(key, value);
  else if (key == "clique_size") inj.clique_size = parse_range(key, value);
  else if (key == "multipartite_layers") {
    auto f = parse_list(value);
    if (f.size() != 3) throw argument_error("config multipartite_layers: expected 3 values");
    for (std::size_t i = 0; i < 3; ++i) inj.multipartite_layers[i] = parse_count(key, f[i]);
  } else if (key == "attachment_edges") inj.attachment_edges = parse_count(key, value);
  else if (key == "split_ratios") {
    auto f = parse_list(value);
    if (f.size() != 3) throw argument_error("config split_ratios: expected 3 values");
    for (std::size_t i = 0; i < 3; ++i) rc.split_ratios[i] = parse_real(key, f[i]);
  } else throw argument_error("config: unknown key '" + key + "'");
}

/// Lines of `key = value`; `#` starts a comment; values may be quoted.
inline void apply_config_text(RunConfig& rc, std::istream& is, const std::string& name = "config") {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::string_view body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw argument_error(name + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key(trim(body.substr(0, eq)));
    std::string value(trim(body.substr(eq + 1)));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    try {
      apply_setting(rc, key, value);
    } catch (const argument_error& e) {
      throw argument_error(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& rc, const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw argument_error("cannot open config " + p.string());
  apply_config_text(rc, is, p.string());
}

// ---------------------------------------------------------------------------
// JSON views

inline json to_json(const ModelConfig& m) {
  return {{"depth", m.depth},
          {"hidden_dim", m.hidden_dim},
          {"combine", to_string(m.combine)},
          {"line_graph_view", m.use_line_graph_view},
          {"two_way", m.use_two_way},
          {"non_backtracking", m.non_backtracking},
          {"refined_mode", m.refined_mode},
          {"node_dim", m.node_dim},
          {"edge_dim", m.edge_dim},
          {"tau", m.tau ? json(*m.tau) : json(nullptr)},
          {"sampling_seed", m.sampling_seed}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  m.depth = j.at("depth");
  m.hidden_dim = j.at("hidden_dim");
  const std::string c = j.at("combine");
  if (c != "add" && c != "cat") throw data_error("model config: bad combine '" + c + "'");
  m.combine = c == "add" ? Combine::add : Combine::cat;
  m.use_line_graph_view = j.at("line_graph_view");
  m.use_two_way = j.at("two_way");
  m.non_backtracking = j.at("non_backtracking");
  m.refined_mode = j.at("refined_mode");
  m.node_dim = j.at("node_dim");
  m.edge_dim = j.at("edge_dim");
  if (!j.at("tau").is_null()) m.tau = j.at("tau").get<std::size_t>();
  m.sampling_seed = j.at("sampling_seed");
  return m;
}

inline json to_json(const TrainingConfig& t) {
  return {{"max_epochs", t.max_epochs},
          {"patience", t.patience},
          {"lr_grid", t.lr_grid},
          {"tau_grid", t.tau_grid},
          {"seed", t.seed},
          {"class_weighting", to_string(t.class_weighting)},
          {"eval_every", t.eval_every},
          {"first_restart", t.first_restart},
          {"jobs", t.jobs},
          {"lr_schedule", "cosine annealing to 0, warm restarts at epochs first_restart * 2^k (10, 20, 40, ...)"},
          {"early_stopping", "validation loss, strict improvement"},
          {"optimizer", {{"name", "adam"}, {"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}}}};
}

inline json to_json(const InjectionConfig& c) {
  return {{"target_illicit_fraction", c.target_illicit_fraction},
          {"pattern_weights", c.pattern_weights},
          {"path_size", {c.path_size.min, c.path_size.max}},
          {"cycle_size", {c.cycle_size.min, c.cycle_size.max}},
          {"clique_size", {c.clique_size.min, c.clique_size.max}},
          {"multipartite_layers", c.multipartite_layers},
          {"attachment_edges", c.attachment_edges},
          {"seed", c.seed}};
}

inline json to_json(const SyntheticBenchmarkConfig& s) {
  return {{"background_nodes", s.background_nodes}, {"avg_out_degree", s.avg_out_degree},
          {"pool_rows", s.pool_rows},               {"injection", to_json(s.injection)},
          {"split", s.split},                       {"log_scale_degrees", s.log_scale_degrees},
          {"seed", s.seed}};
}

inline json to_json(const Metrics& m) {
  return {{"tp", m.tp},
          {"fp", m.fp},
          {"fn", m.fn},
          {"tn", m.tn},
          {"illicit_precision", m.precision},
          {"illicit_recall", m.recall},
          {"illicit_f1", m.f1}};
}

inline json to_json(const RunReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"lr", e.lr},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss ? json(*e.val_loss) : json(nullptr)},
                      {"val_f1", e.val_f1 ? json(*e.val_f1) : json(nullptr)}});
  return {{"status", r.status},
          {"message", r.message},
          {"model", to_json(r.model)},
          {"training", to_json(r.training)},
          {"lr", r.lr},
          {"seed", r.training.seed},
          {"class_weights", r.class_weights},
          {"model_selection", "best validation loss epoch within a run"},
          {"best_epoch", r.best_epoch},
          {"best_val_loss", std::isfinite(r.best_val_loss) ? json(r.best_val_loss) : json(nullptr)},
          {"val", to_json(r.val)},
          {"test", to_json(r.test)},
          {"test_illicit_f1", r.test.f1},
          {"epochs", std::move(epochs)},
          {"wall_clock_seconds", r.wall_clock_seconds}};
}

inline json to_json(const GridReport& g) {
  json cells = json::array();
  for (const auto& c : g.cells)
    cells.push_back({{"lr", c.lr},
                     {"tau", c.tau ? json(*c.tau) : json(nullptr)},
                     {"status", c.report.status},
                     {"message", c.report.message},
                     {"best_epoch", c.report.best_epoch},
                     {"val_illicit_f1", c.report.val.f1},
                     {"best_val_loss",
                      std::isfinite(c.report.best_val_loss) ? json(c.report.best_val_loss) : json(nullptr)},
                     {"test_illicit_f1", c.report.test.f1},
                     {"wall_clock_seconds", c.report.wall_clock_seconds}});
  json out{{"selection_rule", g.selection_rule}, {"cells", std::move(cells)}};
  out["best_cell"] = g.best ? json(*g.best) : json(nullptr);
  if (g.best) out["best"] = to_json(g.cells[*g.best].report);
  return out;
}

/// Drops wall-clock fields so reports of repeated runs compare equal.
inline json strip_timing(json j) {
  if (j.is_object()) {
    j.erase("wall_clock_seconds");
    for (auto& [k, v] : j.items()) v = strip_timing(v);
  } else if (j.is_array()) {
    for (auto& v : j) v = strip_timing(v);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Checkpoints

constexpr int kCheckpointVersion = 1;

inline json checkpoint_json(const ModelConfig& cfg, ModelParameters& mp, bool with_optimizer = false) {
  json params = json::array();
  for (Parameter* p : mp.all()) {
    json entry{{"name", p->name}, {"shape", {p->value.rows(), p->value.cols()}}, {"values", p->value.values()}};
    if (with_optimizer)
      entry["adam"] = {{"step", p->step},
                       {"first_moment", p->first_moment.values()},
                       {"second_moment", p->second_moment.values()}};
    params.push_back(std::move(entry));
  }
  return {{"format", "linemvgnn-checkpoint"},
          {"version", kCheckpointVersion},
          {"model_config", to_json(cfg)},
          {"parameters", std::move(params)}};
}

struct Checkpoint {
  ModelConfig config;
  ModelParameters params;
};

inline Checkpoint checkpoint_from_json(const json& j) {
  if (j.value("format", "") != "linemvgnn-checkpoint") throw data_error("checkpoint: unknown format");
  if (j.value("version", -1) != kCheckpointVersion)
    throw data_error("checkpoint: version " + std::to_string(j.value("version", -1)) + " not supported (expected " +
                     std::to_string(kCheckpointVersion) + ")");
  Checkpoint ck;
  try {
    ck.config = model_config_from_json(j.at("model_config"));
    ck.params = init_parameters(ck.config, 0);
    std::map<std::string, const json*> by_name;
    for (const auto& e : j.at("parameters")) by_name[e.at("name").get<std::string>()] = &e;
    auto all = ck.params.all();
    if (by_name.size() != all.size()) throw data_error("checkpoint: parameter count does not match configuration");
    for (Parameter* p : all) {
      auto it = by_name.find(p->name);
      if (it == by_name.end()) throw data_error("checkpoint: missing parameter " + p->name);
      const json& e = *it->second;
      const auto shape = e.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2 || shape[0] != p->value.rows() || shape[1] != p->value.cols())
        throw data_error("checkpoint: shape mismatch for " + p->name);
      auto values = e.at("values").get<std::vector<double>>();
      if (values.size() != p->value.size()) throw data_error("checkpoint: value count mismatch for " + p->name);
      p->value = Matrix(shape[0], shape[1], std::move(values));
      if (e.contains("adam")) {
        const json& a = e.at("adam");
        p->step = a.at("step");
        p->first_moment = Matrix(shape[0], shape[1], a.at("first_moment").get<std::vector<double>>());
        p->second_moment = Matrix(shape[0], shape[1], a.at("second_moment").get<std::vector<double>>());
      }
    }
  } catch (const json::exception& e) {
    throw data_error(std::string("checkpoint: ") + e.what());
  } catch (const argument_error& e) {
    throw data_error(std::string("checkpoint: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, ModelParameters& mp,
                            bool with_optimizer = false) {
  auto os = open_out(path);
  os << checkpoint_json(cfg, mp, with_optimizer).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto is = open_in(path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw data_error("checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

// ---------------------------------------------------------------------------
// Metric curves

inline void write_metrics_csv(std::ostream& os, const RunReport& r) {
  os << "epoch,lr,train_loss,val_loss,val_f1\n";
  for (const auto& e : r.epochs) {
    os << e.epoch << ',' << format_double(e.lr) << ',' << format_double(e.train_loss) << ',';
    if (e.val_loss) os << format_double(*e.val_loss);
    os << ',';
    if (e.val_f1) os << format_double(*e.val_f1);
    os << '\n';
  }
}

/// Two stacked panels: train/val loss and validation illicit-F1 per epoch.
inline void write_curves_svg(std::ostream& os, const RunReport& r) {
  const double width = 640, panel = 220, margin = 40;
  const double height = 2 * panel + 3 * margin;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const std::size_t n = r.epochs.size();
  double max_loss = 1e-12;
  for (const auto& e : r.epochs) {
    if (std::isfinite(e.train_loss)) max_loss = std::max(max_loss, e.train_loss);
    if (e.val_loss && std::isfinite(*e.val_loss)) max_loss = std::max(max_loss, *e.val_loss);
  }
  auto x_of = [&](std::size_t i) { return margin + (n > 1 ? double(i) / double(n - 1) : 0.0) * (width - 2 * margin); };
  auto polyline = [&](double top, double ymax, auto get, const char* color) {
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < n; ++i) {
      std::optional<double> v = get(r.epochs[i]);
      if (!v || !std::isfinite(*v)) continue;
      os << x_of(i) << ',' << top + panel - (*v / ymax) * panel << ' ';
    }
    os << "\"/>\n";
  };
  auto frame = [&](double top, const std::string& title) {
    os << "<rect x=\"" << margin << "\" y=\"" << top << "\" width=\"" << width - 2 * margin << "\" height=\"" << panel
       << "\" fill=\"none\" stroke=\"#888\"/>\n";
    os << "<text x=\"" << margin << "\" y=\"" << top - 8 << "\" font-family=\"sans-serif\" font-size=\"12\">" << title
       << "</text>\n";
  };
  const double top1 = margin, top2 = 2 * margin + panel;
  frame(top1, "loss (blue: train, red: validation), max " + format_double(max_loss));
  polyline(top1, max_loss, [](const EpochRecord& e) { return std::optional<double>(e.train_loss); }, "#1f77b4");
  polyline(top1, max_loss, [](const EpochRecord& e) { return e.val_loss; }, "#d62728");
  frame(top2, "validation illicit-F1 (0..1), best epoch " + std::to_string(r.best_epoch));
  polyline(top2, 1.0, [](const EpochRecord& e) { return e.val_f1; }, "#2ca02c");
  os << "</svg>\n";
}

}  // namespace lmv
