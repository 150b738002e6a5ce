// linemvgnn: batch command-line driver for ingestion, feature augmentation,
// splitting, anomaly injection, training, evaluation and self-checks.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.

#include <malloc.h>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "linemvgnn.hpp"

namespace fs = std::filesystem;
using namespace lmv;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

RunConfig effective_config(const Globals& g) {
  RunConfig rc;
  if (!g.config.empty()) apply_config_file(rc, g.config);
  if (g.seed) {
    rc.training.seed = *g.seed;
    rc.synthetic.seed = *g.seed;
  }
  return rc;
}

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw argument_error("--out <dir> is required for this command");
  fs::create_directories(g.out);
  return g.out;
}

void write_json(const fs::path& p, const json& j) {
  auto os = open_out(p);
  os << j.dump(2) << '\n';
}

json run_config_json(const RunConfig& rc) {
  return {{"model", to_json(rc.model)},
          {"training", to_json(rc.training)},
          {"lr", rc.lr},
          {"synthetic", to_json(rc.synthetic)},
          {"snf_log_scale", rc.snf.log_scale},
          {"split_ratios", rc.split_ratios}};
}

/// Fills feature widths from the data.
void bind_dims(ModelConfig& m, const std::vector<TransactionGraph>& graphs) {
  if (graphs.empty()) throw data_error("no graphs to train on");
  m.node_dim = graphs.front().node_features().cols();
  m.edge_dim = graphs.front().edge_features().cols();
}

struct Data {
  std::vector<TransactionGraph> graphs;
  json source;
};

/// Bundle from --in, or the synthetic benchmark described by the config.
Data load_data(const std::string& in, const RunConfig& rc) {
  Data d;
  if (!in.empty()) {
    DatasetBundle b = load_bundle(in);
    d.graphs = graphs_of(b);
    d.source = {{"bundle", in}, {"provenance", b.provenance}};
  } else {
    SyntheticBenchmark sb = make_synthetic_benchmark(rc.synthetic);
    d.graphs.push_back(std::move(sb.graph));
    d.source = {{"synthetic", to_json(rc.synthetic)}, {"patterns", sb.patterns.size()}};
  }
  return d;
}

TransactionPool pool_from_bundle(const DatasetBundle& b) {
  if (b.schema.edge_columns.size() < 2)
    throw data_error("inject: edge features need at least timestamp and amount columns");
  TransactionPool pool;
  pool.attribute_names.assign(b.schema.edge_columns.begin() + 2, b.schema.edge_columns.end());
  for (const auto& bg : b.graphs)
    for (EdgeId e = 0; e < bg.graph.num_edges(); ++e) {
      auto r = bg.graph.edge_features().row(e);
      pool.rows.push_back({r[0], r[1], std::vector<double>(r.begin() + 2, r.end())});
    }
  return pool;
}

json patterns_json(const std::vector<InjectedPattern>& ps) {
  json out = json::array();
  for (const auto& p : ps)
    out.push_back({{"kind", to_string(p.kind)},
                   {"nodes", p.nodes},
                   {"edges", p.edges},
                   {"pool_rows", p.pool_rows},
                   {"attachment_edges", p.attachment_edges}});
  return out;
}

void write_run_outputs(const fs::path& out, const RunReport& r) {
  {
    auto os = open_out(out / "metrics.csv");
    write_metrics_csv(os, r);
  }
  auto os = open_out(out / "curves.svg");
  write_curves_svg(os, r);
}

}  // namespace

int main(int argc, char** argv) {
  // Large activations are freed and reallocated every epoch; keep them in
  // the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"LineMVGNN transaction graph classifier"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for training, splitting and synthetic data");
  app.add_option("--config", g.config, "Flat key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory");

  std::function<json()> action;
  std::string in;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Read edge/node CSV files into a bundle");
  std::vector<std::string> edge_files, node_files;
  std::vector<double> times;
  ingest->add_option("--edges", edge_files, "Edge CSV (src,dst,features...); repeat for several graphs")->required();
  ingest->add_option("--nodes", node_files, "Node CSV (id,label,features...), one per --edges");
  ingest->add_option("--time", times, "Timestamp per graph for chronological splitting");
  ingest->callback([&] {
    action = [&] {
      if (!node_files.empty() && node_files.size() != edge_files.size())
        throw argument_error("give either no --nodes or one per --edges");
      if (!times.empty() && times.size() != edge_files.size())
        throw argument_error("give either no --time or one per --edges");
      DatasetBundle b;
      for (std::size_t i = 0; i < edge_files.size(); ++i) {
        std::optional<fs::path> nf;
        if (!node_files.empty()) nf = node_files[i];
        append_graph(b, ingest_csv(edge_files[i], nf, times.empty() ? double(i) : times[i]));
      }
      const fs::path out = require_out(g);
      save_bundle(b, out);
      json graphs = json::array();
      for (const auto& bg : b.graphs)
        graphs.push_back({{"name", bg.name}, {"nodes", bg.graph.num_nodes()}, {"edges", bg.graph.num_edges()}});
      return json{{"command", "ingest"}, {"graphs", graphs}};
    };
  });

  // augment-snf
  auto* snf = app.add_subcommand("augment-snf", "Append in/out degree node features");
  bool log_scale = false;
  snf->add_option("--in", in, "Input bundle directory")->required();
  snf->add_flag("--log-scale", log_scale, "Append log(1 + degree)");
  snf->callback([&] {
    action = [&] {
      RunConfig rc = effective_config(g);
      DatasetBundle b = load_bundle(in);
      StructuralFeatureOptions opt = rc.snf;
      opt.log_scale = opt.log_scale || log_scale;
      for (auto& bg : b.graphs) bg.graph = augment_structural_features(bg.graph, opt);
      b.schema.node_columns.push_back(opt.log_scale ? "log1p_in_degree" : "in_degree");
      b.schema.node_columns.push_back(opt.log_scale ? "log1p_out_degree" : "out_degree");
      b.provenance.push_back({{"step", "augment-snf"}, {"log_scale", opt.log_scale}});
      save_bundle(b, require_out(g));
      return json{{"command", "augment-snf"}, {"log_scale", opt.log_scale}};
    };
  });

  // split
  auto* split = app.add_subcommand("split", "Assign train/val/test masks");
  std::string split_mode;
  std::vector<double> ratios;
  split->add_option("mode", split_mode, "random | chronological")
      ->required()
      ->check(CLI::IsMember({"random", "chronological"}));
  split->add_option("--in", in, "Input bundle directory")->required();
  split->add_option("--ratios", ratios, "train,val,test ratios")->delimiter(',')->expected(3);
  split->callback([&] {
    action = [&] {
      RunConfig rc = effective_config(g);
      std::array<double, 3> r = rc.split_ratios;
      if (!ratios.empty()) r = {ratios[0], ratios[1], ratios[2]};
      DatasetBundle b = load_bundle(in);
      json sizes = json::array();
      if (split_mode == "chronological") {
        b = chronological_split(std::move(b), r);
      } else {
        for (std::size_t i = 0; i < b.graphs.size(); ++i)
          b.graphs[i].graph = random_split(b.graphs[i].graph, r, rc.training.seed + i);
        b.provenance.push_back({{"step", "random_split"}, {"ratios", r}, {"seed", rc.training.seed}});
      }
      for (const auto& bg : b.graphs)
        sizes.push_back({{"name", bg.name},
                         {"train", bg.graph.count_split(Split::train)},
                         {"val", bg.graph.count_split(Split::val)},
                         {"test", bg.graph.count_split(Split::test)}});
      save_bundle(b, require_out(g));
      return json{{"command", "split"}, {"mode", split_mode}, {"ratios", r}, {"graphs", sizes}};
    };
  });

  // linegraph stats
  auto* lgcmd = app.add_subcommand("linegraph", "Line-graph utilities");
  lgcmd->require_subcommand(1);
  auto* lgstats = lgcmd->add_subcommand("stats", "Line-graph size and the degree-product identity");
  bool backtracking = false;
  lgstats->add_option("--in", in, "Input bundle directory")->required();
  lgstats->add_flag("--backtracking", backtracking, "Keep line edges that reverse their predecessor");
  lgstats->callback([&] {
    action = [&] {
      DatasetBundle b = load_bundle(in);
      json graphs = json::array();
      bool all_hold = true;
      for (const auto& bg : b.graphs) {
        const LineGraphStats s = line_graph_stats(bg.graph, !backtracking);
        all_hold = all_hold && s.identity_holds;
        graphs.push_back({{"name", bg.name},
                          {"nodes", s.graph_nodes},
                          {"edges", s.graph_edges},
                          {"line_nodes", s.line_nodes},
                          {"line_edges", s.line_edges},
                          {"degree_product_sum", s.degree_product_sum},
                          {"reversal_pairs", s.reversal_pairs},
                          {"identity_holds", s.identity_holds}});
      }
      std::cout << "identity " << (all_hold ? "holds" : "FAILS") << " on " << b.graphs.size() << " graph(s)\n";
      if (!all_hold) throw numeric_error("line-graph edge count does not match the degree-product identity");
      return json{{"command", "linegraph stats"}, {"non_backtracking", !backtracking}, {"graphs", graphs}};
    };
  });

  // inject
  auto* inj = app.add_subcommand("inject", "Inject laundering patterns (synthetic background unless --in)");
  inj->add_option("--in", in, "Background bundle directory");
  inj->callback([&] {
    action = [&] {
      RunConfig rc = effective_config(g);
      const fs::path out = require_out(g);
      DatasetBundle b;
      json patterns = json::array();
      if (in.empty()) {
        SyntheticBenchmark sb = make_synthetic_benchmark(rc.synthetic);
        const TransactionPool pool = synthetic_pool(1, 0);
        b.schema.edge_columns = {"timestamp", "amount"};
        b.schema.edge_columns.insert(b.schema.edge_columns.end(), pool.attribute_names.begin(),
                                     pool.attribute_names.end());
        b.schema.node_columns = {rc.synthetic.log_scale_degrees ? "log1p_in_degree" : "in_degree",
                                 rc.synthetic.log_scale_degrees ? "log1p_out_degree" : "out_degree"};
        BundleGraph bg{"synthetic", 0.0, std::move(sb.graph), {}};
        for (NodeId v = 0; v < bg.graph.num_nodes(); ++v) bg.node_ids.push_back(std::to_string(v));
        b.graphs.push_back(std::move(bg));
        b.provenance.push_back({{"step", "synthetic_benchmark"}, {"config", to_json(rc.synthetic)}});
        patterns = patterns_json(sb.patterns);
      } else {
        b = load_bundle(in);
        const TransactionPool pool = pool_from_bundle(b);
        for (std::size_t i = 0; i < b.graphs.size(); ++i) {
          auto& bg = b.graphs[i];
          InjectionConfig icfg = rc.synthetic.injection;
          icfg.seed = rc.synthetic.seed + i;
          std::vector<Label> labels = bg.graph.labels();
          for (auto& l : labels)
            if (l == Label::unlabeled) l = Label::licit;
          InjectionResult ir = inject(bg.graph.with_labels(std::move(labels)), pool, icfg);
          for (NodeId v = bg.node_ids.size(); v < ir.graph.num_nodes(); ++v)
            bg.node_ids.push_back("injected_" + std::to_string(v));
          bg.graph = std::move(ir.graph);
          patterns.push_back({{"graph", bg.name}, {"patterns", patterns_json(ir.patterns)}});
        }
        b.provenance.push_back({{"step", "inject"}, {"config", to_json(rc.synthetic.injection)},
                                {"seed", rc.synthetic.seed}});
      }
      save_bundle(b, out);
      write_json(out / "patterns.json", patterns);
      std::size_t illicit = 0, nodes = 0;
      for (const auto& bg : b.graphs) {
        illicit += count_illicit(bg.graph);
        nodes += bg.graph.num_nodes();
      }
      return json{{"command", "inject"},
                  {"nodes", nodes},
                  {"illicit", illicit},
                  {"illicit_fraction", nodes ? double(illicit) / double(nodes) : 0.0}};
    };
  });

  // train
  auto* train = app.add_subcommand("train", "Train one model (synthetic benchmark unless --in)");
  std::optional<double> lr_flag;
  train->add_option("--in", in, "Bundle directory with split masks");
  train->add_option("--lr", lr_flag, "Base learning rate");
  train->callback([&] {
    action = [&] {
      RunConfig rc = effective_config(g);
      if (lr_flag) rc.lr = *lr_flag;
      const fs::path out = require_out(g);
      Data d = load_data(in, rc);
      bind_dims(rc.model, d.graphs);
      try {
        TrainResult r = train_once(d.graphs, rc.model, rc.training, rc.lr);
        save_checkpoint(out / "checkpoint.json", rc.model, r.params);
        write_run_outputs(out, r.report);
        json rep = to_json(r.report);
        rep["command"] = "train";
        rep["data"] = d.source;
        rep["config"] = run_config_json(rc);
        std::cout << "test illicit-F1 " << r.report.test.f1 << " (best epoch " << r.report.best_epoch << ")\n";
        return rep;
      } catch (const training_diverged& e) {
        write_run_outputs(out, e.report);
        json rep = to_json(e.report);
        rep["command"] = "train";
        rep["config"] = run_config_json(rc);
        write_json(out / "report.json", rep);
        throw;
      }
    };
  });

  // gridsearch
  auto* grid = app.add_subcommand("gridsearch", "Train over the lr x tau grid and keep the best cell");
  std::optional<std::size_t> jobs;
  grid->add_option("--in", in, "Bundle directory with split masks");
  grid->add_option("--jobs", jobs, "Concurrent training runs")->check(CLI::PositiveNumber);
  grid->callback([&] {
    action = [&] {
      RunConfig rc = effective_config(g);
      if (jobs) rc.training.jobs = *jobs;
      const fs::path out = require_out(g);
      Data d = load_data(in, rc);
      bind_dims(rc.model, d.graphs);
      GridReport gr = grid_search(d.graphs, rc.model, rc.training);
      json rep = to_json(gr);
      rep["command"] = "gridsearch";
      rep["data"] = d.source;
      rep["config"] = run_config_json(rc);
      if (!gr.best) {
        write_json(out / "report.json", rep);
        throw numeric_error("gridsearch: every cell failed or diverged");
      }
      ModelConfig best_cfg = rc.model;
      best_cfg.tau = gr.cells[*gr.best].tau;
      save_checkpoint(out / "checkpoint.json", best_cfg, *gr.best_params);
      write_run_outputs(out, gr.cells[*gr.best].report);
      std::cout << gr.cells.size() << " cells, best lr " << gr.cells[*gr.best].lr << ", test illicit-F1 "
                << gr.cells[*gr.best].report.test.f1 << "\n";
      return rep;
    };
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a mask");
  std::string checkpoint, mask = "test";
  ev->add_option("--in", in, "Bundle directory with split masks");
  ev->add_option("--checkpoint", checkpoint, "checkpoint.json")->required()->check(CLI::ExistingFile);
  ev->add_option("--mask", mask, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));
  ev->callback([&] {
    action = [&] {
      RunConfig rc = effective_config(g);
      Checkpoint ck = load_checkpoint(checkpoint);
      Data d = load_data(in, rc);
      const Split s = mask == "train" ? Split::train : mask == "val" ? Split::val : Split::test;
      const Metrics m = evaluate(d.graphs, ck.params, ck.config, s);
      std::cout << mask << " illicit-F1 " << m.f1 << "\n";
      return json{{"command", "eval"}, {"mask", mask}, {"metrics", to_json(m)}, {"model", to_json(ck.config)},
                  {"data", d.source}};
    };
  });

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of a full model loss");
  std::size_t gc_edges = 30;
  double gc_tol = 1e-4;
  gc->add_option("--edges", gc_edges, "Maximum edges of the random graph");
  gc->add_option("--tolerance", gc_tol, "Maximum relative error");
  gc->callback([&] {
    action = [&] {
      RunConfig rc = effective_config(g);
      ModelConfig m = rc.model;
      m.node_dim = 3;
      m.edge_dim = 2;
      m.hidden_dim = std::min<std::size_t>(m.hidden_dim, 6);
      const GradCheckResult r = model_gradient_check(m, gc_edges, rc.training.seed);
      std::cout << "max relative error " << r.max_rel_error << " over " << r.checked << " of " << r.total
                << " entries\n";
      json rep{{"command", "gradcheck"},
               {"model", to_json(m)},
               {"max_relative_error", r.max_rel_error},
               {"max_absolute_error", r.max_abs_error},
               {"checked", r.checked},
               {"total", r.total},
               {"tolerance", gc_tol},
               {"passed", r.passed(gc_tol)}};
      if (!r.passed(gc_tol)) {
        if (!g.out.empty()) write_json(fs::path(g.out) / "report.json", rep);
        throw numeric_error("gradcheck: relative error " + std::to_string(r.max_rel_error) + " above tolerance");
      }
      return rep;
    };
  });

  // equivcheck
  auto* eq = app.add_subcommand("equivcheck", "Explicit line graph vs direct edge propagation");
  std::size_t eq_edges = 200, eq_nodes = 60, eq_trials = 50;
  double eq_tol = 1e-9;
  eq->add_option("--edges", eq_edges, "Maximum edges per random graph");
  eq->add_option("--nodes", eq_nodes, "Maximum nodes per random graph");
  eq->add_option("--trials", eq_trials, "Number of random graphs");
  eq->add_option("--tolerance", eq_tol, "Maximum absolute difference");
  eq->callback([&] {
    action = [&] {
      RunConfig rc = effective_config(g);
      const EquivalenceReport r = equivalence_check(eq_trials, eq_edges, eq_nodes, rc.training.seed);
      std::cout << "max |delta| " << r.max_abs_diff << " over " << r.trials << " trials\n";
      json rep{{"command", "equivcheck"},    {"trials", r.trials},          {"max_abs_diff", r.max_abs_diff},
               {"tolerance", eq_tol},        {"largest_graph_edges", r.max_edges_seen},
               {"passed", r.max_abs_diff <= eq_tol}};
      if (r.max_abs_diff > eq_tol) {
        if (!g.out.empty()) write_json(fs::path(g.out) / "report.json", rep);
        throw numeric_error("equivcheck: outputs differ by " + std::to_string(r.max_abs_diff));
      }
      return rep;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n" << app.help();
    return kUsage;
  }

  try {
    json rep = action();
    if (!g.out.empty()) {
      fs::create_directories(g.out);
      write_json(fs::path(g.out) / "report.json", rep);
    }
    return kOk;
  } catch (const argument_error& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return kUsage;
  } catch (const data_error& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return kData;
  } catch (const numeric_error& e) {
    std::cerr << "error: numeric: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return kData;
  }
}
