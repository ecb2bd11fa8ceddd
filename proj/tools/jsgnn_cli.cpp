// Command-line front end: hyperbolicity analysis, synthetic graph generation,
// training and the multi-run experiment drivers.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <jsgnn/jsgnn.hpp>

namespace {

using nlohmann::json;

enum ExitCode { kOk = 0, kFailure = 1, kInvalid = 2, kDiverged = 3 };

struct GraphInputs {
  std::string graph;
  std::string features;
  std::string labels;
  bool weighted = false;
  bool remap = false;
};

void add_graph_inputs(CLI::App* cmd, GraphInputs& in, bool with_node_data) {
  cmd->add_option("--graph", in.graph, "Edge list (u v [w] per line, '#' comments)")->required();
  cmd->add_flag("--weighted", in.weighted, "Read a third weight column");
  cmd->add_flag("--remap", in.remap, "Map arbitrary node ids to 0..n-1 in first-seen order");
  if (with_node_data) {
    cmd->add_option("--features", in.features, "CSV node_id,f0,f1,...");
    cmd->add_option("--labels", in.labels, "CSV node_id,label");
  }
}

jsgnn::WeightedGraph load_graph(const GraphInputs& in) {
  auto loaded = jsgnn::load_edge_list(in.graph, {in.weighted, in.remap});
  auto& g = loaded.graph;
  if (!in.features.empty()) g.set_features(jsgnn::load_features_csv(in.features, g.num_nodes()));
  if (!in.labels.empty()) g.set_labels(jsgnn::load_labels_csv(in.labels, g.num_nodes()));
  return std::move(g);
}

struct Overrides {
  std::string config;
  std::optional<double> lr, omega_nu, omega_was, dropout;
  std::optional<std::size_t> k, layers, hidden, max_epochs, patience;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::size_t workers = 1;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "TrainConfig JSON file");
  cmd->add_option("--lr", o.lr, "Learning rate");
  cmd->add_option("--omega-nu", o.omega_nu, "Weight of the non-uniformity term");
  cmd->add_option("--omega-was", o.omega_was, "Weight of the hyperbolicity alignment term");
  cmd->add_option("--dropout", o.dropout, "Dropout rate in [0, 1)");
  cmd->add_option("--k", o.k, "Hop radius of the local neighbourhoods");
  cmd->add_option("--layers", o.layers, "Number of layers");
  cmd->add_option("--hidden", o.hidden, "Hidden width");
  cmd->add_option("--max-epochs", o.max_epochs, "Epoch cap");
  cmd->add_option("--patience", o.patience, "Early-stopping patience");
  cmd->add_option("--seed", o.seed, "Run seed");
  cmd->add_option("--mode", o.mode, "Hyperbolicity flavour: inf or one");
  cmd->add_option("--workers", o.workers, "Worker threads for multi-run drivers and delta profiles");
}

jsgnn::TrainConfig build_config(const Overrides& o, jsgnn::Task task) {
  json j = json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw jsgnn::ValidationError("cannot open config '" + o.config + "'");
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw jsgnn::ValidationError("config '" + o.config + "': " + e.what());
    }
  }
  if (j.contains("task") && j["task"] != jsgnn::to_string(task))
    throw jsgnn::ValidationError("config task does not match the subcommand");
  j["task"] = jsgnn::to_string(task);
  auto c = jsgnn::train_config_from_json(j);
  if (o.lr) c.lr = *o.lr;
  if (o.omega_nu) c.omega_nu = *o.omega_nu;
  if (o.omega_was) c.omega_was = *o.omega_was;
  if (o.dropout) c.dropout = *o.dropout;
  if (o.k) c.k = *o.k;
  if (o.layers) c.layers = *o.layers;
  if (o.hidden) c.hidden = *o.hidden;
  if (o.max_epochs) c.max_epochs = *o.max_epochs;
  if (o.patience) c.patience = *o.patience;
  if (o.seed) c.seed = *o.seed;
  if (o.mode) c.delta_mode = jsgnn::delta_mode_from_string(*o.mode);
  c.workers = o.workers;
  c.validate();
  return c;
}

void write_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw jsgnn::ValidationError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw jsgnn::ValidationError("cannot write '" + path + "'");
  return out;
}

void write_trace_csv(const std::string& path, const jsgnn::RunReport& r) {
  auto out = open_output(path);
  out << "epoch,loss,val_metric\n";
  for (std::size_t e = 0; e < r.loss_trace.size(); ++e)
    out << e + 1 << "," << r.loss_trace[e] << "," << r.val_trace[e] << "\n";
}

void write_variants_csv(const std::string& path, const std::vector<std::pair<std::string, jsgnn::SeedRuns>>& rows) {
  auto out = open_output(path);
  out << "variant,test_mean,test_std,val_mean,val_std\n";
  for (const auto& [name, runs] : rows)
    out << name << "," << runs.test.mean << "," << runs.test.std << "," << runs.val.mean << "," << runs.val.std
        << "\n";
}

json summary_json(const jsgnn::SeedRuns& runs) {
  json reports = json::array();
  for (const auto& r : runs.reports) reports.push_back(jsgnn::to_json(r));
  return {{"test_mean", runs.test.mean},
          {"test_std", runs.test.std},
          {"val_mean", runs.val.mean},
          {"val_std", runs.val.std},
          {"runs", reports}};
}

std::vector<std::uint64_t> seed_list(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> s;
  for (std::size_t i = 0; i < count; ++i) s.push_back(first + i);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint Euclidean/hyperbolic graph attention: analysis and training"};
  app.require_subcommand(1);

  // analyze
  GraphInputs an_in;
  std::size_t an_k = 2;
  std::string an_mode = "inf", an_out, an_hist;
  double an_bin = jsgnn::kDefaultBinWidth;
  std::size_t an_workers = 1;
  std::uint64_t an_seed = 0;
  auto* analyze = app.add_subcommand("analyze", "Per-node local hyperbolicity profile");
  add_graph_inputs(analyze, an_in, false);
  analyze->add_option("--k", an_k, "Hop radius");
  analyze->add_option("--mode", an_mode, "inf or one");
  analyze->add_option("--out", an_out, "Profile JSON (stdout when omitted)");
  analyze->add_option("--hist", an_hist, "Histogram CSV");
  analyze->add_option("--bin-width", an_bin, "Histogram bin width");
  analyze->add_option("--workers", an_workers, "Worker threads");
  analyze->add_option("--seed", an_seed, "Seed for sampled averages on large neighbourhoods");

  // generate
  std::string gen_out, gen_labels;
  std::size_t rows = 5, cols = 5, branching = 2, depth = 3;
  auto* generate = app.add_subcommand("generate", "Write a synthetic graph as an edge list");
  generate->require_subcommand(1);
  generate->add_option("--out", gen_out, "Edge list path (stdout when omitted)");
  generate->add_option("--labels", gen_labels, "Also write region labels as CSV (combined only)");
  auto* gen_lattice = generate->add_subcommand("lattice", "rows x cols grid");
  gen_lattice->add_option("--rows", rows);
  gen_lattice->add_option("--cols", cols);
  auto* gen_tree = generate->add_subcommand("tree", "Complete tree in breadth-first numbering");
  gen_tree->add_option("--branching", branching);
  gen_tree->add_option("--depth", depth);
  auto* gen_combined = generate->add_subcommand("combined", "Lattice with a tree glued corner-to-root (lattice node 0)");
  gen_combined->add_option("--rows", rows);
  gen_combined->add_option("--cols", cols);
  gen_combined->add_option("--branching", branching);
  gen_combined->add_option("--depth", depth);

  // training-style commands share inputs
  GraphInputs tr_in;
  Overrides ov;
  std::string tr_out, tr_checkpoint, tr_trace, tr_csv;
  std::size_t repeat = 1;
  std::string task_name = "nc";
  auto add_training = [&](CLI::App* cmd, bool single_run, bool task_choice) {
    add_graph_inputs(cmd, tr_in, true);
    add_overrides(cmd, ov);
    cmd->add_option("--out", tr_out, "Report JSON (stdout when omitted)");
    cmd->add_option("--repeat", repeat, "Number of consecutive seeds to run")->check(CLI::PositiveNumber);
    if (single_run) {
      cmd->add_option("--checkpoint", tr_checkpoint, "Best parameters as JSON");
      cmd->add_option("--trace", tr_trace, "Per-epoch loss/metric CSV");
    } else {
      cmd->add_option("--csv", tr_csv, "Summary table CSV");
    }
    if (task_choice) cmd->add_option("--task", task_name, "nc or lp");
  };
  auto* train_nc = app.add_subcommand("train-nc", "Train for node classification");
  add_training(train_nc, true, false);
  auto* train_lp = app.add_subcommand("train-lp", "Train for link prediction");
  add_training(train_lp, true, false);
  auto* ablate = app.add_subcommand("ablate", "Full model versus removing NU, W2 or both");
  add_training(ablate, false, true);
  auto* compare = app.add_subcommand("compare-modes", "distribution / pairwise / mean alignment");
  add_training(compare, false, true);

  // report
  GraphInputs rp_in;
  std::string rp_run, rp_out, rp_csv;
  auto* report = app.add_subcommand("report", "Hyperbolicity diagnostics of a saved run");
  add_graph_inputs(report, rp_in, false);
  report->add_option("--run", rp_run, "RunReport JSON")->required();
  report->add_option("--out", rp_out, "Diagnostics JSON (stdout when omitted)");
  report->add_option("--csv", rp_csv, "Per-node beta and normalised delta CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (analyze->parsed()) {
      const auto g = load_graph(an_in);
      jsgnn::ProfileOptions opts;
      opts.workers = an_workers;
      opts.seed = an_seed;
      const auto profile = jsgnn::local_profile(g, an_k, jsgnn::delta_mode_from_string(an_mode), opts);
      write_json(an_out, jsgnn::to_json(profile));
      if (!an_hist.empty()) {
        auto out = open_output(an_hist);
        jsgnn::write_histogram_csv(out, jsgnn::histogram(jsgnn::to_distribution(profile), an_bin));
      }
    } else if (generate->parsed()) {
      jsgnn::WeightedGraph g;
      std::optional<std::size_t> lattice_size;
      if (gen_lattice->parsed()) {
        g = jsgnn::generate_lattice(rows, cols);
      } else if (gen_tree->parsed()) {
        g = jsgnn::generate_tree(branching, depth);
      } else {
        g = jsgnn::generate_combined(jsgnn::generate_lattice(rows, cols), jsgnn::generate_tree(branching, depth), 0);
        lattice_size = rows * cols;
      }
      if (gen_out.empty() || gen_out == "-") {
        jsgnn::write_edge_list(std::cout, g, false);
      } else {
        auto out = open_output(gen_out);
        jsgnn::write_edge_list(out, g, false);
      }
      if (!gen_labels.empty()) {
        if (!lattice_size) throw jsgnn::ValidationError("--labels is only meaningful for combined graphs");
        std::vector<int> labels(g.num_nodes());
        for (std::size_t v = 0; v < labels.size(); ++v) labels[v] = v < *lattice_size ? 0 : 1;
        auto out = open_output(gen_labels);
        jsgnn::write_labels_csv(out, labels);
      }
    } else if (train_nc->parsed() || train_lp->parsed()) {
      const auto g = load_graph(tr_in);
      const auto cfg = build_config(ov, train_nc->parsed() ? jsgnn::Task::nc : jsgnn::Task::lp);
      if (repeat == 1) {
        auto res = jsgnn::train(g, cfg);
        write_json(tr_out, jsgnn::to_json(res.report));
        if (!tr_checkpoint.empty()) write_json(tr_checkpoint, jsgnn::to_json(res.best_params));
        if (!tr_trace.empty()) write_trace_csv(tr_trace, res.report);
      } else {
        if (!tr_checkpoint.empty() || !tr_trace.empty())
          throw jsgnn::ValidationError("--checkpoint and --trace need a single run");
        write_json(tr_out, summary_json(jsgnn::repeat_seeds(g, cfg, seed_list(cfg.seed, repeat), ov.workers)));
      }
    } else if (ablate->parsed() || compare->parsed()) {
      const auto g = load_graph(tr_in);
      const auto cfg = build_config(ov, jsgnn::task_from_string(task_name));
      const auto variants = ablate->parsed() ? jsgnn::ablation_variants(cfg) : jsgnn::comparison_variants(cfg);
      json out = json::object();
      std::vector<std::pair<std::string, jsgnn::SeedRuns>> rows;
      for (const auto& [name, vc] : variants) {
        auto runs = jsgnn::repeat_seeds(g, vc, seed_list(vc.seed, repeat), ov.workers);
        out[name] = summary_json(runs);
        rows.emplace_back(name, std::move(runs));
      }
      write_json(tr_out, out);
      if (!tr_csv.empty()) write_variants_csv(tr_csv, rows);
    } else if (report->parsed()) {
      std::ifstream in(rp_run);
      if (!in) throw jsgnn::ValidationError("cannot open run report '" + rp_run + "'");
      json j;
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw jsgnn::ValidationError("run report '" + rp_run + "': " + e.what());
      }
      const auto run = jsgnn::run_report_from_json(j);
      auto g = load_graph(rp_in);
      if (run.config.task == jsgnn::Task::lp) {
        const auto split = jsgnn::split_edges(g, run.config.split, run.config.effective_split_seed());
        g = g.with_edges(split.train);
      }
      const auto profile = jsgnn::cached_profile(g, run.config.k, run.config.delta_mode, run.config.cache_dir);
      const auto mu = jsgnn::normalize_delta(profile);
      const auto diag = jsgnn::analyze_hyperbolicities(run, mu);
      write_json(rp_out, {{"w2_nu_unif", diag.w2_nu_unif}, {"w2_nu_mu", diag.w2_nu_mu}, {"nodes", mu.size()}});
      if (!rp_csv.empty()) {
        auto out = open_output(rp_csv);
        out << "node,delta,mu";
        for (std::size_t l = 0; l < run.beta_samples.size(); ++l) out << ",beta_r_layer" << l;
        out << "\n";
        for (std::size_t v = 0; v < mu.size(); ++v) {
          out << v << "," << profile.delta[v] << "," << mu[v];
          for (const auto& layer : run.beta_samples) out << "," << layer.at(v);
          out << "\n";
        }
      }
    }
  } catch (const jsgnn::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const jsgnn::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const jsgnn::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const jsgnn::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
