// Command-line runner: partitioning, bootstrap, timeline runs for the five
// task regimes, hyperparameter sweeps, gradient checking, unlearning audits,
// and dataset conversion.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 invariant violation.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "bgml/engine.hpp"
#include "bgml/graph_io.hpp"
#include "bgml/harness.hpp"

namespace fs = std::filesystem;
using namespace bgml;

namespace {

struct CliOptions {
  RunConfig run;
  std::string method = "bekm";
  std::string aggregation = "mean";
  std::string reaware = "on_retrain";
  std::string regime = "regular";
};

void add_dataset_options(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--nodes", opt.run.nodes_file, "nodes TSV file");
  cmd->add_option("--edges", opt.run.edges_file, "edges TSV file");
  cmd->add_option("--sbm-blocks", opt.run.sbm_blocks, "SBM: number of blocks");
  cmd->add_option("--sbm-per-block", opt.run.sbm_per_block, "SBM: nodes per block");
  cmd->add_option("--sbm-p-in", opt.run.sbm_p_in, "SBM: intra-block edge probability");
  cmd->add_option("--sbm-p-out", opt.run.sbm_p_out, "SBM: inter-block edge probability");
  cmd->add_option("--sbm-fdim", opt.run.sbm_feature_dim, "SBM: feature dimension");
  cmd->add_option("--sbm-signal", opt.run.sbm_signal, "SBM: block mean shift");
  cmd->add_option("--sbm-seed", opt.run.sbm_seed, "SBM: generator seed");
}

void add_engine_options(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--method", opt.method, "partition method: blpa | bekm");
  cmd->add_option("--k", opt.run.engine.k, "first-level shard count");
  cmd->add_option("--l", opt.run.engine.l, "second-level shard count");
  cmd->add_option("--delta1", opt.run.engine.delta1, "first-level cap (0 = auto)");
  cmd->add_option("--delta2", opt.run.engine.delta2, "second-level cap (0 = auto)");
  cmd->add_option("--tau", opt.run.engine.tau, "supported sub-model count");
  cmd->add_option("--mu", opt.run.engine.mu, "neighbors per arriving node");
  cmd->add_option("--lambda", opt.run.engine.support_weight, "support blend weight");
  cmd->add_option("--hidden", opt.run.engine.hidden, "hidden width");
  cmd->add_option("--lr", opt.run.engine.lr, "SGD learning rate");
  cmd->add_option("--epochs", opt.run.engine.epochs, "training epochs");
  cmd->add_option("--fcap", opt.run.engine.feature_cap, "feature count cap");
  cmd->add_option("--embed-dim", opt.run.engine.embed_dim, "embedding dimension");
  cmd->add_option("--partition-seed", opt.run.engine.partition_seed, "partition seed");
  cmd->add_option("--model-seed", opt.run.engine.model_seed, "model seed");
  cmd->add_option("--aggregation", opt.aggregation, "mean | majority");
  cmd->add_option("--reaware", opt.reaware, "always | on_retrain | never");
  cmd->add_flag("--freeze-attention", opt.run.engine.freeze_attention,
                "skip attention parameter updates");
  cmd->add_option("--max-iters", opt.run.engine.max_iters, "partition iteration cap");
}

void add_run_options(CLI::App* cmd, CliOptions& opt) {
  add_dataset_options(cmd, opt);
  add_engine_options(cmd, opt);
  cmd->add_option("--train-frac", opt.run.train_frac, "training fraction");
  cmd->add_option("--valid-frac", opt.run.valid_frac_of_train, "validation fraction of train");
  cmd->add_option("--split-seed", opt.run.split_seed, "split seed");
  cmd->add_option("--regime", opt.regime,
                  "regular | memory | unlearning | data_incremental | class_incremental");
  cmd->add_option("--timestamps", opt.run.timestamps, "timeline length");
  cmd->add_option("--fr-per-t", opt.run.fr_per_t, "forgetting requests per timestamp");
  cmd->add_option("--ir-per-t", opt.run.ir_per_t, "incremental requests per timestamp");
  cmd->add_option("--withheld", opt.run.withheld_classes,
                  "classes absent at t0 (class_incremental)");
  cmd->add_option("--events-seed", opt.run.events_seed, "event generator seed");
  cmd->add_option("--events", opt.run.events_file, "events JSONL file (replaces generators)");
  cmd->add_option("--out", opt.run.out_dir, "output directory");
  cmd->add_option("--checkpoint-every", opt.run.checkpoint_every,
                  "snapshot state every N timestamps");
  cmd->set_config("--config", "", "key=value config file; flags override");
}

void finalize(CliOptions& opt) {
  opt.run.engine.method = partition_method_from_string(opt.method);
  opt.run.engine.aggregation = aggregation_from_string(opt.aggregation);
  opt.run.engine.reaware = reaware_from_string(opt.reaware);
  opt.run.regime = regime_from_string(opt.regime);
}

void print_report(const MetricsReport& report) {
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& row = report.rows[i];
    std::printf("t=%d micro_f1=%.4f forgetting=%.4f n_eval=%d wall_ms=%.0f\n", row.t,
                row.micro_f1, report.forgetting[i], row.n_eval, row.wall_ms);
  }
  std::printf("baseline majority=%.4f logistic=%.4f\n", report.baseline_majority_f1,
              report.baseline_logistic_f1);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph memory learning engine"};
  app.require_subcommand(1);

  CliOptions opt;

  auto* cmd_partition = app.add_subcommand("partition", "build and save a shard hierarchy");
  std::string hierarchy_out = "hierarchy.json";
  add_dataset_options(cmd_partition, opt);
  add_engine_options(cmd_partition, opt);
  cmd_partition->add_option("--out", hierarchy_out, "output hierarchy JSON path");
  cmd_partition->set_config("--config", "", "key=value config file; flags override");

  auto* cmd_bootstrap = app.add_subcommand("bootstrap", "train the t0 ensemble and save state");
  add_run_options(cmd_bootstrap, opt);

  auto* cmd_run = app.add_subcommand("run", "run a task regime over a timeline");
  add_run_options(cmd_run, opt);

  auto* cmd_sweep = app.add_subcommand("sweep", "run a hyperparameter sweep");
  std::string sweep_axis;
  std::vector<double> sweep_values;
  add_run_options(cmd_sweep, opt);
  cmd_sweep->add_option("--axis", sweep_axis, "k | l | tau | mu | fr | ir")->required();
  cmd_sweep->add_option("--values", sweep_values, "axis values")->required();

  auto* cmd_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  int gc_pairs = 50;
  double gc_h = 1e-5, gc_tol = 1e-4;
  std::uint64_t gc_seed = 1;
  int gc_fdim = 8, gc_hidden = 16, gc_classes = 3, gc_channels = 1, gc_neighbors = 3;
  cmd_gradcheck->add_option("--pairs", gc_pairs, "random (model, grain) pairs");
  cmd_gradcheck->add_option("--h", gc_h, "finite-difference step");
  cmd_gradcheck->add_option("--tol", gc_tol, "max relative error tolerance");
  cmd_gradcheck->add_option("--seed", gc_seed, "generator seed");
  cmd_gradcheck->add_option("--fdim", gc_fdim, "grain feature dimension");
  cmd_gradcheck->add_option("--hidden", gc_hidden, "hidden width");
  cmd_gradcheck->add_option("--classes", gc_classes, "class count");
  cmd_gradcheck->add_option("--channels", gc_channels, "channels");
  cmd_gradcheck->add_option("--neighbors", gc_neighbors, "neighbors per grain");

  auto* cmd_audit = app.add_subcommand("audit", "unlearning-soundness scan of a state dir");
  std::string audit_dir;
  cmd_audit->add_option("--state", audit_dir, "state directory")->required();

  auto* cmd_convert = app.add_subcommand("convert", "content/cites dataset to TSV formats");
  std::string cv_content, cv_cites, cv_nodes, cv_edges;
  cmd_convert->add_option("--content", cv_content, "content file")->required();
  cmd_convert->add_option("--cites", cv_cites, "cites file")->required();
  cmd_convert->add_option("--out-nodes", cv_nodes, "output nodes TSV")->required();
  cmd_convert->add_option("--out-edges", cv_edges, "output edges TSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (cmd_partition->parsed()) {
      finalize(opt);
      GraphStore graph = opt.run.use_files()
                             ? load_dataset(opt.run.nodes_file, opt.run.edges_file)
                             : generate_sbm(opt.run.sbm_blocks, opt.run.sbm_per_block,
                                            opt.run.sbm_p_in, opt.run.sbm_p_out,
                                            opt.run.sbm_feature_dim, opt.run.sbm_signal,
                                            opt.run.sbm_seed);
      EmbeddingIndex emb = embed_nodes(graph, opt.run.engine.embed_dim,
                                       opt.run.engine.partition_seed);
      PartitionHierarchy hier = build_hierarchy(
          graph, emb, opt.run.engine.method, opt.run.engine.k, opt.run.engine.l,
          opt.run.engine.delta1, opt.run.engine.delta2, opt.run.engine.partition_seed,
          opt.run.engine.max_iters);
      hier.check_invariants(emb);
      std::ofstream f(hierarchy_out);
      if (!f) throw DataError("cannot write " + hierarchy_out);
      f << hierarchy_to_json(hier) << '\n';
      std::printf("hierarchy written to %s (k=%d, l=%d, delta1=%d, delta2=%d)\n",
                  hierarchy_out.c_str(), hier.k, hier.l, hier.delta1, hier.delta2);
    } else if (cmd_bootstrap->parsed() || cmd_run->parsed()) {
      finalize(opt);
      if (cmd_bootstrap->parsed()) opt.run.regime = TaskRegime::Regular;
      if (opt.run.out_dir.empty()) opt.run.out_dir = "bgml_out";
      MetricsReport report = run_task(opt.run);
      print_report(report);
      std::printf("artifacts in %s\n", opt.run.out_dir.c_str());
    } else if (cmd_sweep->parsed()) {
      finalize(opt);
      auto rows = sweep(opt.run, sweep_axis, sweep_values);
      std::string out = opt.run.out_dir.empty() ? "sweep.csv"
                                                : (fs::path(opt.run.out_dir) / "sweep.csv").string();
      if (!opt.run.out_dir.empty()) fs::create_directories(opt.run.out_dir);
      write_sweep_csv(rows, out);
      for (const auto& row : rows)
        std::printf("%s=%g %s\n", row.axis.c_str(), row.value,
                    row.failed ? ("failed: " + row.error).c_str()
                               : ("micro_f1=" + std::to_string(row.micro_f1)).c_str());
      std::printf("sweep table written to %s\n", out.c_str());
    } else if (cmd_gradcheck->parsed()) {
      Rng rng(gc_seed);
      double worst = 0.0;
      for (int p = 0; p < gc_pairs; ++p) {
        SubModel model = init_submodel(gc_fdim, gc_channels, gc_hidden, gc_classes,
                                       rng.next_u64());
        GrainSource src;
        src.node = p;
        src.label = static_cast<int>(rng.below(gc_classes));
        src.self_features = Mat(gc_fdim, gc_channels);
        for (double& v : src.self_features.a) v = rng.gaussian();
        for (int nb = 0; nb < gc_neighbors; ++nb) {
          src.neighbor_ids.push_back(1000 + nb);
          Mat y(gc_fdim, gc_channels);
          for (double& v : y.a) v = rng.gaussian();
          src.neighbor_features.push_back(std::move(y));
        }
        auto rep = gradient_check(model, src, gc_h);
        worst = std::max(worst, rep.max_rel_error);
      }
      std::printf("gradcheck pairs=%d h=%g max_rel_error=%.3e\n", gc_pairs, gc_h, worst);
      if (worst > gc_tol) {
        std::fprintf(stderr, "gradcheck exceeded tolerance %g\n", gc_tol);
        return 4;
      }
    } else if (cmd_audit->parsed()) {
      auto violations = audit_state_dir(audit_dir);
      if (violations.empty()) {
        std::printf("audit clean: no forgotten id appears in any checkpoint or stored grain\n");
      } else {
        for (const auto& v : violations) std::fprintf(stderr, "violation: %s\n", v.c_str());
        return 4;
      }
    } else if (cmd_convert->parsed()) {
      auto report = convert_content_cites(cv_content, cv_cites, cv_nodes, cv_edges);
      std::printf("converted %zu nodes, %zu edges (F=%d, %d classes, %zu dangling refs dropped)\n",
                  report.nodes, report.edges, report.feat_dim, report.num_classes,
                  report.dropped_dangling);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const InvariantError& e) {
    std::fprintf(stderr, "invariant violation: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
