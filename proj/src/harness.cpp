#include "bgml/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bgml/graph_io.hpp"

namespace bgml {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(TaskRegime r) {
  switch (r) {
    case TaskRegime::Regular: return "regular";
    case TaskRegime::Memory: return "memory";
    case TaskRegime::Unlearning: return "unlearning";
    case TaskRegime::DataIncremental: return "data_incremental";
    default: return "class_incremental";
  }
}

TaskRegime regime_from_string(const std::string& s) {
  if (s == "regular") return TaskRegime::Regular;
  if (s == "memory") return TaskRegime::Memory;
  if (s == "unlearning") return TaskRegime::Unlearning;
  if (s == "data_incremental") return TaskRegime::DataIncremental;
  if (s == "class_incremental") return TaskRegime::ClassIncremental;
  throw ConfigError("unknown task regime: " + s);
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

GraphStore build_graph(const RunConfig& cfg) {
  if (cfg.use_files()) return load_dataset(cfg.nodes_file, cfg.edges_file);
  return generate_sbm(cfg.sbm_blocks, cfg.sbm_per_block, cfg.sbm_p_in, cfg.sbm_p_out,
                      cfg.sbm_feature_dim, cfg.sbm_signal, cfg.sbm_seed);
}

void validate_regime(const RunConfig& cfg) {
  switch (cfg.regime) {
    case TaskRegime::Regular:
      if (cfg.fr_per_t > 0 || cfg.ir_per_t > 0)
        throw ConfigError("regular regime takes no FR/IR events");
      break;
    case TaskRegime::Unlearning:
      if (cfg.ir_per_t > 0) throw ConfigError("unlearning regime cannot generate IR events");
      break;
    case TaskRegime::DataIncremental:
    case TaskRegime::ClassIncremental:
      if (cfg.fr_per_t > 0)
        throw ConfigError(to_string(cfg.regime) + " regime cannot generate FR events");
      break;
    case TaskRegime::Memory:
      break;
  }
}

struct EvalState {
  std::set<int> seen_classes;
};

TimestampMetrics evaluate(const MemoryEngine& engine, int t, const EvalState& eval) {
  TimestampMetrics row;
  row.t = t;
  std::vector<int> pred, truth;
  std::map<int, std::pair<int, int>> per_class;  // class -> (correct, total)
  for (NodeId v : engine.split().test) {
    if (!engine.graph().contains(v)) continue;
    int y = engine.graph().node(v).label;
    if (y == kUnlabeled || !eval.seen_classes.count(y)) continue;
    int p = engine.predict_node(v);
    pred.push_back(p);
    truth.push_back(y);
    auto& [correct, total] = per_class[y];
    if (p == y) ++correct;
    ++total;
  }
  row.n_eval = static_cast<int>(truth.size());
  row.micro_f1 = truth.empty() ? 0.0 : micro_f1(pred, truth);
  for (const auto& [c, ct] : per_class)
    row.class_acc[c] = static_cast<double>(ct.first) / static_cast<double>(ct.second);
  return row;
}

}  // namespace

MetricsReport run_task(const RunConfig& cfg) {
  validate_regime(cfg);
  GraphStore graph = build_graph(cfg);
  SplitAssignment split = split_nodes(graph, cfg.train_frac, cfg.valid_frac_of_train,
                                      cfg.split_seed);

  const int total_t = cfg.regime == TaskRegime::Regular ? 0 : cfg.timestamps;

  // Event files fully determine arrivals: any node they insert must be absent
  // from the bootstrap graph.
  std::vector<TimelineEvent> events;
  bool from_file = !cfg.events_file.empty();
  if (from_file) {
    events = load_events(cfg.events_file, graph.feat_dim(), graph.channels());
    for (const auto& ev : events) {
      if (cfg.regime == TaskRegime::Regular)
        throw ConfigError("regular regime takes no events file");
      if (cfg.regime == TaskRegime::Unlearning && !ev.add_nodes.empty())
        throw ConfigError("unlearning regime with IR events in file");
      if ((cfg.regime == TaskRegime::DataIncremental ||
           cfg.regime == TaskRegime::ClassIncremental) &&
          !ev.forget_nodes.empty())
        throw ConfigError(to_string(cfg.regime) + " regime with FR events in file");
    }
    auto drop = [](std::vector<NodeId>& list, NodeId id) {
      list.erase(std::remove(list.begin(), list.end(), id), list.end());
    };
    for (const auto& ev : events)
      for (const auto& nn : ev.add_nodes) {
        if (graph.contains(nn.id)) graph.remove_node(nn.id);
        drop(split.train, nn.id);
        drop(split.valid, nn.id);
        drop(split.test, nn.id);
      }
  }

  // Hold back the future arrivals before bootstrap; they re-enter as IR.
  std::vector<NewNode> holdback;
  if (!from_file && cfg.ir_per_t > 0 && total_t > 0) {
    std::vector<NodeId> pool;
    if (cfg.regime == TaskRegime::ClassIncremental) {
      std::set<int> withheld(cfg.withheld_classes.begin(), cfg.withheld_classes.end());
      if (withheld.empty()) withheld.insert(graph.num_classes() - 1);
      for (NodeId v : split.train)
        if (withheld.count(graph.node(v).label)) pool.push_back(v);
      if (pool.empty()) throw ConfigError("class_incremental: withheld classes have no train nodes");
    } else {
      pool = split.train;
    }
    Rng rng(mix_seed(cfg.events_seed, 0x686f6c64));
    rng.shuffle(pool);
    std::size_t want = static_cast<std::size_t>(cfg.ir_per_t) * total_t;
    if (cfg.regime == TaskRegime::ClassIncremental) {
      // Withheld classes must be fully absent at t0; the stream paces them in
      // ir_per_t at a time and any leftovers simply never arrive.
    } else {
      if (want > pool.size())
        throw ConfigError("ir_per_t * timestamps exceeds the training pool");
      if (pool.size() > want) pool.resize(want);
    }
    for (NodeId v : pool) {
      NewNode nn;
      nn.id = v;
      nn.features = graph.node(v).features;
      nn.label = graph.node(v).label;
      holdback.push_back(nn);
    }
    std::set<NodeId> held(pool.begin(), pool.end());
    for (NodeId v : pool) graph.remove_node(v);
    std::vector<NodeId> kept;
    for (NodeId v : split.train)
      if (!held.count(v)) kept.push_back(v);
    split.train = std::move(kept);
  }

  // A class counts as seen once it has been presented as training signal.
  EvalState eval;
  for (NodeId v : split.train) {
    if (!graph.contains(v)) continue;
    int y = graph.node(v).label;
    if (y != kUnlabeled) eval.seen_classes.insert(y);
  }

  MetricsReport report;
  MemoryEngine engine(std::move(graph), split, cfg.engine);
  auto clock_start = std::chrono::steady_clock::now();
  engine.bootstrap();
  auto clock_end = std::chrono::steady_clock::now();

  {
    TimestampMetrics row = evaluate(engine, 0, eval);
    row.wall_ms = std::chrono::duration<double, std::milli>(clock_end - clock_start).count();
    report.rows.push_back(std::move(row));
  }

  // Baselines on the bootstrap state.
  {
    std::vector<int> train_labels, test_truth;
    for (NodeId v : engine.split().train)
      if (engine.graph().contains(v)) train_labels.push_back(engine.graph().node(v).label);
    std::vector<NodeId> test_nodes;
    for (NodeId v : engine.split().test)
      if (engine.graph().contains(v) &&
          eval.seen_classes.count(engine.graph().node(v).label)) {
        test_truth.push_back(engine.graph().node(v).label);
        test_nodes.push_back(v);
      }
    if (!train_labels.empty() && !test_truth.empty()) {
      report.baseline_majority_f1 = baseline_majority(train_labels, test_truth);
      std::vector<NodeId> train_nodes;
      for (NodeId v : engine.split().train)
        if (engine.graph().contains(v)) train_nodes.push_back(v);
      report.baseline_logistic_f1 =
          baseline_logistic(engine.graph(), train_nodes, test_nodes, 0.1, 50, cfg.split_seed);
    }
  }

  Rng fr_rng(mix_seed(cfg.events_seed, 0x66720000));
  std::size_t hold_pos = 0;
  const int steps = from_file ? static_cast<int>(events.size()) : total_t;
  for (int step = 0; step < steps; ++step) {
    TimelineEvent ev;
    if (from_file) {
      ev = events[step];
    } else {
      ev.timestamp = step + 1;
      if (cfg.fr_per_t > 0) {
        std::vector<NodeId> pool;
        for (NodeId v : engine.split().train)
          if (engine.graph().contains(v)) pool.push_back(v);
        fr_rng.shuffle(pool);
        std::size_t take = std::min<std::size_t>(cfg.fr_per_t, pool.size());
        ev.forget_nodes.assign(pool.begin(), pool.begin() + take);
        std::sort(ev.forget_nodes.begin(), ev.forget_nodes.end());
      }
      for (int i = 0; i < cfg.ir_per_t && hold_pos < holdback.size(); ++i)
        ev.add_nodes.push_back(holdback[hold_pos++]);
      events.push_back(ev);
    }

    auto t0 = std::chrono::steady_clock::now();
    engine.apply_timeline_event(ev);
    auto t1 = std::chrono::steady_clock::now();
    for (const auto& nn : ev.add_nodes)
      if (nn.label != kUnlabeled) eval.seen_classes.insert(nn.label);

    TimestampMetrics row = evaluate(engine, ev.timestamp, eval);
    row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    report.rows.push_back(std::move(row));

    if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 &&
        ev.timestamp % cfg.checkpoint_every == 0)
      engine.save_state((fs::path(cfg.out_dir) / ("state_t" + std::to_string(ev.timestamp)))
                            .string());
  }

  std::vector<std::map<int, double>> acc_table;
  for (const auto& row : report.rows) acc_table.push_back(row.class_acc);
  report.forgetting = forgetting_rate(acc_table);

  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    write_report_csv(report, (fs::path(cfg.out_dir) / "report.csv").string());
    std::ofstream jf(fs::path(cfg.out_dir) / "report.json");
    jf << report_to_json(cfg, report) << '\n';
    save_events(events, (fs::path(cfg.out_dir) / "events.jsonl").string());
    engine.save_state((fs::path(cfg.out_dir) / "state").string());
  }
  return report;
}

std::vector<SweepRow> sweep(const RunConfig& base, const std::string& axis,
                            const std::vector<double>& values) {
  static const std::set<std::string> kAxes = {"k", "l", "tau", "mu", "fr", "ir"};
  if (!kAxes.count(axis)) throw ConfigError("sweep: unknown axis " + axis);

  std::vector<SweepRow> rows;
  for (double value : values) {
    RunConfig cfg = base;
    cfg.out_dir.clear();  // sweeps do not persist per-run state
    int iv = static_cast<int>(value);
    if (axis == "k")
      cfg.engine.k = iv;
    else if (axis == "l")
      cfg.engine.l = iv;
    else if (axis == "tau")
      cfg.engine.tau = iv;
    else if (axis == "mu")
      cfg.engine.mu = iv;
    else if (axis == "fr")
      cfg.fr_per_t = iv;
    else
      cfg.ir_per_t = iv;

    SweepRow row;
    row.axis = axis;
    row.value = value;
    try {
      MetricsReport report = run_task(cfg);
      row.micro_f1 = report.rows.back().micro_f1;
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_report_csv(const MetricsReport& report, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write report: " + path);
  f << "t,micro_f1,forgetting_rate,n_eval\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& row = report.rows[i];
    f << row.t << ',' << fmt_double(row.micro_f1) << ',' << fmt_double(report.forgetting[i])
      << ',' << row.n_eval << '\n';
  }
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write sweep table: " + path);
  f << "axis,value,micro_f1,status\n";
  for (const auto& row : rows) {
    f << row.axis << ',' << fmt_double(row.value) << ',';
    if (row.failed)
      f << ",failed";
    else
      f << fmt_double(row.micro_f1) << ",ok";
    f << '\n';
  }
}

std::string report_to_json(const RunConfig& cfg, const MetricsReport& report) {
  json j;
  j["config"] = json::parse(engine_config_to_json(cfg.engine));
  j["config"]["regime"] = to_string(cfg.regime);
  j["config"]["timestamps"] = cfg.timestamps;
  j["config"]["fr_per_t"] = cfg.fr_per_t;
  j["config"]["ir_per_t"] = cfg.ir_per_t;
  j["config"]["events_seed"] = cfg.events_seed;
  j["config"]["split_seed"] = cfg.split_seed;
  j["config"]["train_frac"] = cfg.train_frac;
  j["config"]["valid_frac_of_train"] = cfg.valid_frac_of_train;
  if (cfg.use_files()) {
    j["config"]["nodes_file"] = cfg.nodes_file;
    j["config"]["edges_file"] = cfg.edges_file;
  } else {
    j["config"]["sbm"] = {{"blocks", cfg.sbm_blocks},     {"per_block", cfg.sbm_per_block},
                          {"p_in", cfg.sbm_p_in},         {"p_out", cfg.sbm_p_out},
                          {"feature_dim", cfg.sbm_feature_dim}, {"signal", cfg.sbm_signal},
                          {"seed", cfg.sbm_seed}};
  }
  json rows = json::array();
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& row = report.rows[i];
    json r;
    r["t"] = row.t;
    r["micro_f1"] = row.micro_f1;
    r["forgetting_rate"] = report.forgetting[i];
    r["n_eval"] = row.n_eval;
    r["wall_ms"] = row.wall_ms;
    json acc = json::object();
    for (const auto& [c, a] : row.class_acc) acc[std::to_string(c)] = a;
    r["class_acc"] = std::move(acc);
    rows.push_back(std::move(r));
  }
  j["timestamps"] = std::move(rows);
  j["baseline_majority_f1"] = report.baseline_majority_f1;
  j["baseline_logistic_f1"] = report.baseline_logistic_f1;
  return j.dump(2);
}

ConvertReport convert_content_cites(const std::string& content_path,
                                    const std::string& cites_path,
                                    const std::string& out_nodes_path,
                                    const std::string& out_edges_path) {
  std::ifstream cf(content_path);
  if (!cf) throw DataError("cannot open content file: " + content_path);

  struct Row {
    std::string id;
    std::vector<double> features;
    std::string label;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t lineno = 0;
  int feat_dim = -1;
  while (std::getline(cf, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
    if (tokens.size() < 3)
      throw DataError(content_path + ":" + std::to_string(lineno) + ": too few fields");
    Row row;
    row.id = tokens.front();
    row.label = tokens.back();
    for (std::size_t i = 1; i + 1 < tokens.size(); ++i) {
      try {
        row.features.push_back(std::stod(tokens[i]));
      } catch (const std::exception&) {
        throw DataError(content_path + ":" + std::to_string(lineno) + ": bad feature value '" +
                        tokens[i] + "'");
      }
    }
    if (feat_dim < 0)
      feat_dim = static_cast<int>(row.features.size());
    else if (feat_dim != static_cast<int>(row.features.size()))
      throw DataError(content_path + ":" + std::to_string(lineno) + ": inconsistent feature count");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(content_path + ": empty content file");

  // Stable integer ids: reuse them when every id already is an integer,
  // otherwise enumerate by first appearance.
  bool all_int = true;
  for (const auto& row : rows) {
    if (row.id.empty() ||
        row.id.find_first_not_of("0123456789") != std::string::npos) {
      all_int = false;
      break;
    }
  }
  std::map<std::string, NodeId> id_of;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    NodeId id = all_int ? static_cast<NodeId>(std::stoll(rows[i].id)) : static_cast<NodeId>(i);
    if (!id_of.emplace(rows[i].id, id).second)
      throw DataError(content_path + ": duplicate node id " + rows[i].id);
  }
  std::set<std::string> label_set;
  for (const auto& row : rows) label_set.insert(row.label);
  std::map<std::string, int> label_of;
  for (const auto& name : label_set) label_of.emplace(name, static_cast<int>(label_of.size()));

  GraphStore graph(feat_dim, 1);
  for (const auto& row : rows) {
    Mat x(feat_dim, 1);
    for (int f = 0; f < feat_dim; ++f) x(f, 0) = row.features[f];
    graph.add_node(id_of.at(row.id), std::move(x), label_of.at(row.label));
  }

  ConvertReport report;
  report.nodes = rows.size();
  report.feat_dim = feat_dim;
  report.num_classes = static_cast<int>(label_of.size());

  std::ifstream ef(cites_path);
  if (!ef) throw DataError("cannot open cites file: " + cites_path);
  lineno = 0;
  while (std::getline(ef, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b;
    if (!(ls >> a >> b))
      throw DataError(cites_path + ":" + std::to_string(lineno) + ": expected two ids");
    auto ia = id_of.find(a);
    auto ib = id_of.find(b);
    if (ia == id_of.end() || ib == id_of.end()) {
      ++report.dropped_dangling;
      continue;
    }
    if (ia->second == ib->second || graph.has_edge(ia->second, ib->second)) continue;
    graph.add_edge(ia->second, ib->second);
  }
  report.edges = graph.num_edges();

  save_dataset(graph, out_nodes_path, out_edges_path);
  return report;
}

}  // namespace bgml
