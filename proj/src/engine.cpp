#include "bgml/engine.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace bgml {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(ReawarePolicy p) {
  switch (p) {
    case ReawarePolicy::Always: return "always";
    case ReawarePolicy::OnRetrain: return "on_retrain";
    default: return "never";
  }
}

ReawarePolicy reaware_from_string(const std::string& s) {
  if (s == "always") return ReawarePolicy::Always;
  if (s == "on_retrain") return ReawarePolicy::OnRetrain;
  if (s == "never") return ReawarePolicy::Never;
  throw ConfigError("unknown reaware policy: " + s);
}

namespace {

std::string model_name(int level, int i, int j = -1) {
  std::string name = std::to_string(level) + "_" + std::to_string(i);
  if (j >= 0) name += "_" + std::to_string(j);
  return name;
}

std::uint64_t fnv64(const std::vector<NodeId>& ids) {
  std::uint64_t h = 1469598103934665603ull;
  for (NodeId id : ids) {
    for (int b = 0; b < 8; ++b) {
      h ^= static_cast<std::uint64_t>(id >> (8 * b)) & 0xff;
      h *= 1099511628211ull;
    }
  }
  return h;
}

void erase_sorted(std::vector<NodeId>& v, NodeId id) {
  auto it = std::lower_bound(v.begin(), v.end(), id);
  if (it != v.end() && *it == id) v.erase(it);
}

void insert_sorted(std::vector<NodeId>& v, NodeId id) {
  auto it = std::lower_bound(v.begin(), v.end(), id);
  if (it == v.end() || *it != id) v.insert(it, id);
}

}  // namespace

MemoryEngine::MemoryEngine(GraphStore graph, SplitAssignment split, EngineConfig config)
    : graph_(std::move(graph)), split_(std::move(split)), cfg_(config) {
  if (cfg_.k < 1 || cfg_.l < 1) throw ConfigError("engine: k and l must be >= 1");
  if (cfg_.tau < 0 || cfg_.tau > cfg_.k) throw ConfigError("engine: tau must be in [0, k]");
  if (cfg_.mu < 0) throw ConfigError("engine: mu must be >= 0");
  if (cfg_.support_weight < 0.0 || cfg_.support_weight > 1.0)
    throw ConfigError("engine: support weight must be in [0, 1]");
  for (NodeId id : graph_.node_ids()) ever_ids_.insert(id);
}

GrainSource MemoryEngine::make_source(NodeId v, const std::vector<NodeId>& scope_members) const {
  GrainSource s;
  s.node = v;
  s.label = graph_.node(v).label;
  s.self_features = reducer_.reduce(graph_.node(v).features);
  for (NodeId nb : graph_.neighbors(v))
    if (std::binary_search(scope_members.begin(), scope_members.end(), nb))
      s.neighbor_ids.push_back(nb);
  for (NodeId nb : s.neighbor_ids)
    s.neighbor_features.push_back(reducer_.reduce(graph_.node(nb).features));
  return s;
}

GrainSource MemoryEngine::eval_source(NodeId v) const {
  GrainSource s;
  s.node = v;
  s.label = graph_.node(v).label;
  s.self_features = reducer_.reduce(graph_.node(v).features);
  s.neighbor_ids = graph_.neighbors(v);
  for (NodeId nb : s.neighbor_ids)
    s.neighbor_features.push_back(reducer_.reduce(graph_.node(nb).features));
  return s;
}

std::vector<GrainSource> MemoryEngine::shared_valid_sources() const {
  std::vector<GrainSource> out;
  for (NodeId v : split_.valid)
    if (graph_.contains(v)) out.push_back(eval_source(v));
  return out;
}

std::vector<GrainSource> MemoryEngine::collect_sources(
    const std::map<NodeId, GrainSource>& by_node) const {
  std::vector<GrainSource> out;
  out.reserve(by_node.size());
  for (const auto& [id, src] : by_node) out.push_back(src);
  return out;
}

void MemoryEngine::train_first(int i) {
  auto sources = collect_sources(first_sources_[i]);
  if (sources.empty()) {
    first_sources_.erase(i);
    ensemble_.first.erase(i);
    return;
  }
  SubModel model = init_submodel(reducer_.reduced_dim, graph_.channels(), cfg_.hidden,
                                 graph_.num_classes(), submodel_seed(cfg_.model_seed, 1, i));
  TrainOptions opts{cfg_.lr, cfg_.epochs, cfg_.freeze_attention};
  train(model, sources, shared_valid_sources(), opts, model.rng_seed);
  ensemble_.first.insert_or_assign(i, std::move(model));
}

void MemoryEngine::bootstrap() {
  if (bootstrapped_) throw InvariantError("engine: bootstrap may run only once");
  reducer_ = fit_reducer(graph_, split_.train, cfg_.feature_cap);
  projection_ = make_projection(graph_.feat_dim(), cfg_.embed_dim, cfg_.partition_seed);
  embeddings_.dim = cfg_.embed_dim;
  for (NodeId id : graph_.node_ids())
    embeddings_.vectors.emplace(id, embed_features(projection_, graph_.node(id).features));
  hier_ = build_hierarchy(graph_, embeddings_, cfg_.method, cfg_.k, cfg_.l, cfg_.delta1,
                          cfg_.delta2, cfg_.partition_seed, cfg_.max_iters);

  ensemble_.aggregation = cfg_.aggregation;
  ensemble_.support_weight = cfg_.support_weight;
  ensemble_.tau = cfg_.tau;
  ensemble_.level2_count = cfg_.l;

  std::set<NodeId> train_set(split_.train.begin(), split_.train.end());
  for (int i = 0; i < cfg_.k; ++i) {
    const auto& members = hier_.first[i].members;
    std::map<NodeId, GrainSource> sources;
    for (NodeId v : members)
      if (train_set.count(v) && graph_.node(v).label != kUnlabeled)
        sources.emplace(v, make_source(v, members));
    if (sources.empty()) {
      warnings_.push_back("bootstrap: shard " + std::to_string(i) +
                          " has no training nodes; model untrained");
      continue;
    }
    first_sources_[i] = std::move(sources);
    train_first(i);
  }

  rescore_and_reselect();
  reconcile_support(/*previous_tau=*/{}, /*must_retrain=*/{}, nullptr, nullptr);
  bootstrapped_ = true;
}

void MemoryEngine::rescore_and_reselect() {
  if (ensemble_.first.empty()) {
    ensemble_.scores.clear();
    ensemble_.tau_idx.clear();
    return;
  }
  auto valid = shared_valid_sources();
  if (valid.empty()) {
    warnings_.push_back("rescore: validation set empty; tau selection frozen");
    return;
  }
  ensemble_.scores = score_models(ensemble_.first, valid);
  int tau = std::min<int>(cfg_.tau, static_cast<int>(ensemble_.scores.size()));
  ensemble_.tau_idx = low_rank(ensemble_.scores, tau);
}

void MemoryEngine::reconcile_support(const std::set<int>& previous_tau,
                                     const std::set<SecondKey>& must_retrain,
                                     std::vector<std::string>* retrained,
                                     std::vector<std::string>* decommissioned) {
  // Drop supporters for shards that left tau_idx.
  for (auto it = second_sources_.begin(); it != second_sources_.end();) {
    if (!ensemble_.tau_idx.count(it->first.first))
      it = second_sources_.erase(it);
    else
      ++it;
  }
  for (auto it = ensemble_.second.begin(); it != ensemble_.second.end();) {
    if (!ensemble_.tau_idx.count(it->first.first))
      it = ensemble_.second.erase(it);
    else
      ++it;
  }

  std::set<NodeId> train_set(split_.train.begin(), split_.train.end());
  TrainOptions opts{cfg_.lr, cfg_.epochs, cfg_.freeze_attention};
  auto valid = shared_valid_sources();

  for (int i : ensemble_.tau_idx) {
    bool entering = !previous_tau.count(i);
    for (int j = 0; j < cfg_.l; ++j) {
      SecondKey key{i, j};
      if (entering) {
        const auto& members = hier_.second[i][j].members;
        std::map<NodeId, GrainSource> sources;
        for (NodeId v : members)
          if (train_set.count(v) && graph_.node(v).label != kUnlabeled)
            sources.emplace(v, make_source(v, members));
        if (sources.empty()) {
          warnings_.push_back("support: sub-shard " + model_name(2, i, j) +
                              " empty; supporter skipped");
          continue;
        }
        second_sources_[key] = std::move(sources);
      } else if (!second_sources_.count(key) && !must_retrain.count(key)) {
        continue;  // was skipped as empty and nothing changed
      }

      bool needs_training = entering || must_retrain.count(key);
      if (!needs_training) continue;
      auto sit = second_sources_.find(key);
      if (sit == second_sources_.end() || sit->second.empty()) {
        if (ensemble_.second.erase(key) && decommissioned)
          decommissioned->push_back(model_name(2, i, j));
        second_sources_.erase(key);
        continue;
      }
      auto sources = collect_sources(sit->second);
      SubModel model = init_submodel(reducer_.reduced_dim, graph_.channels(), cfg_.hidden,
                                     graph_.num_classes(), submodel_seed(cfg_.model_seed, 2, i, j));
      train(model, sources, valid, opts, model.rng_seed);
      ensemble_.second.insert_or_assign(key, std::move(model));
      if (retrained) retrained->push_back(model_name(2, i, j));
    }
  }
}

ForgetPlan MemoryEngine::guidance(const std::set<NodeId>& forget_nodes) const {
  ForgetPlan plan;
  plan.forget_nodes = forget_nodes;
  if (forget_nodes.empty()) return plan;

  auto touches = [&](const std::vector<NodeId>& ids) {
    for (NodeId id : ids)
      if (forget_nodes.count(id)) return true;
    return false;
  };

  for (const auto& [i, by_node] : first_sources_) {
    bool affected = false;
    auto mit = ensemble_.first.find(i);
    if (mit != ensemble_.first.end())
      for (NodeId v : forget_nodes)
        if (mit->second.has_trained(v)) {
          affected = true;
          break;
        }
    for (const auto& [u, src] : by_node) {
      if (forget_nodes.count(u)) {
        affected = true;
        continue;
      }
      if (touches(src.neighbor_ids)) {
        affected = true;
        plan.grain_rebuild_nodes.insert(u);
      }
    }
    if (affected) plan.affected_first.insert(i);
  }

  for (const auto& [key, by_node] : second_sources_) {
    bool affected = false;
    auto mit = ensemble_.second.find(key);
    if (mit != ensemble_.second.end())
      for (NodeId v : forget_nodes)
        if (mit->second.has_trained(v)) {
          affected = true;
          break;
        }
    for (const auto& [u, src] : by_node) {
      if (forget_nodes.count(u)) {
        affected = true;
        continue;
      }
      if (touches(src.neighbor_ids)) {
        affected = true;
        plan.grain_rebuild_nodes.insert(u);
      }
    }
    if (affected) plan.affected_second.insert(key);
  }

  // Hierarchical compatibility: an affected supported shard drags in all of
  // its supporters.
  for (int i : plan.affected_first)
    if (ensemble_.tau_idx.count(i))
      for (const auto& [key, model] : ensemble_.second)
        if (key.first == i) plan.affected_second.insert(key);

  return plan;
}

ForgetReport MemoryEngine::forget(const std::vector<NodeId>& forget_nodes) {
  std::set<NodeId> fset(forget_nodes.begin(), forget_nodes.end());
  for (NodeId v : fset)
    if (!graph_.contains(v))
      throw DataError("forget: node " + std::to_string(v) + " not in graph");

  ForgetReport report;
  report.plan = guidance(fset);

  // Shed the nodes from every structure.
  for (NodeId v : fset) {
    hierarchy_remove_node(hier_, embeddings_, v);
    graph_.remove_node(v);
    embeddings_.vectors.erase(v);
    erase_sorted(split_.train, v);
    erase_sorted(split_.valid, v);
    erase_sorted(split_.test, v);
    forgotten_ids_.insert(v);
  }
  for (auto& [i, by_node] : first_sources_)
    for (NodeId v : fset) by_node.erase(v);
  for (auto& [key, by_node] : second_sources_)
    for (NodeId v : fset) by_node.erase(v);
  for (NodeId u : report.plan.grain_rebuild_nodes) rebuild_source_maps_for(u);

  // Scratch-retrain the affected first-level models.
  bool any_first_retrained = false;
  for (int i : report.plan.affected_first) {
    if (!first_sources_.count(i)) continue;
    if (first_sources_[i].empty()) {
      first_sources_.erase(i);
      ensemble_.first.erase(i);
      ensemble_.tau_idx.erase(i);
      report.decommissioned.push_back(model_name(1, i));
      continue;
    }
    train_first(i);
    report.retrained.push_back(model_name(1, i));
    any_first_retrained = true;
  }

  std::set<int> previous_tau = ensemble_.tau_idx;
  bool reselect = cfg_.reaware == ReawarePolicy::Always ||
                  (cfg_.reaware == ReawarePolicy::OnRetrain &&
                   (any_first_retrained || !report.decommissioned.empty()));
  if (reselect) rescore_and_reselect();
  // tau_idx must reference live models even when selection is frozen.
  for (auto it = ensemble_.tau_idx.begin(); it != ensemble_.tau_idx.end();)
    it = ensemble_.first.count(*it) ? std::next(it) : ensemble_.tau_idx.erase(it);

  reconcile_support(previous_tau, report.plan.affected_second, &report.retrained,
                    &report.decommissioned);

  assert_no_residual(fset);
  return report;
}

void MemoryEngine::rebuild_source_maps_for(NodeId survivor) {
  auto loc = hier_.locate(survivor);
  if (!loc) return;
  auto [i, j] = *loc;
  auto fit = first_sources_.find(i);
  if (fit != first_sources_.end()) {
    auto nit = fit->second.find(survivor);
    if (nit != fit->second.end()) nit->second = make_source(survivor, hier_.first[i].members);
  }
  auto sit = second_sources_.find({i, j});
  if (sit != second_sources_.end()) {
    auto nit = sit->second.find(survivor);
    if (nit != sit->second.end())
      nit->second = make_source(survivor, hier_.second[i][j].members);
  }
}

void MemoryEngine::assert_no_residual(const std::set<NodeId>& forget_nodes) const {
  for (const auto& [i, model] : ensemble_.first)
    for (NodeId v : forget_nodes)
      if (model.has_trained(v))
        throw InvariantError("residual: model " + model_name(1, i) + " trained on forgotten " +
                             std::to_string(v));
  for (const auto& [key, model] : ensemble_.second)
    for (NodeId v : forget_nodes)
      if (model.has_trained(v))
        throw InvariantError("residual: model " + model_name(2, key.first, key.second) +
                             " trained on forgotten " + std::to_string(v));
  auto scan_sources = [&](const std::map<NodeId, GrainSource>& by_node, const std::string& who) {
    for (const auto& [u, src] : by_node) {
      if (forget_nodes.count(u))
        throw InvariantError("residual: stored grain for forgotten " + std::to_string(u) +
                             " in " + who);
      for (NodeId nb : src.neighbor_ids)
        if (forget_nodes.count(nb))
          throw InvariantError("residual: grain of " + std::to_string(u) + " in " + who +
                               " references forgotten " + std::to_string(nb));
    }
  };
  for (const auto& [i, by_node] : first_sources_) scan_sources(by_node, model_name(1, i));
  for (const auto& [key, by_node] : second_sources_)
    scan_sources(by_node, model_name(2, key.first, key.second));
}

std::set<int> MemoryEngine::supported_with_models() const {
  // Supporter keys are confined to tau_idx, so ownership routing follows it.
  return ensemble_.tau_idx;
}

RememberReport MemoryEngine::remember(const std::vector<NewNode>& add_nodes) {
  RememberReport report;
  std::vector<NewNode> arrivals(add_nodes);
  std::sort(arrivals.begin(), arrivals.end(),
            [](const NewNode& a, const NewNode& b) { return a.id < b.id; });

  for (const auto& nn : arrivals) {
    if (ever_ids_.count(nn.id))
      throw DataError("remember: id " + std::to_string(nn.id) +
                      " was already used; forgotten ids are never reused");
    int classes_before = graph_.num_classes();
    graph_.add_node(nn.id, nn.features, nn.label);
    ever_ids_.insert(nn.id);
    if (graph_.num_classes() > classes_before) {
      for (auto& [i, model] : ensemble_.first) model.grow_classes(graph_.num_classes());
      for (auto& [key, model] : ensemble_.second) model.grow_classes(graph_.num_classes());
    }
    embeddings_.vectors[nn.id] = embed_features(projection_, nn.features);

    AssignResult where;
    bool retried = false;
    while (true) {
      try {
        where = assign_new_node(hier_, embeddings_, nn.id, supported_with_models());
        break;
      } catch (const CapacityError& e) {
        if (retried) throw;
        retried = true;
        if (e.level == 1) {
          ++hier_.delta1;
          ++report.delta1_relaxations;
          warnings_.push_back("remember: delta1 raised to " + std::to_string(hier_.delta1));
        } else {
          ++hier_.delta2;
          ++report.delta2_relaxations;
          warnings_.push_back("remember: delta2 raised to " + std::to_string(hier_.delta2));
        }
      }
    }

    RememberReport::Assignment a;
    a.node = nn.id;
    a.first = where.first;
    a.second = where.second;

    // Top-mu most similar shard members become the neighbors.
    Mat reduced = reducer_.reduce(nn.features);
    std::vector<std::pair<double, NodeId>> ranked;  // (distance, id)
    for (NodeId member : hier_.first[where.first].members) {
      if (member == nn.id) continue;
      Mat mx = reducer_.reduce(graph_.node(member).features);
      double d2 = 0.0;
      for (std::size_t t = 0; t < reduced.a.size(); ++t) {
        double d = reduced.a[t] - mx.a[t];
        d2 += d * d;
      }
      ranked.emplace_back(std::sqrt(d2), member);
    }
    std::sort(ranked.begin(), ranked.end());
    std::size_t take = std::min<std::size_t>(cfg_.mu, ranked.size());
    for (std::size_t t = 0; t < take; ++t) a.neighbors.push_back(ranked[t].second);
    std::sort(a.neighbors.begin(), a.neighbors.end());
    if (ranked.empty())
      warnings_.push_back("remember: shard " + std::to_string(where.first) +
                          " empty; node " + std::to_string(nn.id) + " arrives isolated");
    for (NodeId nb : a.neighbors) graph_.add_edge(nn.id, nb);

    if (nn.label != kUnlabeled) {
      insert_sorted(split_.train, nn.id);

      GrainSource src = make_source(nn.id, hier_.first[where.first].members);
      first_sources_[where.first].emplace(nn.id, src);
      auto fit = ensemble_.first.find(where.first);
      if (fit == ensemble_.first.end()) {
        // Repopulating a shard whose model was never trained or was
        // decommissioned: scratch state is just the seeded init.
        SubModel model =
            init_submodel(reducer_.reduced_dim, graph_.channels(), cfg_.hidden,
                          graph_.num_classes(), submodel_seed(cfg_.model_seed, 1, where.first));
        fit = ensemble_.first.emplace(where.first, std::move(model)).first;
        warnings_.push_back("remember: shard " + std::to_string(where.first) +
                            " model re-initialized by arrival " + std::to_string(nn.id));
      }
      incremental_step(fit->second, src, cfg_.lr, cfg_.freeze_attention);
      a.stepped_first = true;

      if (where.second) {
        SecondKey key{where.first, *where.second};
        GrainSource ssrc = make_source(nn.id, hier_.second[key.first][key.second].members);
        second_sources_[key].emplace(nn.id, ssrc);
        auto sit = ensemble_.second.find(key);
        if (sit == ensemble_.second.end()) {
          SubModel model = init_submodel(reducer_.reduced_dim, graph_.channels(), cfg_.hidden,
                                         graph_.num_classes(),
                                         submodel_seed(cfg_.model_seed, 2, key.first, key.second));
          sit = ensemble_.second.emplace(key, std::move(model)).first;
          warnings_.push_back("remember: supporter " + model_name(2, key.first, key.second) +
                              " re-initialized by arrival " + std::to_string(nn.id));
        }
        incremental_step(sit->second, ssrc, cfg_.lr, cfg_.freeze_attention);
        a.stepped_second = true;
      }
    }
    report.assigned.push_back(std::move(a));
  }
  return report;
}

void MemoryEngine::apply_timeline_event(const TimelineEvent& event) {
  if (!bootstrapped_) throw InvariantError("engine: bootstrap before applying events");
  if (event.timestamp <= timestamp_)
    throw DataError("event at t=" + std::to_string(event.timestamp) +
                    " is not after t=" + std::to_string(timestamp_));
  {
    std::set<NodeId> fset(event.forget_nodes.begin(), event.forget_nodes.end());
    for (const auto& nn : event.add_nodes)
      if (fset.count(nn.id))
        throw DataError("event t=" + std::to_string(event.timestamp) + ": node " +
                        std::to_string(nn.id) + " both forgotten and added");
    for (NodeId v : fset)
      if (!graph_.contains(v))
        throw DataError("event t=" + std::to_string(event.timestamp) +
                        ": forgetting absent node " + std::to_string(v));
    for (const auto& nn : event.add_nodes)
      if (ever_ids_.count(nn.id))
        throw DataError("event t=" + std::to_string(event.timestamp) + ": id " +
                        std::to_string(nn.id) + " was already used");
  }
  timestamp_ = event.timestamp;

  ForgetReport freport;
  if (!event.forget_nodes.empty()) freport = forget(event.forget_nodes);
  RememberReport rreport;
  if (!event.add_nodes.empty()) rreport = remember(event.add_nodes);
  if (cfg_.reaware == ReawarePolicy::Always && !event.add_nodes.empty()) {
    std::set<int> previous_tau = ensemble_.tau_idx;
    rescore_and_reselect();
    reconcile_support(previous_tau, {}, &freport.retrained, &freport.decommissioned);
  }

  json line;
  line["t"] = timestamp_;
  line["fr"] = event.forget_nodes;
  json ir = json::array();
  for (const auto& nn : event.add_nodes) ir.push_back(nn.id);
  line["ir"] = std::move(ir);
  line["retrained"] = freport.retrained;
  line["decommissioned"] = freport.decommissioned;
  event_log_.push_back(line.dump());
}

void MemoryEngine::run_timeline(const std::vector<TimelineEvent>& events,
                                const std::function<void(int)>& after_step) {
  for (std::size_t e = 0; e < events.size(); ++e) {
    if (e > 0 && events[e].timestamp <= events[e - 1].timestamp)
      throw DataError("timeline: events not sorted by timestamp");
    apply_timeline_event(events[e]);
    if (after_step) after_step(events[e].timestamp);
  }
}

int MemoryEngine::predict_node(NodeId v) const {
  return ensemble_predict(ensemble_, eval_source(v));
}

std::vector<std::string> MemoryEngine::audit_forgotten() const {
  std::vector<std::string> violations;
  auto check_list = [&](const std::vector<NodeId>& ids, const std::string& what) {
    for (NodeId id : ids)
      if (forgotten_ids_.count(id))
        violations.push_back(what + " contains forgotten id " + std::to_string(id));
  };
  for (const auto& [i, model] : ensemble_.first)
    check_list(model.trained_on, "trained_on of " + model_name(1, i));
  for (const auto& [key, model] : ensemble_.second)
    check_list(model.trained_on, "trained_on of " + model_name(2, key.first, key.second));
  for (const auto& [i, by_node] : first_sources_)
    for (const auto& [u, src] : by_node) {
      if (forgotten_ids_.count(u))
        violations.push_back("stored grain for forgotten id " + std::to_string(u));
      check_list(src.neighbor_ids, "grain neighbors of " + std::to_string(u));
    }
  for (const auto& [key, by_node] : second_sources_)
    for (const auto& [u, src] : by_node) {
      if (forgotten_ids_.count(u))
        violations.push_back("stored grain for forgotten id " + std::to_string(u));
      check_list(src.neighbor_ids, "grain neighbors of " + std::to_string(u));
    }
  for (const auto& shard : hier_.first) check_list(shard.members, "first-level shard");
  for (NodeId v : graph_.node_ids())
    if (forgotten_ids_.count(v))
      violations.push_back("graph still contains forgotten id " + std::to_string(v));
  return violations;
}

std::string engine_config_to_json(const EngineConfig& cfg) {
  json j;
  j["method"] = to_string(cfg.method);
  j["k"] = cfg.k;
  j["l"] = cfg.l;
  j["delta1"] = cfg.delta1;
  j["delta2"] = cfg.delta2;
  j["tau"] = cfg.tau;
  j["mu"] = cfg.mu;
  j["lambda"] = cfg.support_weight;
  j["hidden"] = cfg.hidden;
  j["lr"] = cfg.lr;
  j["epochs"] = cfg.epochs;
  j["feature_cap"] = cfg.feature_cap;
  j["embed_dim"] = cfg.embed_dim;
  j["partition_seed"] = cfg.partition_seed;
  j["model_seed"] = cfg.model_seed;
  j["aggregation"] = to_string(cfg.aggregation);
  j["reaware"] = to_string(cfg.reaware);
  j["freeze_attention"] = cfg.freeze_attention;
  j["max_iters"] = cfg.max_iters;
  return j.dump(2);
}

void MemoryEngine::save_state(const std::string& dir) const {
  fs::create_directories(dir);
  fs::remove_all(fs::path(dir) / "models");
  fs::create_directories(fs::path(dir) / "models");

  json manifest;
  manifest["config"] = json::parse(engine_config_to_json(cfg_));
  manifest["timestamp"] = timestamp_;
  manifest["num_classes"] = graph_.num_classes();
  manifest["num_nodes"] = graph_.num_nodes();
  manifest["num_edges"] = graph_.num_edges();
  manifest["split_digests"] = {{"train", fnv64(split_.train)},
                               {"valid", fnv64(split_.valid)},
                               {"test", fnv64(split_.test)}};
  manifest["reduced_dim"] = reducer_.reduced_dim;
  manifest["selected_features"] = reducer_.selected;
  std::ofstream mf(fs::path(dir) / "manifest.json");
  mf << manifest.dump(2) << '\n';

  std::ofstream hf(fs::path(dir) / "hierarchy.json");
  hf << hierarchy_to_json(hier_) << '\n';

  std::map<std::string, std::string> files;
  for (const auto& [i, model] : ensemble_.first) {
    std::string name = model_name(1, i);
    std::string rel = "models/" + name + ".fgn";
    save_checkpoint(model, (fs::path(dir) / rel).string());
    files[name] = rel;
  }
  for (const auto& [key, model] : ensemble_.second) {
    std::string name = model_name(2, key.first, key.second);
    std::string rel = "models/" + name + ".fgn";
    save_checkpoint(model, (fs::path(dir) / rel).string());
    files[name] = rel;
  }
  std::ofstream ef(fs::path(dir) / "ensemble.json");
  ef << ensemble_to_json(ensemble_, files) << '\n';

  std::ofstream gf(fs::path(dir) / "grains.jsonl");
  for (const auto& [i, by_node] : first_sources_)
    for (const auto& [u, src] : by_node) {
      json line;
      line["model"] = model_name(1, i);
      line["node"] = u;
      line["neighbors"] = src.neighbor_ids;
      gf << line.dump() << '\n';
    }
  for (const auto& [key, by_node] : second_sources_)
    for (const auto& [u, src] : by_node) {
      json line;
      line["model"] = model_name(2, key.first, key.second);
      line["node"] = u;
      line["neighbors"] = src.neighbor_ids;
      gf << line.dump() << '\n';
    }

  std::ofstream lf(fs::path(dir) / "event_log.jsonl");
  for (const auto& line : event_log_) lf << line << '\n';
}

std::vector<std::string> audit_state_dir(const std::string& dir) {
  std::vector<std::string> violations;
  std::set<NodeId> forgotten;
  {
    std::ifstream lf(fs::path(dir) / "event_log.jsonl");
    if (!lf) throw DataError("audit: cannot open event_log.jsonl in " + dir);
    std::string line;
    while (std::getline(lf, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      if (j.contains("fr"))
        for (const auto& id : j["fr"]) forgotten.insert(id.get<NodeId>());
    }
  }

  for (const auto& entry : fs::directory_iterator(fs::path(dir) / "models")) {
    if (entry.path().extension() != ".fgn") continue;
    SubModel model = load_checkpoint(entry.path().string());
    for (NodeId id : model.trained_on)
      if (forgotten.count(id))
        violations.push_back(entry.path().filename().string() +
                             ": trained_on contains forgotten id " + std::to_string(id));
  }

  {
    std::ifstream gf(fs::path(dir) / "grains.jsonl");
    if (gf) {
      std::string line;
      while (std::getline(gf, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        NodeId node = j.at("node").get<NodeId>();
        if (forgotten.count(node))
          violations.push_back("stored grain for forgotten id " + std::to_string(node));
        for (const auto& nb : j.at("neighbors"))
          if (forgotten.count(nb.get<NodeId>()))
            violations.push_back("grain of " + std::to_string(node) +
                                 " references forgotten id " +
                                 std::to_string(nb.get<NodeId>()));
      }
    }
  }

  {
    std::ifstream hf(fs::path(dir) / "hierarchy.json");
    if (hf) {
      std::string text((std::istreambuf_iterator<char>(hf)), std::istreambuf_iterator<char>());
      PartitionHierarchy hier = hierarchy_from_json(text);
      for (const auto& shard : hier.first)
        for (NodeId id : shard.members)
          if (forgotten.count(id))
            violations.push_back("hierarchy still contains forgotten id " + std::to_string(id));
    }
  }
  return violations;
}

}  // namespace bgml
