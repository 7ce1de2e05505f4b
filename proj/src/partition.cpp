#include "bgml/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

namespace bgml {

using json = nlohmann::json;

std::string to_string(PartitionMethod m) {
  return m == PartitionMethod::Blpa ? "blpa" : "bekm";
}

PartitionMethod partition_method_from_string(const std::string& s) {
  if (s == "blpa" || s == "BLPA") return PartitionMethod::Blpa;
  if (s == "bekm" || s == "BEKM") return PartitionMethod::Bekm;
  throw ConfigError("unknown partition method: " + s);
}

Projection make_projection(int in_dim, int out_dim, std::uint64_t seed) {
  if (out_dim < 2) throw ConfigError("projection: dim must be >= 2");
  Projection p;
  p.in_dim = in_dim;
  p.out_dim = out_dim;
  p.seed = seed;
  p.matrix = Mat(out_dim, in_dim);
  const double scale = std::sqrt(3.0) / std::sqrt(static_cast<double>(out_dim));
  Rng rng(mix_seed(seed, 0x70726f6a));  // projection stream
  for (int i = 0; i < out_dim; ++i)
    for (int j = 0; j < in_dim; ++j) {
      double u = rng.next_double();
      if (u < 1.0 / 6.0)
        p.matrix(i, j) = scale;
      else if (u < 1.0 / 3.0)
        p.matrix(i, j) = -scale;
    }
  return p;
}

std::vector<double> embed_features(const Projection& proj, const Mat& features) {
  // Channel-average, project, normalize. All-zero input stays the zero vector.
  std::vector<double> avg(proj.in_dim, 0.0);
  for (int f = 0; f < features.rows; ++f) {
    double s = 0.0;
    for (int c = 0; c < features.cols; ++c) s += features(f, c);
    avg[f] = s / features.cols;
  }
  std::vector<double> out(proj.out_dim, 0.0);
  for (int i = 0; i < proj.out_dim; ++i) {
    double s = 0.0;
    for (int j = 0; j < proj.in_dim; ++j) s += proj.matrix(i, j) * avg[j];
    out[i] = s;
  }
  double norm = l2_norm(out);
  if (norm > 0.0)
    for (double& x : out) x /= norm;
  return out;
}

EmbeddingIndex embed_nodes(const GraphStore& graph, int dim, std::uint64_t seed) {
  Projection proj = make_projection(graph.feat_dim(), dim, seed);
  EmbeddingIndex index;
  index.dim = dim;
  for (NodeId id : graph.node_ids())
    index.vectors.emplace(id, embed_features(proj, graph.node(id).features));
  return index;
}

int default_delta(std::size_t num_nodes, int num_shards) {
  if (num_shards <= 0) throw ConfigError("delta: shard count must be positive");
  return static_cast<int>(
      std::ceil(1.2 * static_cast<double>(num_nodes) / static_cast<double>(num_shards)));
}

namespace {

void check_feasible(std::size_t n, int k, int delta, const char* what) {
  if (k < 1) throw ConfigError(std::string(what) + ": k must be >= 1");
  if (static_cast<long long>(delta) * k < static_cast<long long>(n))
    throw ConfigError(std::string(what) + ": infeasible, delta*k = " +
                      std::to_string(static_cast<long long>(delta) * k) + " < " +
                      std::to_string(n) + " nodes");
}

// Distinct member ids drawn by rejection over the id range, so the draw
// sequence is unchanged by the removal of nodes that were never drawn.
std::vector<NodeId> pick_distinct_members(const std::set<NodeId>& members, int k, Rng& rng) {
  NodeId max_id = *members.rbegin();
  std::vector<NodeId> picked;
  std::set<NodeId> taken;
  while (static_cast<int>(picked.size()) < k) {
    NodeId cand = static_cast<NodeId>(rng.below(static_cast<std::uint64_t>(max_id) + 1));
    if (!members.count(cand) || taken.count(cand)) continue;
    picked.push_back(cand);
    taken.insert(cand);
  }
  return picked;
}

std::vector<double> member_mean(const std::vector<NodeId>& members,
                                const EmbeddingIndex& embeddings) {
  std::vector<double> sum(embeddings.dim, 0.0);
  for (NodeId v : members) {  // ascending
    const auto& b = embeddings.vectors.at(v);
    for (int d = 0; d < embeddings.dim; ++d) sum[d] += b[d];
  }
  for (double& x : sum) x /= static_cast<double>(members.size());
  return sum;
}

}  // namespace

std::vector<std::vector<NodeId>> partition_blpa(
    const GraphStore& graph, const std::vector<NodeId>& nodes, int k, int delta,
    std::uint64_t seed, int max_iters, const std::vector<std::vector<NodeId>>* initial) {
  check_feasible(nodes.size(), k, delta, "blpa");

  std::vector<NodeId> order(nodes);
  std::sort(order.begin(), order.end());

  std::map<NodeId, int> shard_of;
  std::vector<std::size_t> shard_size(k, 0);
  if (initial) {
    if (static_cast<int>(initial->size()) != k)
      throw ConfigError("blpa: initial assignment must have k shards");
    for (int i = 0; i < k; ++i)
      for (NodeId v : (*initial)[i]) {
        shard_of[v] = i;
        ++shard_size[i];
      }
    if (shard_of.size() != order.size())
      throw ConfigError("blpa: initial assignment must cover the node set");
  } else {
    // Seeded balanced start: shuffled round-robin.
    std::vector<NodeId> shuffled(order);
    Rng rng(mix_seed(seed, 0x626c7061));
    rng.shuffle(shuffled);
    for (std::size_t p = 0; p < shuffled.size(); ++p) {
      int i = static_cast<int>(p % k);
      shard_of[shuffled[p]] = i;
      ++shard_size[i];
    }
  }

  std::vector<int> counts(k, 0);
  for (int pass = 0; pass < max_iters; ++pass) {
    bool moved = false;
    for (NodeId v : order) {
      std::fill(counts.begin(), counts.end(), 0);
      for (NodeId nb : graph.neighbors(v)) {
        auto it = shard_of.find(nb);
        if (it != shard_of.end()) ++counts[it->second];
      }
      int src = shard_of[v];
      int dst = 0;
      for (int i = 1; i < k; ++i)
        if (counts[i] > counts[dst]) dst = i;  // ties keep lowest index
      if (dst == src || counts[dst] <= counts[src]) continue;  // move only on strict gain
      if (shard_size[dst] + 1 > static_cast<std::size_t>(delta)) continue;  // full: skip
      shard_of[v] = dst;
      --shard_size[src];
      ++shard_size[dst];
      moved = true;
    }
    if (!moved) break;
  }

  std::vector<std::vector<NodeId>> shards(k);
  for (NodeId v : order) shards[shard_of[v]].push_back(v);
  return shards;
}

BekmResult partition_bekm(const EmbeddingIndex& embeddings, const std::vector<NodeId>& nodes,
                          int k, int delta, std::uint64_t seed, int max_iters,
                          const std::vector<std::vector<double>>* initial_centroids) {
  check_feasible(nodes.size(), k, delta, "bekm");
  if (static_cast<std::size_t>(k) > nodes.size())
    throw ConfigError("bekm: fewer nodes than shards");

  std::vector<NodeId> order(nodes);
  std::sort(order.begin(), order.end());
  for (NodeId v : order)
    if (!embeddings.vectors.count(v))
      throw ConfigError("bekm: missing embedding for node " + std::to_string(v));

  std::vector<std::vector<double>> centroids;
  if (initial_centroids) {
    if (static_cast<int>(initial_centroids->size()) != k)
      throw ConfigError("bekm: initial centroids must have k entries");
    centroids = *initial_centroids;
  } else {
    std::set<NodeId> members(order.begin(), order.end());
    Rng rng(mix_seed(seed, 0x62656b6d));
    for (NodeId v : pick_distinct_members(members, k, rng))
      centroids.push_back(embeddings.vectors.at(v));
  }

  std::map<NodeId, int> assign;
  for (int pass = 0; pass < max_iters; ++pass) {
    std::map<NodeId, int> next;
    std::vector<std::size_t> size(k, 0);
    for (NodeId v : order) {
      const auto& b = embeddings.vectors.at(v);
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (int i = 0; i < k; ++i) {
        if (size[i] >= static_cast<std::size_t>(delta)) continue;
        double d = l2_distance(b, centroids[i]);
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      next[v] = best;  // feasibility guarantees some shard has room
      ++size[best];
    }
    bool stable = (next == assign);
    assign = std::move(next);
    for (int i = 0; i < k; ++i) {
      std::vector<NodeId> members;
      for (NodeId v : order)
        if (assign[v] == i) members.push_back(v);
      if (!members.empty()) centroids[i] = member_mean(members, embeddings);
    }
    if (stable) break;
  }

  BekmResult result;
  result.shards.assign(k, {});
  for (NodeId v : order) result.shards[assign[v]].push_back(v);
  result.centroids = std::move(centroids);
  // Report final centroids as exact member means.
  for (int i = 0; i < k; ++i)
    if (!result.shards[i].empty()) result.centroids[i] = member_mean(result.shards[i], embeddings);
  return result;
}

bool Shard::contains(NodeId v) const {
  return std::binary_search(members.begin(), members.end(), v);
}

std::optional<std::pair<int, int>> PartitionHierarchy::locate(NodeId v) const {
  for (int i = 0; i < static_cast<int>(first.size()); ++i) {
    if (!first[i].contains(v)) continue;
    for (int j = 0; j < static_cast<int>(second[i].size()); ++j)
      if (second[i][j].contains(v)) return std::make_pair(i, j);
    return std::make_pair(i, -1);
  }
  return std::nullopt;
}

void PartitionHierarchy::check_invariants(const EmbeddingIndex& embeddings) const {
  std::set<NodeId> seen;
  for (int i = 0; i < static_cast<int>(first.size()); ++i) {
    const auto& s = first[i];
    if (s.members.size() > static_cast<std::size_t>(delta1))
      throw InvariantError("hierarchy: first-level shard " + std::to_string(i) +
                           " exceeds delta1");
    for (NodeId v : s.members)
      if (!seen.insert(v).second)
        throw InvariantError("hierarchy: node " + std::to_string(v) +
                             " in two first-level shards");
    std::set<NodeId> sub_seen;
    for (int j = 0; j < static_cast<int>(second[i].size()); ++j) {
      const auto& p = second[i][j];
      if (p.members.size() > static_cast<std::size_t>(delta2))
        throw InvariantError("hierarchy: second-level shard (" + std::to_string(i) + "," +
                             std::to_string(j) + ") exceeds delta2");
      for (NodeId v : p.members) {
        if (!s.contains(v))
          throw InvariantError("hierarchy: node " + std::to_string(v) +
                               " in sub-shard but not parent");
        if (!sub_seen.insert(v).second)
          throw InvariantError("hierarchy: node " + std::to_string(v) +
                               " in two sub-shards of shard " + std::to_string(i));
      }
    }
    if (sub_seen.size() != s.members.size())
      throw InvariantError("hierarchy: sub-shards of " + std::to_string(i) +
                           " do not tile the parent");
    // Centroid freshness.
    auto check_centroid = [&](const Shard& sh, const std::string& name) {
      if (sh.members.empty()) {
        if (sh.centroid_valid)
          throw InvariantError("hierarchy: empty shard " + name + " has a centroid");
        return;
      }
      if (!sh.centroid_valid)
        throw InvariantError("hierarchy: populated shard " + name + " lacks a centroid");
      auto fresh = member_mean(sh.members, embeddings);
      for (int d = 0; d < embeddings.dim; ++d)
        if (std::abs(fresh[d] - sh.centroid[d]) > 1e-9)
          throw InvariantError("hierarchy: stale centroid on shard " + name);
    };
    check_centroid(s, std::to_string(i));
    for (int j = 0; j < static_cast<int>(second[i].size()); ++j)
      check_centroid(second[i][j], std::to_string(i) + "," + std::to_string(j));
  }
}

namespace {

Shard make_shard(std::vector<NodeId> members, const EmbeddingIndex& embeddings) {
  Shard s;
  s.members = std::move(members);
  std::sort(s.members.begin(), s.members.end());
  if (!s.members.empty()) {
    s.centroid = member_mean(s.members, embeddings);
    s.centroid_valid = true;
  } else {
    s.centroid.assign(embeddings.dim, 0.0);
    s.centroid_valid = false;
  }
  return s;
}

void refresh_centroid(Shard& s, const EmbeddingIndex& embeddings) {
  if (s.members.empty()) {
    s.centroid.assign(embeddings.dim, 0.0);
    s.centroid_valid = false;
  } else {
    s.centroid = member_mean(s.members, embeddings);
    s.centroid_valid = true;
  }
}

}  // namespace

PartitionHierarchy build_hierarchy(const GraphStore& graph, const EmbeddingIndex& embeddings,
                                   PartitionMethod method, int k, int l, int delta1, int delta2,
                                   std::uint64_t seed, int max_iters) {
  std::vector<NodeId> nodes = graph.node_ids();
  if (delta1 <= 0) delta1 = default_delta(nodes.size(), k);

  PartitionHierarchy hier;
  hier.method = method;
  hier.k = k;
  hier.l = l;
  hier.delta1 = delta1;
  hier.seed = seed;

  std::vector<std::vector<NodeId>> level1;
  if (method == PartitionMethod::Blpa) {
    level1 = partition_blpa(graph, nodes, k, delta1, mix_seed(seed, 1), max_iters);
  } else {
    level1 = partition_bekm(embeddings, nodes, k, delta1, mix_seed(seed, 1), max_iters).shards;
  }

  int max_delta2 = 0;
  for (int i = 0; i < k; ++i) {
    hier.first.push_back(make_shard(level1[i], embeddings));
    const auto& members = hier.first.back().members;
    int d2 = delta2 > 0 ? delta2 : default_delta(members.size(), l);
    max_delta2 = std::max(max_delta2, d2);

    std::vector<std::vector<NodeId>> level2;
    if (members.empty()) {
      level2.assign(l, {});
    } else if (static_cast<std::size_t>(l) > members.size()) {
      // Fewer members than sub-shards: singletons, remainder empty.
      level2.assign(l, {});
      for (std::size_t m = 0; m < members.size(); ++m) level2[m].push_back(members[m]);
    } else if (method == PartitionMethod::Blpa) {
      level2 = partition_blpa(graph, members, l, d2, mix_seed(seed, 1000 + i), max_iters);
    } else {
      level2 =
          partition_bekm(embeddings, members, l, d2, mix_seed(seed, 1000 + i), max_iters).shards;
    }
    std::vector<Shard> subs;
    for (int j = 0; j < l; ++j) subs.push_back(make_shard(level2[j], embeddings));
    hier.second.push_back(std::move(subs));
  }
  hier.delta2 = delta2 > 0 ? delta2 : max_delta2;
  return hier;
}

std::pair<int, int> hierarchy_remove_node(PartitionHierarchy& hier,
                                          const EmbeddingIndex& embeddings, NodeId v) {
  auto loc = hier.locate(v);
  if (!loc || loc->second < 0)
    throw DataError("hierarchy: node " + std::to_string(v) + " not in hierarchy");
  auto [i, j] = *loc;
  auto& s = hier.first[i].members;
  s.erase(std::lower_bound(s.begin(), s.end(), v));
  auto& p = hier.second[i][j].members;
  p.erase(std::lower_bound(p.begin(), p.end(), v));
  refresh_centroid(hier.first[i], embeddings);
  refresh_centroid(hier.second[i][j], embeddings);
  return {i, j};
}

AssignResult assign_new_node(PartitionHierarchy& hier, const EmbeddingIndex& embeddings,
                             NodeId v, const std::set<int>& supported_set) {
  const auto& b = embeddings.vectors.at(v);
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < hier.k; ++i) {
    const auto& s = hier.first[i];
    if (!s.centroid_valid) continue;  // empty shard: distance +inf
    if (s.members.size() >= static_cast<std::size_t>(hier.delta1)) continue;
    double d = l2_distance(b, s.centroid);
    if (d < best_d) {  // strict: ties keep the lowest index
      best_d = d;
      best = i;
    }
  }
  if (best < 0) throw CapacityError(1, "assign: all first-level shards at capacity");

  AssignResult result;
  result.first = best;
  auto& s = hier.first[best].members;
  s.insert(std::lower_bound(s.begin(), s.end(), v), v);
  refresh_centroid(hier.first[best], embeddings);

  if (supported_set.count(best)) {
    int bj = -1;
    double bd = std::numeric_limits<double>::infinity();
    for (int j = 0; j < static_cast<int>(hier.second[best].size()); ++j) {
      const auto& p = hier.second[best][j];
      if (!p.centroid_valid) continue;
      if (p.members.size() >= static_cast<std::size_t>(hier.delta2)) continue;
      double d = l2_distance(b, p.centroid);
      if (d < bd) {
        bd = d;
        bj = j;
      }
    }
    if (bj < 0) {
      // No open sub-shard: place into the first empty one if any.
      for (int j = 0; j < static_cast<int>(hier.second[best].size()); ++j)
        if (hier.second[best][j].members.empty()) {
          bj = j;
          break;
        }
    }
    if (bj < 0) throw CapacityError(2, "assign: all second-level shards of shard " +
                                    std::to_string(best) + " at capacity");
    auto& p = hier.second[best][bj].members;
    p.insert(std::lower_bound(p.begin(), p.end(), v), v);
    refresh_centroid(hier.second[best][bj], embeddings);
    result.second = bj;
  } else {
    // Keep the two levels tiling: the node still needs a sub-shard slot.
    int bj = -1;
    std::size_t smallest = std::numeric_limits<std::size_t>::max();
    for (int j = 0; j < static_cast<int>(hier.second[best].size()); ++j) {
      std::size_t sz = hier.second[best][j].members.size();
      if (sz < static_cast<std::size_t>(hier.delta2) && sz < smallest) {
        smallest = sz;
        bj = j;
      }
    }
    if (bj < 0) throw CapacityError(2, "assign: all second-level shards of shard " +
                                    std::to_string(best) + " at capacity");
    auto& p = hier.second[best][bj].members;
    p.insert(std::lower_bound(p.begin(), p.end(), v), v);
    refresh_centroid(hier.second[best][bj], embeddings);
  }
  return result;
}

std::string hierarchy_to_json(const PartitionHierarchy& hier) {
  json j;
  j["method"] = to_string(hier.method);
  j["k"] = hier.k;
  j["l"] = hier.l;
  j["delta1"] = hier.delta1;
  j["delta2"] = hier.delta2;
  j["seed"] = hier.seed;
  json first = json::array();
  for (const auto& s : hier.first) {
    json e;
    e["members"] = s.members;
    if (s.centroid_valid)
      e["centroid"] = s.centroid;
    else
      e["centroid"] = nullptr;
    first.push_back(std::move(e));
  }
  j["first_level"] = std::move(first);
  json second = json::array();
  for (const auto& subs : hier.second) {
    json row = json::array();
    for (const auto& p : subs) {
      json e;
      e["members"] = p.members;
      if (p.centroid_valid)
        e["centroid"] = p.centroid;
      else
        e["centroid"] = nullptr;
      row.push_back(std::move(e));
    }
    second.push_back(std::move(row));
  }
  j["second_level"] = std::move(second);
  return j.dump(2);
}

PartitionHierarchy hierarchy_from_json(const std::string& text) {
  json j = json::parse(text);
  PartitionHierarchy hier;
  hier.method = partition_method_from_string(j.at("method").get<std::string>());
  hier.k = j.at("k").get<int>();
  hier.l = j.at("l").get<int>();
  hier.delta1 = j.at("delta1").get<int>();
  hier.delta2 = j.at("delta2").get<int>();
  hier.seed = j.at("seed").get<std::uint64_t>();
  auto read_shard = [](const json& e) {
    Shard s;
    s.members = e.at("members").get<std::vector<NodeId>>();
    if (!e.at("centroid").is_null()) {
      s.centroid = e["centroid"].get<std::vector<double>>();
      s.centroid_valid = true;
    }
    return s;
  };
  for (const auto& e : j.at("first_level")) hier.first.push_back(read_shard(e));
  for (const auto& row : j.at("second_level")) {
    std::vector<Shard> subs;
    for (const auto& e : row) subs.push_back(read_shard(e));
    hier.second.push_back(std::move(subs));
  }
  return hier;
}

}  // namespace bgml
