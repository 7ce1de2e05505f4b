#include "bgml/graph.hpp"

#include <algorithm>
#include <cmath>

namespace bgml {

GraphStore::GraphStore(int feat_dim, int channels)
    : feat_dim_(feat_dim), channels_(channels) {
  if (feat_dim <= 0 || channels <= 0)
    throw ConfigError("graph: feature dims must be positive");
}

void GraphStore::add_node(NodeId id, Mat features, int label) {
  if (nodes_.count(id)) throw DataError("graph: duplicate node id " + std::to_string(id));
  if (features.rows != feat_dim_ || features.cols != channels_)
    throw DataError("graph: feature shape mismatch for node " + std::to_string(id));
  NodeRecord rec;
  rec.features = std::move(features);
  rec.label = label;
  nodes_.emplace(id, std::move(rec));
  if (label != kUnlabeled && label + 1 > num_classes_) num_classes_ = label + 1;
}

void GraphStore::add_edge(NodeId u, NodeId v) {
  if (u == v) throw DataError("graph: self-loop on node " + std::to_string(u));
  auto iu = nodes_.find(u);
  auto iv = nodes_.find(v);
  if (iu == nodes_.end() || iv == nodes_.end())
    throw DataError("graph: edge endpoint missing: " + std::to_string(u) + "-" +
                    std::to_string(v));
  auto& nu = iu->second.neighbors;
  auto pos = std::lower_bound(nu.begin(), nu.end(), v);
  if (pos != nu.end() && *pos == v) return;  // already present
  nu.insert(pos, v);
  auto& nv = iv->second.neighbors;
  nv.insert(std::lower_bound(nv.begin(), nv.end(), u), u);
  ++num_edges_;
}

bool GraphStore::has_edge(NodeId u, NodeId v) const {
  auto it = nodes_.find(u);
  if (it == nodes_.end()) return false;
  const auto& nu = it->second.neighbors;
  return std::binary_search(nu.begin(), nu.end(), v);
}

std::vector<std::pair<NodeId, NodeId>> GraphStore::remove_node(NodeId id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end())
    throw DataError("graph: cannot remove absent node " + std::to_string(id));
  std::vector<std::pair<NodeId, NodeId>> removed;
  for (NodeId nb : it->second.neighbors) {
    auto& list = nodes_.at(nb).neighbors;
    list.erase(std::lower_bound(list.begin(), list.end(), id));
    removed.emplace_back(std::min(id, nb), std::max(id, nb));
  }
  num_edges_ -= it->second.neighbors.size();
  nodes_.erase(it);
  return removed;
}

const NodeRecord& GraphStore::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw DataError("graph: unknown node " + std::to_string(id));
  return it->second;
}

std::vector<NodeId> GraphStore::node_ids() const {
  std::vector<NodeId> ids;
  ids.reserve(nodes_.size());
  for (const auto& [id, _] : nodes_) ids.push_back(id);
  return ids;
}

void GraphStore::set_num_classes(int k) {
  if (k < num_classes_) throw InvariantError("graph: num_classes cannot shrink");
  num_classes_ = k;
}

void GraphStore::check_invariants() const {
  std::size_t half_edges = 0;
  for (const auto& [id, rec] : nodes_) {
    if (rec.features.rows != feat_dim_ || rec.features.cols != channels_)
      throw InvariantError("graph: feature shape violation at node " + std::to_string(id));
    NodeId prev = id;  // also catches self-loop when first neighbor == id
    bool first = true;
    for (NodeId nb : rec.neighbors) {
      if (nb == id) throw InvariantError("graph: self-loop at node " + std::to_string(id));
      if (!first && nb <= prev)
        throw InvariantError("graph: adjacency not sorted/unique at node " +
                             std::to_string(id));
      first = false;
      prev = nb;
      auto it = nodes_.find(nb);
      if (it == nodes_.end())
        throw InvariantError("graph: dangling neighbor " + std::to_string(nb) + " of " +
                             std::to_string(id));
      const auto& back = it->second.neighbors;
      if (!std::binary_search(back.begin(), back.end(), id))
        throw InvariantError("graph: asymmetric edge " + std::to_string(id) + "-" +
                             std::to_string(nb));
    }
    half_edges += rec.neighbors.size();
  }
  if (half_edges != 2 * num_edges_)
    throw InvariantError("graph: edge count out of sync");
}

EventReport apply_event(GraphStore& graph, const TimelineEvent& event) {
  // Validate before mutating.
  std::set<NodeId> forget(event.forget_nodes.begin(), event.forget_nodes.end());
  for (NodeId v : event.forget_nodes)
    if (!graph.contains(v))
      throw DataError("event t=" + std::to_string(event.timestamp) +
                      ": forgetting absent node " + std::to_string(v));
  for (const auto& nn : event.add_nodes) {
    if (forget.count(nn.id))
      throw DataError("event t=" + std::to_string(event.timestamp) + ": node " +
                      std::to_string(nn.id) + " both forgotten and added");
    if (graph.contains(nn.id))
      throw DataError("event t=" + std::to_string(event.timestamp) + ": adding existing id " +
                      std::to_string(nn.id));
  }

  EventReport report;
  std::set<std::pair<NodeId, NodeId>> seen;
  for (NodeId v : forget) {  // ascending; forgetting precedes insertion
    for (auto& e : graph.remove_node(v))
      if (seen.insert(e).second) report.removed_edges.push_back(e);
  }
  for (const auto& nn : event.add_nodes) {
    graph.add_node(nn.id, nn.features, nn.label);
    report.inserted.push_back(nn.id);
  }
  return report;
}

GraphStore generate_sbm(int num_blocks, int nodes_per_block, double p_in, double p_out,
                        int feature_dim, double signal, std::uint64_t seed) {
  if (num_blocks <= 0 || nodes_per_block <= 0)
    throw ConfigError("sbm: node counts must be positive");
  if (!(p_out >= 0.0 && p_out <= p_in && p_in <= 1.0))
    throw ConfigError("sbm: need 0 <= p_out <= p_in <= 1");
  if (signal < 0.0) throw ConfigError("sbm: signal must be >= 0");
  if (feature_dim <= 0) throw ConfigError("sbm: feature_dim must be positive");

  const int n = num_blocks * nodes_per_block;
  GraphStore g(feature_dim, 1);
  Rng rng(seed);

  for (int v = 0; v < n; ++v) {
    int block = v / nodes_per_block;
    Mat x(feature_dim, 1);
    for (int f = 0; f < feature_dim; ++f) x(f, 0) = rng.gaussian();
    x(block % feature_dim, 0) += signal;  // block-specific axis shift
    g.add_node(v, std::move(x), block);
  }
  for (int u = 0; u < n; ++u) {
    int bu = u / nodes_per_block;
    for (int v = u + 1; v < n; ++v) {
      double p = (bu == v / nodes_per_block) ? p_in : p_out;
      if (rng.next_double() < p) g.add_edge(u, v);
    }
  }
  g.set_num_classes(num_blocks);
  return g;
}

namespace {

// Largest-remainder apportionment of `total` across per-class counts.
std::vector<std::size_t> apportion(const std::vector<std::size_t>& class_sizes,
                                   std::size_t total) {
  std::size_t n = 0;
  for (auto c : class_sizes) n += c;
  std::vector<std::size_t> quota(class_sizes.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;  // (-frac, class)
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < class_sizes.size(); ++c) {
    double exact = n == 0 ? 0.0
                          : static_cast<double>(total) * static_cast<double>(class_sizes[c]) /
                                static_cast<double>(n);
    quota[c] = static_cast<std::size_t>(exact);
    if (quota[c] > class_sizes[c]) quota[c] = class_sizes[c];
    assigned += quota[c];
    remainders.emplace_back(-(exact - static_cast<double>(quota[c])), c);
  }
  std::sort(remainders.begin(), remainders.end());
  for (auto& [negfrac, c] : remainders) {
    if (assigned >= total) break;
    if (quota[c] < class_sizes[c]) {
      ++quota[c];
      ++assigned;
    }
  }
  return quota;
}

}  // namespace

SplitAssignment split_nodes(const GraphStore& graph, double train_frac,
                            double valid_frac_of_train, std::uint64_t seed,
                            std::vector<std::string>* warnings) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw ConfigError("split: train_frac must be in (0,1)");
  if (!(valid_frac_of_train > 0.0 && valid_frac_of_train < 1.0))
    throw ConfigError("split: valid_frac_of_train must be in (0,1)");

  std::map<int, std::vector<NodeId>> by_class;
  std::size_t labeled = 0;
  for (NodeId id : graph.node_ids()) {
    int y = graph.node(id).label;
    if (y != kUnlabeled) {
      by_class[y].push_back(id);
      ++labeled;
    }
  }
  if (labeled < 10) throw DataError("split: need at least 10 labeled nodes");

  bool stratified = true;
  for (const auto& [y, members] : by_class)
    if (members.size() < 3) stratified = false;

  // Floor with a tiny guard so exact fractions are not lost to rounding
  // (0.2 * 1000 evaluates just below 200 in binary floating point).
  const std::size_t n_test = static_cast<std::size_t>(
      std::floor((1.0 - train_frac) * static_cast<double>(labeled) + 1e-9));
  Rng rng(seed);
  SplitAssignment out;

  auto take = [&](std::vector<NodeId>& pool, std::size_t n_t, std::size_t n_v) {
    rng.shuffle(pool);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (i < n_t)
        out.test.push_back(pool[i]);
      else if (i < n_t + n_v)
        out.valid.push_back(pool[i]);
      else
        out.train.push_back(pool[i]);
    }
  };

  if (stratified) {
    std::vector<int> classes;
    std::vector<std::size_t> sizes;
    for (const auto& [y, members] : by_class) {
      classes.push_back(y);
      sizes.push_back(members.size());
    }
    auto test_quota = apportion(sizes, n_test);
    std::vector<std::size_t> pool_sizes(sizes.size());
    for (std::size_t c = 0; c < sizes.size(); ++c) pool_sizes[c] = sizes[c] - test_quota[c];
    std::size_t train_pool = labeled - n_test;
    std::size_t n_valid = static_cast<std::size_t>(
        std::floor(valid_frac_of_train * static_cast<double>(train_pool) + 1e-9));
    auto valid_quota = apportion(pool_sizes, n_valid);
    for (std::size_t c = 0; c < classes.size(); ++c) {
      auto pool = by_class.at(classes[c]);
      std::sort(pool.begin(), pool.end());
      take(pool, test_quota[c], valid_quota[c]);
    }
  } else {
    if (warnings) warnings->push_back("split: class with < 3 labeled nodes, unstratified");
    std::vector<NodeId> pool;
    for (const auto& [y, members] : by_class)
      pool.insert(pool.end(), members.begin(), members.end());
    std::sort(pool.begin(), pool.end());
    std::size_t train_pool = labeled - n_test;
    std::size_t n_valid = static_cast<std::size_t>(
        std::floor(valid_frac_of_train * static_cast<double>(train_pool) + 1e-9));
    take(pool, n_test, n_valid);
  }

  std::sort(out.train.begin(), out.train.end());
  std::sort(out.valid.begin(), out.valid.end());
  std::sort(out.test.begin(), out.test.end());

  std::set<int> train_classes;
  for (NodeId id : out.train) train_classes.insert(graph.node(id).label);
  for (const auto& [y, members] : by_class)
    if (!train_classes.count(y))
      throw DataError("split: class " + std::to_string(y) + " has no training nodes");
  return out;
}

}  // namespace bgml
