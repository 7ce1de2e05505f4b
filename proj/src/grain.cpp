#include "bgml/grain.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace bgml {

using json = nlohmann::json;

Mat FeatureReducer::reduce(const Mat& full) const {
  if (full.rows != original_dim)
    throw DataError("reducer: feature dim mismatch");
  Mat out(reduced_dim, full.cols);
  for (int r = 0; r < reduced_dim; ++r)
    for (int c = 0; c < full.cols; ++c) out(r, c) = full(selected[r], c);
  return out;
}

FeatureReducer fit_reducer(const GraphStore& graph, const std::vector<NodeId>& reference_nodes,
                           int cap) {
  if (cap < 2) throw ConfigError("reducer: cap must be >= 2");
  const int f_dim = graph.feat_dim();
  FeatureReducer red;
  red.original_dim = f_dim;
  red.reduced_dim = std::min(f_dim, cap);
  if (red.reduced_dim == f_dim) {
    red.selected.resize(f_dim);
    for (int f = 0; f < f_dim; ++f) red.selected[f] = f;
    return red;
  }

  // Population variance of the channel-averaged value per feature index.
  std::vector<double> mean(f_dim, 0.0), m2(f_dim, 0.0);
  for (NodeId id : reference_nodes) {
    const Mat& x = graph.node(id).features;
    for (int f = 0; f < f_dim; ++f) {
      double v = 0.0;
      for (int c = 0; c < x.cols; ++c) v += x(f, c);
      v /= x.cols;
      mean[f] += v;
      m2[f] += v * v;
    }
  }
  const double n = static_cast<double>(reference_nodes.size());
  std::vector<std::pair<double, int>> ranked(f_dim);  // (-variance, index)
  for (int f = 0; f < f_dim; ++f) {
    double mu = mean[f] / n;
    ranked[f] = {-(m2[f] / n - mu * mu), f};
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  red.selected.resize(red.reduced_dim);
  for (int r = 0; r < red.reduced_dim; ++r) red.selected[r] = ranked[r].second;
  std::sort(red.selected.begin(), red.selected.end());
  return red;
}

FeatureGrain build_grain(const GrainSource& source, const AttentionParams& attn,
                         GrainCache* cache) {
  const Mat& x = source.self_features;
  const int f_dim = x.rows;
  const int channels = x.cols;

  // Self-fallback for isolated nodes.
  const bool fallback = source.neighbor_ids.empty();
  const int n = fallback ? 1 : static_cast<int>(source.neighbor_ids.size());
  auto neighbor_feat = [&](int j) -> const Mat& {
    return fallback ? x : source.neighbor_features[j];
  };

  FeatureGrain grain;
  grain.node = source.node;
  grain.label = source.label;
  grain.features = x;
  if (cache) {
    cache->n_eff = n;
    cache->self_fallback = fallback;
    cache->raw_sum.clear();
    cache->omega.assign(channels, {});
    cache->preact.assign(channels, {});
  }

  for (int c = 0; c < channels; ++c) {
    // Attention weights over neighbors.
    std::vector<double> pre(n, 0.0);
    double ws_x = 0.0;
    for (int f = 0; f < f_dim; ++f) ws_x += attn.w_self[f] * x(f, c);
    for (int j = 0; j < n; ++j) {
      const Mat& y = neighbor_feat(j);
      double wn_y = 0.0;
      for (int f = 0; f < f_dim; ++f) wn_y += attn.w_neigh[f] * y(f, c);
      double z = ws_x + wn_y + attn.bias;
      pre[j] = z;
    }
    std::vector<double> act(n, 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      act[j] = pre[j] >= 0.0 ? pre[j] : attn.leaky_slope * pre[j];
      mx = std::max(mx, act[j]);
    }
    std::vector<double> omega(n, 0.0);
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      omega[j] = std::exp(act[j] - mx);
      denom += omega[j];
    }
    for (int j = 0; j < n; ++j) omega[j] /= denom;

    // Weighted outer-product sum, then signed square root.
    Mat raw(f_dim, f_dim);
    for (int j = 0; j < n; ++j) {
      const Mat& y = neighbor_feat(j);
      double w = omega[j] / n;
      for (int p = 0; p < f_dim; ++p) {
        double xw = x(p, c) * w;
        for (int q = 0; q < f_dim; ++q) raw(p, q) += xw * y(q, c);
      }
    }
    Mat adj(f_dim, f_dim);
    for (std::size_t i = 0; i < raw.a.size(); ++i) adj.a[i] = sgnroot(raw.a[i]);

    // Normalize with self-loop and absolute-value degrees.
    std::vector<double> inv_sqrt_deg(f_dim, 0.0);
    for (int p = 0; p < f_dim; ++p) {
      double deg = 1.0;
      for (int q = 0; q < f_dim; ++q) deg += std::abs(adj(p, q));
      inv_sqrt_deg[p] = 1.0 / std::sqrt(deg);
    }
    Mat norm(f_dim, f_dim);
    for (int p = 0; p < f_dim; ++p)
      for (int q = 0; q < f_dim; ++q) {
        double b = adj(p, q) + (p == q ? 1.0 : 0.0);
        norm(p, q) = b * inv_sqrt_deg[p] * inv_sqrt_deg[q];
      }

    grain.feat_adj.push_back(std::move(adj));
    grain.norm_adj.push_back(std::move(norm));
    if (cache) {
      cache->raw_sum.push_back(std::move(raw));
      cache->omega[c] = std::move(omega);
      cache->preact[c] = std::move(pre);
    }
  }
  return grain;
}

std::string GrainSource::to_json() const {
  json j;
  j["node"] = node;
  j["label"] = label;
  j["rows"] = self_features.rows;
  j["cols"] = self_features.cols;
  j["x"] = self_features.a;
  j["neighbors"] = neighbor_ids;
  json feats = json::array();
  for (const auto& m : neighbor_features) feats.push_back(m.a);
  j["neighbor_x"] = std::move(feats);
  return j.dump();
}

GrainSource GrainSource::from_json(const std::string& text) {
  json j = json::parse(text);
  GrainSource s;
  s.node = j.at("node").get<NodeId>();
  s.label = j.at("label").get<int>();
  int rows = j.at("rows").get<int>();
  int cols = j.at("cols").get<int>();
  s.self_features = Mat(rows, cols);
  s.self_features.a = j.at("x").get<std::vector<double>>();
  s.neighbor_ids = j.at("neighbors").get<std::vector<NodeId>>();
  for (const auto& arr : j.at("neighbor_x")) {
    Mat m(rows, cols);
    m.a = arr.get<std::vector<double>>();
    s.neighbor_features.push_back(std::move(m));
  }
  return s;
}

}  // namespace bgml
