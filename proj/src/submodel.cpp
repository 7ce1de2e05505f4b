#include "bgml/submodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace bgml {

bool SubModel::has_trained(NodeId v) const {
  return std::binary_search(trained_on.begin(), trained_on.end(), v);
}

void SubModel::add_trained(NodeId v) {
  auto pos = std::lower_bound(trained_on.begin(), trained_on.end(), v);
  if (pos == trained_on.end() || *pos != v) trained_on.insert(pos, v);
}

void SubModel::grow_classes(int new_num_classes) {
  if (new_num_classes <= num_classes) return;
  Mat grown(hidden, new_num_classes);
  for (int h = 0; h < hidden; ++h)
    for (int k = 0; k < num_classes; ++k) grown(h, k) = w_out(h, k);
  w_out = std::move(grown);
  b_out.resize(new_num_classes, 0.0);
  num_classes = new_num_classes;
}

SubModel init_submodel(int feat_dim, int channels, int hidden, int num_classes,
                       std::uint64_t seed) {
  SubModel m;
  m.feat_dim = feat_dim;
  m.channels = channels;
  m.hidden = hidden;
  m.num_classes = num_classes;
  m.rng_seed = seed;

  Rng rng(mix_seed(seed, 0x696e6974));  // init stream
  auto glorot = [&](Mat& w, int fan_in, int fan_out) {
    double s = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& x : w.a) x = rng.uniform(-s, s);
  };
  m.w1 = Mat(channels, hidden);
  glorot(m.w1, channels, hidden);
  m.w2 = Mat(hidden, hidden);
  glorot(m.w2, hidden, hidden);
  m.w_out = Mat(hidden, num_classes);
  glorot(m.w_out, hidden, num_classes);
  m.b_out.assign(num_classes, 0.0);

  m.attn.w_self.resize(feat_dim);
  m.attn.w_neigh.resize(feat_dim);
  double s_attn = std::sqrt(6.0 / (feat_dim + 1));
  for (double& x : m.attn.w_self) x = rng.uniform(-s_attn, s_attn);
  for (double& x : m.attn.w_neigh) x = rng.uniform(-s_attn, s_attn);
  m.attn.bias = 0.0;
  return m;
}

std::vector<double> forward(const SubModel& model, const FeatureGrain& grain,
                            ForwardCache* cache) {
  const int f_dim = model.feat_dim;
  const int hid = model.hidden;
  const int channels = model.channels;
  if (grain.features.rows != f_dim || grain.features.cols != channels ||
      static_cast<int>(grain.norm_adj.size()) != channels)
    throw InvariantError("forward: grain shape mismatch");

  if (cache) {
    cache->pre1.clear();
    cache->hidden1.clear();
    cache->mixed.clear();
    cache->pre2.clear();
    cache->hidden2.clear();
  }

  Mat h2_sum(f_dim, hid);
  for (int c = 0; c < channels; ++c) {
    const Mat& adj = grain.norm_adj[c];
    // First layer: adj * (x_c w1_c^T), relu.
    Mat m(f_dim, hid);
    for (int f = 0; f < f_dim; ++f) {
      double xf = grain.features(f, c);
      for (int h = 0; h < hid; ++h) m(f, h) = xf * model.w1(c, h);
    }
    Mat u = matmul(adj, m);
    Mat h1(f_dim, hid);
    for (std::size_t i = 0; i < u.a.size(); ++i) h1.a[i] = u.a[i] > 0.0 ? u.a[i] : 0.0;
    // Second layer: adj * h1 * w2, relu.
    Mat t = matmul(adj, h1);
    Mat v = matmul(t, model.w2);
    Mat h2(f_dim, hid);
    for (std::size_t i = 0; i < v.a.size(); ++i) h2.a[i] = v.a[i] > 0.0 ? v.a[i] : 0.0;
    for (std::size_t i = 0; i < h2.a.size(); ++i) h2_sum.a[i] += h2.a[i];
    if (cache) {
      cache->pre1.push_back(std::move(u));
      cache->hidden1.push_back(std::move(h1));
      cache->mixed.push_back(std::move(t));
      cache->pre2.push_back(std::move(v));
      cache->hidden2.push_back(std::move(h2));
    }
  }

  // Channel average, column-mean pooling, linear head, softmax.
  std::vector<double> pooled(hid, 0.0);
  for (int h = 0; h < hid; ++h) {
    double s = 0.0;
    for (int f = 0; f < f_dim; ++f) s += h2_sum(f, h);
    pooled[h] = s / (static_cast<double>(f_dim) * channels);
  }
  std::vector<double> logits(model.num_classes, 0.0);
  for (int k = 0; k < model.num_classes; ++k) {
    double s = model.b_out[k];
    for (int h = 0; h < hid; ++h) s += pooled[h] * model.w_out(h, k);
    logits[k] = s;
  }
  double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  std::vector<double> probs(model.num_classes, 0.0);
  for (int k = 0; k < model.num_classes; ++k) {
    probs[k] = std::exp(logits[k] - mx);
    denom += probs[k];
  }
  for (double& p : probs) p /= denom;
  if (cache) {
    cache->pooled = pooled;
    cache->probs = probs;
  }
  return probs;
}

namespace {

void zero_like(const SubModel& model, Gradients& g) {
  g.w1 = Mat(model.w1.rows, model.w1.cols);
  g.w2 = Mat(model.w2.rows, model.w2.cols);
  g.w_out = Mat(model.w_out.rows, model.w_out.cols);
  g.b_out.assign(model.b_out.size(), 0.0);
  g.w_self.assign(model.attn.w_self.size(), 0.0);
  g.w_neigh.assign(model.attn.w_neigh.size(), 0.0);
  g.bias = 0.0;
}

}  // namespace

double loss_and_gradients(const SubModel& model, const GrainSource& source, Gradients& grads) {
  if (source.label == kUnlabeled)
    throw DataError("loss: unlabeled grain for node " + std::to_string(source.node));
  const int f_dim = model.feat_dim;
  const int hid = model.hidden;
  const int channels = model.channels;
  const int classes = model.num_classes;

  GrainCache gc;
  FeatureGrain grain = build_grain(source, model.attn, &gc);
  ForwardCache fc;
  forward(model, grain, &fc);

  zero_like(model, grads);
  double loss = -std::log(std::max(fc.probs[source.label], 1e-300));

  // Head.
  std::vector<double> dlogits(fc.probs);
  dlogits[source.label] -= 1.0;
  for (int h = 0; h < hid; ++h)
    for (int k = 0; k < classes; ++k) grads.w_out(h, k) = fc.pooled[h] * dlogits[k];
  grads.b_out = dlogits;
  std::vector<double> dpooled(hid, 0.0);
  for (int h = 0; h < hid; ++h) {
    double s = 0.0;
    for (int k = 0; k < classes; ++k) s += model.w_out(h, k) * dlogits[k];
    dpooled[h] = s;
  }

  // Pooling spreads evenly over rows and channels.
  const double pool_scale = 1.0 / (static_cast<double>(f_dim) * channels);

  const Mat& x = source.self_features;
  const bool fallback = gc.self_fallback;
  const int n = gc.n_eff;
  auto neighbor_feat = [&](int j) -> const Mat& {
    return fallback ? x : source.neighbor_features[j];
  };

  for (int c = 0; c < channels; ++c) {
    const Mat& adj = grain.norm_adj[c];
    // dH2 for this channel.
    Mat dh2(f_dim, hid);
    for (int f = 0; f < f_dim; ++f)
      for (int h = 0; h < hid; ++h) dh2(f, h) = dpooled[h] * pool_scale;
    // Second layer.
    Mat dv(f_dim, hid);
    for (std::size_t i = 0; i < dv.a.size(); ++i)
      dv.a[i] = fc.pre2[c].a[i] > 0.0 ? dh2.a[i] : 0.0;
    Mat dw2 = matmul_tn(fc.mixed[c], dv);
    for (std::size_t i = 0; i < dw2.a.size(); ++i) grads.w2.a[i] += dw2.a[i];
    Mat dt = matmul_nt(dv, model.w2);
    Mat dadj = matmul_nt(dt, fc.hidden1[c]);
    Mat dh1 = matmul_tn(adj, dt);
    // First layer.
    Mat du(f_dim, hid);
    for (std::size_t i = 0; i < du.a.size(); ++i)
      du.a[i] = fc.pre1[c].a[i] > 0.0 ? dh1.a[i] : 0.0;
    {
      // M(f,h) = x_f * w1(c,h); U = adj * M.
      Mat m(f_dim, hid);
      for (int f = 0; f < f_dim; ++f) {
        double xf = x(f, c);
        for (int h = 0; h < hid; ++h) m(f, h) = xf * model.w1(c, h);
      }
      Mat dadj1 = matmul_nt(du, m);
      for (std::size_t i = 0; i < dadj.a.size(); ++i) dadj.a[i] += dadj1.a[i];
      Mat dm = matmul_tn(adj, du);
      for (int h = 0; h < hid; ++h) {
        double s = 0.0;
        for (int f = 0; f < f_dim; ++f) s += x(f, c) * dm(f, h);
        grads.w1(c, h) += s;
      }
    }

    // Through the normalization: adj_pq = (A_pq + [p==q]) / sqrt(D_p D_q),
    // D_p = 1 + sum_q |A_pq|.
    const Mat& feat_adj = grain.feat_adj[c];
    std::vector<double> inv_sqrt(f_dim, 0.0), deg(f_dim, 0.0);
    for (int p = 0; p < f_dim; ++p) {
      double d = 1.0;
      for (int q = 0; q < f_dim; ++q) d += std::abs(feat_adj(p, q));
      deg[p] = d;
      inv_sqrt[p] = 1.0 / std::sqrt(d);
    }
    std::vector<double> row_dot(f_dim, 0.0), col_dot(f_dim, 0.0);
    for (int p = 0; p < f_dim; ++p)
      for (int q = 0; q < f_dim; ++q) {
        row_dot[p] += dadj(p, q) * adj(p, q);
        col_dot[q] += dadj(p, q) * adj(p, q);
      }
    Mat da(f_dim, f_dim);
    for (int p = 0; p < f_dim; ++p)
      for (int q = 0; q < f_dim; ++q) {
        double g = dadj(p, q) * inv_sqrt[p] * inv_sqrt[q];
        double sgn = feat_adj(p, q) > 0.0 ? 1.0 : (feat_adj(p, q) < 0.0 ? -1.0 : 0.0);
        g -= sgn * (row_dot[p] + col_dot[p]) / (2.0 * deg[p]);
        da(p, q) = g;
      }

    // Through sgnroot: dS = dA / (2 sqrt(|S|)), defined 0 at the kink.
    const Mat& raw = gc.raw_sum[c];
    Mat ds(f_dim, f_dim);
    for (std::size_t i = 0; i < ds.a.size(); ++i) {
      double s = raw.a[i];
      ds.a[i] = s == 0.0 ? 0.0 : da.a[i] / (2.0 * std::sqrt(std::abs(s)));
    }

    // Through the attention-weighted outer products.
    // S = sum_j (omega_j / n) x y_j^T  =>  domega_j = (x^T dS y_j) / n.
    std::vector<double> xt_ds(f_dim, 0.0);
    for (int q = 0; q < f_dim; ++q) {
      double s = 0.0;
      for (int p = 0; p < f_dim; ++p) s += x(p, c) * ds(p, q);
      xt_ds[q] = s;
    }
    std::vector<double> domega(n, 0.0);
    for (int j = 0; j < n; ++j) {
      const Mat& y = neighbor_feat(j);
      double s = 0.0;
      for (int q = 0; q < f_dim; ++q) s += xt_ds[q] * y(q, c);
      domega[j] = s / n;
    }
    // Softmax.
    const auto& omega = gc.omega[c];
    double wsum = 0.0;
    for (int j = 0; j < n; ++j) wsum += omega[j] * domega[j];
    // LeakyReLU and linear attention terms.
    for (int j = 0; j < n; ++j) {
      double da_j = omega[j] * (domega[j] - wsum);
      double dpre = gc.preact[c][j] >= 0.0 ? da_j : model.attn.leaky_slope * da_j;
      const Mat& y = neighbor_feat(j);
      for (int f = 0; f < f_dim; ++f) {
        grads.w_self[f] += dpre * x(f, c);
        grads.w_neigh[f] += dpre * y(f, c);
      }
      grads.bias += dpre;
    }
  }
  return loss;
}

double grain_loss(const SubModel& model, const GrainSource& source) {
  FeatureGrain grain = build_grain(source, model.attn);
  auto probs = forward(model, grain);
  return -std::log(std::max(probs[source.label], 1e-300));
}

void apply_step(SubModel& model, const Gradients& grads, double lr, bool freeze_attention) {
  for (std::size_t i = 0; i < model.w1.a.size(); ++i) model.w1.a[i] -= lr * grads.w1.a[i];
  for (std::size_t i = 0; i < model.w2.a.size(); ++i) model.w2.a[i] -= lr * grads.w2.a[i];
  for (std::size_t i = 0; i < model.w_out.a.size(); ++i)
    model.w_out.a[i] -= lr * grads.w_out.a[i];
  for (std::size_t i = 0; i < model.b_out.size(); ++i) model.b_out[i] -= lr * grads.b_out[i];
  if (freeze_attention) return;
  for (std::size_t i = 0; i < model.attn.w_self.size(); ++i)
    model.attn.w_self[i] -= lr * grads.w_self[i];
  for (std::size_t i = 0; i < model.attn.w_neigh.size(); ++i)
    model.attn.w_neigh[i] -= lr * grads.w_neigh[i];
  model.attn.bias -= lr * grads.bias;
}

TrainReport train(SubModel& model, const std::vector<GrainSource>& sources,
                  const std::vector<GrainSource>& valid, const TrainOptions& opts,
                  std::uint64_t seed) {
  if (sources.empty()) throw DataError("train: empty grain set");
  for (const auto& s : sources)
    if (s.label == kUnlabeled)
      throw DataError("train: unlabeled grain for node " + std::to_string(s.node));

  SubModel fresh = init_submodel(model.feat_dim, model.channels, model.hidden,
                                 model.num_classes, seed);
  model = std::move(fresh);
  model.trained_on.clear();
  for (const auto& s : sources) model.trained_on.push_back(s.node);
  std::sort(model.trained_on.begin(), model.trained_on.end());

  std::vector<std::size_t> order(sources.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  Rng shuffle_rng(mix_seed(seed, 0x73687566));  // shuffle stream
  Gradients grads;
  double last_epoch_loss = 0.0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t idx : order) {
      total += loss_and_gradients(model, sources[idx], grads);
      apply_step(model, grads, opts.lr, opts.freeze_attention);
    }
    last_epoch_loss = total / static_cast<double>(sources.size());
  }

  TrainReport report;
  report.final_train_loss = opts.epochs > 0 ? last_epoch_loss : 0.0;
  if (!valid.empty()) {
    std::size_t correct = 0, counted = 0;
    for (const auto& vs : valid) {
      if (vs.label == kUnlabeled) continue;
      FeatureGrain grain = build_grain(vs, model.attn);
      auto probs = forward(model, grain);
      int best = 0;
      for (int k = 1; k < model.num_classes; ++k)
        if (probs[k] > probs[best]) best = k;
      if (best == vs.label) ++correct;
      ++counted;
    }
    report.valid_micro_f1 =
        counted == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(counted);
  }
  return report;
}

void incremental_step(SubModel& model, const GrainSource& source, double lr,
                      bool freeze_attention) {
  if (source.label == kUnlabeled)
    throw DataError("incremental: unlabeled grain for node " + std::to_string(source.node));
  if (model.has_trained(source.node))
    throw InvariantError("incremental: node " + std::to_string(source.node) +
                         " already presented to this model");
  Gradients grads;
  loss_and_gradients(model, source, grads);
  apply_step(model, grads, lr, freeze_attention);
  model.add_trained(source.node);
}

GradCheckReport gradient_check(const SubModel& model, const GrainSource& source, double h) {
  if (h <= 0.0) throw ConfigError("gradient_check: h must be positive");
  Gradients analytic;
  loss_and_gradients(model, source, analytic);

  GradCheckReport report;
  {
    GrainCache gc;
    build_grain(source, model.attn, &gc);
    for (const auto& raw : gc.raw_sum)
      for (double s : raw.a)
        if (std::abs(s) < 1e-9) report.attention_skipped = true;
  }

  SubModel probe = model;
  auto fd = [&](double* param) {
    double keep = *param;
    *param = keep + h;
    double up = grain_loss(probe, source);
    *param = keep - h;
    double down = grain_loss(probe, source);
    *param = keep;
    return (up - down) / (2.0 * h);
  };
  auto check_group = [&](const std::string& name, double* params, const double* grads,
                         std::size_t count) {
    double worst = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      double g_fd = fd(params + i);
      double g_an = grads[i];
      double rel = std::abs(g_fd - g_an) / std::max(1e-8, std::abs(g_fd) + std::abs(g_an));
      worst = std::max(worst, rel);
    }
    report.per_group[name] = worst;
    report.max_rel_error = std::max(report.max_rel_error, worst);
  };

  check_group("w1", probe.w1.a.data(), analytic.w1.a.data(), probe.w1.a.size());
  check_group("w2", probe.w2.a.data(), analytic.w2.a.data(), probe.w2.a.size());
  check_group("w_out", probe.w_out.a.data(), analytic.w_out.a.data(), probe.w_out.a.size());
  check_group("b_out", probe.b_out.data(), analytic.b_out.data(), probe.b_out.size());
  if (!report.attention_skipped) {
    check_group("w_self", probe.attn.w_self.data(), analytic.w_self.data(),
                probe.attn.w_self.size());
    check_group("w_neigh", probe.attn.w_neigh.data(), analytic.w_neigh.data(),
                probe.attn.w_neigh.size());
    check_group("bias", &probe.attn.bias, &analytic.bias, 1);
  }
  return report;
}

namespace {

template <class T>
void put_raw(std::vector<std::uint8_t>& out, T value) {
  // Little-endian on all supported targets.
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T get_raw(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw DataError("checkpoint: truncated");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

std::vector<std::uint8_t> checkpoint_bytes(const SubModel& model) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'F', 'G', 'N', '1'});
  put_raw<std::int32_t>(out, model.feat_dim);
  put_raw<std::int32_t>(out, model.channels);
  put_raw<std::int32_t>(out, model.hidden);
  put_raw<std::int32_t>(out, model.num_classes);
  for (double v : model.w1.a) put_raw(out, v);
  for (double v : model.w2.a) put_raw(out, v);
  for (double v : model.w_out.a) put_raw(out, v);
  for (double v : model.b_out) put_raw(out, v);
  for (double v : model.attn.w_self) put_raw(out, v);
  for (double v : model.attn.w_neigh) put_raw(out, v);
  put_raw(out, model.attn.bias);
  put_raw<std::uint64_t>(out, model.trained_on.size());
  for (NodeId id : model.trained_on) put_raw<std::int64_t>(out, id);
  return out;
}

SubModel checkpoint_from_bytes(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || bytes[0] != 'F' || bytes[1] != 'G' || bytes[2] != 'N' ||
      bytes[3] != '1')
    throw DataError("checkpoint: bad magic");
  std::size_t pos = 4;
  SubModel m;
  m.feat_dim = get_raw<std::int32_t>(bytes, pos);
  m.channels = get_raw<std::int32_t>(bytes, pos);
  m.hidden = get_raw<std::int32_t>(bytes, pos);
  m.num_classes = get_raw<std::int32_t>(bytes, pos);
  m.w1 = Mat(m.channels, m.hidden);
  for (double& v : m.w1.a) v = get_raw<double>(bytes, pos);
  m.w2 = Mat(m.hidden, m.hidden);
  for (double& v : m.w2.a) v = get_raw<double>(bytes, pos);
  m.w_out = Mat(m.hidden, m.num_classes);
  for (double& v : m.w_out.a) v = get_raw<double>(bytes, pos);
  m.b_out.resize(m.num_classes);
  for (double& v : m.b_out) v = get_raw<double>(bytes, pos);
  m.attn.w_self.resize(m.feat_dim);
  for (double& v : m.attn.w_self) v = get_raw<double>(bytes, pos);
  m.attn.w_neigh.resize(m.feat_dim);
  for (double& v : m.attn.w_neigh) v = get_raw<double>(bytes, pos);
  m.attn.bias = get_raw<double>(bytes, pos);
  std::uint64_t count = get_raw<std::uint64_t>(bytes, pos);
  m.trained_on.resize(count);
  for (auto& id : m.trained_on) id = get_raw<std::int64_t>(bytes, pos);
  return m;
}

void save_checkpoint(const SubModel& model, const std::string& path) {
  auto bytes = checkpoint_bytes(model);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

SubModel load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes);
}

}  // namespace bgml
