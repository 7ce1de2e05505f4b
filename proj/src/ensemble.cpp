#include "bgml/ensemble.hpp"

#include <algorithm>

#include <json.hpp>

namespace bgml {

using json = nlohmann::json;

std::string to_string(Aggregation a) {
  return a == Aggregation::Majority ? "majority" : "mean";
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "majority" || s == "MajAggr") return Aggregation::Majority;
  if (s == "mean" || s == "MeanAggr") return Aggregation::Mean;
  throw ConfigError("unknown aggregation: " + s);
}

namespace {

int argmax_lowest(const std::vector<double>& v) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(v.size()); ++k)
    if (v[k] > v[best]) best = k;
  return best;
}

std::vector<double> model_probs(const SubModel& model, const GrainSource& source) {
  FeatureGrain grain = build_grain(source, model.attn);
  return forward(model, grain);
}

}  // namespace

std::map<int, double> score_models(const std::map<int, SubModel>& models,
                                   const std::vector<GrainSource>& valid_sources) {
  if (valid_sources.empty()) throw DataError("score: empty validation set");
  std::map<int, double> scores;
  for (const auto& [idx, model] : models) {
    std::size_t correct = 0, counted = 0;
    for (const auto& vs : valid_sources) {
      if (vs.label == kUnlabeled) continue;
      auto probs = model_probs(model, vs);
      if (argmax_lowest(probs) == vs.label) ++correct;
      ++counted;
    }
    if (counted == 0) throw DataError("score: no labeled validation samples");
    scores[idx] = static_cast<double>(correct) / static_cast<double>(counted);
  }
  return scores;
}

std::set<int> low_rank(const std::map<int, double>& scores, int tau) {
  if (tau > static_cast<int>(scores.size()))
    throw ConfigError("low_rank: tau exceeds model count");
  std::vector<std::pair<double, int>> ranked;
  for (const auto& [idx, s] : scores) ranked.emplace_back(s, idx);
  std::sort(ranked.begin(), ranked.end());  // score asc, then index asc
  std::set<int> out;
  for (int i = 0; i < tau; ++i) out.insert(ranked[i].second);
  return out;
}

std::uint64_t submodel_seed(std::uint64_t base, int level, int i, int j) {
  return mix_seed(base, static_cast<std::uint64_t>(level) * 0x100000000ull +
                            static_cast<std::uint64_t>(i) * 0x10000ull +
                            static_cast<std::uint64_t>(j));
}

std::map<SecondKey, SubModel> build_support(
    const std::set<int>& tau_idx,
    const std::map<SecondKey, std::vector<GrainSource>>& shard_sources,
    const std::map<SecondKey, std::vector<GrainSource>>& shard_valid, int feat_dim, int channels,
    int hidden, int num_classes, const TrainOptions& opts, std::uint64_t model_seed_base,
    SupportBuildReport* report) {
  std::map<SecondKey, SubModel> out;
  for (int i : tau_idx) {
    for (const auto& [key, sources] : shard_sources) {
      if (key.first != i) continue;
      if (sources.empty()) {
        if (report)
          report->skipped.push_back(std::to_string(key.first) + "_" +
                                    std::to_string(key.second));
        continue;
      }
      SubModel model = init_submodel(feat_dim, channels, hidden, num_classes,
                                     submodel_seed(model_seed_base, 2, key.first, key.second));
      auto vit = shard_valid.find(key);
      static const std::vector<GrainSource> kNoValid;
      train(model, sources, vit == shard_valid.end() ? kNoValid : vit->second, opts,
            model.rng_seed);
      out.emplace(key, std::move(model));
    }
  }
  return out;
}

int ensemble_predict(const EnsembleState& state, const GrainSource& source,
                     PredictDetail* detail) {
  if (state.first.empty()) throw InvariantError("predict: no first-level models");
  const int classes = state.first.begin()->second.num_classes;
  const double lambda = state.support_weight;
  const int l = std::max(1, state.level2_count);

  std::vector<std::vector<double>> alphas;
  for (const auto& [idx, model] : state.first) {
    std::vector<double> alpha = model_probs(model, source);
    if (detail) detail->first_probs[idx] = alpha;

    if (state.tau_idx.count(idx)) {
      // Blend this model's decision with its supporters.
      std::vector<std::pair<double, std::vector<double>>> weighted;
      weighted.emplace_back(1.0 - lambda, alpha);
      for (const auto& [key, support] : state.second) {
        if (key.first != idx) continue;
        auto beta = model_probs(support, source);
        if (detail) detail->second_probs[key] = beta;
        weighted.emplace_back(lambda / l, std::move(beta));
      }
      if (state.aggregation == Aggregation::Mean) {
        std::vector<double> mix(classes, 0.0);
        double total = 0.0;
        for (const auto& [w, p] : weighted) {
          for (int k = 0; k < classes; ++k) mix[k] += w * p[k];
          total += w;
        }
        for (double& v : mix) v /= total;
        alpha = std::move(mix);
      } else {
        std::vector<double> votes(classes, 0.0);
        for (const auto& [w, p] : weighted) votes[argmax_lowest(p)] += w;
        int winner = argmax_lowest(votes);
        std::vector<double> onehot(classes, 0.0);
        onehot[winner] = 1.0;
        alpha = std::move(onehot);
      }
      if (detail) detail->first_probs[idx] = alpha;
    }
    alphas.push_back(std::move(alpha));
  }

  if (state.aggregation == Aggregation::Mean) {
    std::vector<double> mix(classes, 0.0);
    for (const auto& p : alphas)
      for (int k = 0; k < classes; ++k) mix[k] += p[k];
    for (double& v : mix) v /= static_cast<double>(alphas.size());
    return argmax_lowest(mix);
  }
  std::vector<double> votes(classes, 0.0);
  for (const auto& p : alphas) votes[argmax_lowest(p)] += 1.0;
  return argmax_lowest(votes);
}

std::string ensemble_to_json(const EnsembleState& state,
                             const std::map<std::string, std::string>& checkpoint_files) {
  json j;
  j["aggregation"] = to_string(state.aggregation);
  j["lambda"] = state.support_weight;
  j["tau"] = state.tau;
  j["tau_idx"] = state.tau_idx;
  json scores = json::object();
  for (const auto& [idx, s] : state.scores) scores[std::to_string(idx)] = s;
  j["scores"] = std::move(scores);
  json files = json::object();
  for (const auto& [name, path] : checkpoint_files) files[name] = path;
  j["checkpoints"] = std::move(files);
  return j.dump(2);
}

}  // namespace bgml
