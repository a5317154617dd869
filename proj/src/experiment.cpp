#include "rdcm/experiment.hpp"

#include "rdcm/errors.hpp"
#include "rdcm/random.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace rdcm {

namespace {

Tensor concat_features(const Tensor& text, const Tensor& vis) {
  Tensor out({text.rows(), text.cols() + vis.cols()});
  out.mat().leftCols(static_cast<Eigen::Index>(text.cols())) = text.mat();
  out.mat().rightCols(static_cast<Eigen::Index>(vis.cols())) = vis.mat();
  return out;
}

Tensor mean_tokens(const Tensor& text) {
  if (text.rank() == 2) return text;
  const std::size_t n = text.dim(0);
  const std::size_t len = text.dim(1);
  const std::size_t emb = text.dim(2);
  Tensor out({n, emb});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t e = 0; e < emb; ++e) out(b, e) += text.values()[(b * len + t) * emb + e];
    }
    for (std::size_t e = 0; e < emb; ++e) out(b, e) /= static_cast<double>(len);
  }
  return out;
}

}  // namespace

DomainFeatures raw_domain_features(const Manifest& manifest, const Domain& domain) {
  const Batch b = make_batch(manifest, domain);
  return {domain.id, mean_tokens(b.text), b.vis};
}

DomainFeatures encoded_domain_features(const RdcmModel& model, const Manifest& manifest, const Domain& domain) {
  EncodedFeatures f = encode(model, make_batch(manifest, domain));
  return {domain.id, std::move(f.text), std::move(f.vis)};
}

Tensor encoded_features(const RdcmModel& model, const Manifest& manifest, const Domain& domain) {
  const DomainFeatures f = encoded_domain_features(model, manifest, domain);
  return concat_features(f.text, f.vis);
}

Tensor raw_features(const Manifest& manifest, const Domain& domain) {
  const DomainFeatures f = raw_domain_features(manifest, domain);
  return concat_features(f.text, f.vis);
}

RunResult run_target(const DatasetBundle& dataset, const std::string& target_id, std::uint64_t seed,
                     const RunOptions& options) {
  HyperParams hyper = options.hyper;
  hyper.seed = seed;
  const DatasetBundle bundle = split_70_30(hold_out(dataset, target_id), derive_seed(seed, {0x73706c6974ULL}));
  RdcmModel model = RdcmModel::create(ModelConfig::for_manifest(bundle.manifest, options.d), seed);
  TrainReport report = fit(model, bundle, hyper);

  MetricRow row;
  row.experiment_id = options.experiment_id;
  row.target = target_id;
  row.seed = seed;
  row.accuracy = evaluate_accuracy(model, bundle.manifest, *bundle.target);
  if (options.a_distance) {
    const Tensor target_features = encoded_features(model, bundle.manifest, *bundle.target);
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    for (std::size_t d = 0; d < bundle.sources.size(); ++d) {
      for (std::size_t i = 0; i < bundle.sources[d].size(); ++i) pool.emplace_back(d, i);
    }
    std::mt19937_64 rng(derive_seed(seed, {0x6164697374ULL}));
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min(pool.size(), bundle.target->size()));
    std::sort(pool.begin(), pool.end());
    std::vector<Tensor> per_domain;
    Tensor source_features({pool.size(), target_features.cols()});
    for (std::size_t d = 0; d < bundle.sources.size(); ++d) per_domain.push_back(encoded_features(model, bundle.manifest, bundle.sources[d]));
    for (std::size_t r = 0; r < pool.size(); ++r) {
      const auto src = per_domain[pool[r].first].row(pool[r].second);
      std::copy(src.begin(), src.end(), source_features.row(r).begin());
    }
    row.a_distance = a_distance(source_features, target_features, derive_seed(seed, {0x666f6c64ULL}));
  }
  return {row, std::move(report), std::move(model)};
}

}  // namespace rdcm
