#pragma once

#include "rdcm/data.hpp"
#include "rdcm/evaluation.hpp"
#include "rdcm/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rdcm {

struct RunOptions {
  std::string experiment_id = "rdcm";
  HyperParams hyper;      // hyper.seed is overwritten by `seed`
  std::size_t d = 256;
  bool a_distance = false;
};

struct RunResult {
  MetricRow metrics;
  TrainReport report;
  RdcmModel model;
};

/// One leave-one-domain-out run: hold out `target_id`, split every domain 70/30 with the
/// run seed, train on the remaining domains and evaluate on the entire target domain.
/// With a_distance set, also measures the proxy A-distance between encoded source
/// samples (an equal-size seeded draw from all source samples) and the encoded target.
RunResult run_target(const DatasetBundle& dataset, const std::string& target_id, std::uint64_t seed,
                     const RunOptions& options);

/// Per-modality features of every sample of a domain, raw (token mean in sequence mode)
/// or passed through the model's encoders.
DomainFeatures raw_domain_features(const Manifest& manifest, const Domain& domain);
DomainFeatures encoded_domain_features(const RdcmModel& model, const Manifest& manifest, const Domain& domain);

/// Encoded [text | vis] features for every sample of a domain.
Tensor encoded_features(const RdcmModel& model, const Manifest& manifest, const Domain& domain);
/// Raw [text | vis] features (token mean in sequence mode).
Tensor raw_features(const Manifest& manifest, const Domain& domain);

}  // namespace rdcm
