#pragma once

#include "rdcm/tensor.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace rdcm {

/// Fraction of positions where prediction equals gold.
double accuracy(std::span<const int> predictions, std::span<const int> gold);

struct ADistanceOptions {
  std::size_t folds = 5;
  double l2 = 1e-3;            // ridge penalty on the discriminant weights
  double learning_rate = 0.5;  // gradient descent step on standardized features
  std::size_t iterations = 300;
};

/// 2(1 - eps) with eps clamped to [0, 0.5].
double a_distance_from_error(double eps);

/// Proxy A-distance 2(1 - eps), eps the k-fold cross-validated error of an
/// L2-regularized logistic discriminant separating `a` from `b`, clamped to [0, 0.5].
/// Fold membership of each set is drawn from its own seed, so swapping the two sets
/// together with their seeds gives the identical value.
double a_distance(const Tensor& a, const Tensor& b, std::uint64_t seed_a, std::uint64_t seed_b,
                  const ADistanceOptions& opts = {});
double a_distance(const Tensor& a, const Tensor& b, std::uint64_t seed, const ADistanceOptions& opts = {});

struct MetricRow {
  std::string experiment_id;
  std::string target;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::optional<double> a_distance;
};

struct AggregateRow {
  std::string experiment_id;
  std::string target;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over seeds
  std::size_t count = 0;
};

/// Groups by (experiment, target); output ordered by experiment then target id.
std::vector<AggregateRow> aggregate(std::span<const MetricRow> rows);

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows);
std::vector<MetricRow> read_metrics_csv(std::istream& in);

}  // namespace rdcm
