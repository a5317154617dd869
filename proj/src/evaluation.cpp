#include "rdcm/evaluation.hpp"

#include "rdcm/errors.hpp"
#include "rdcm/random.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace rdcm {

double accuracy(std::span<const int> predictions, std::span<const int> gold) {
  if (predictions.size() != gold.size()) throw DimensionError("accuracy: length mismatch");
  if (predictions.empty()) throw ValidationError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += predictions[i] == gold[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

namespace {

std::vector<std::size_t> assign_folds(std::size_t n, std::size_t folds, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[order[i]] = i % folds;
  return fold;
}

// Per-group partial sums keep the computation exactly antisymmetric under swapping
// the two sets (labels +1/-1 exchange roles, every sum is a + b in IEEE arithmetic).
struct Group {
  const Tensor* x;
  const std::vector<std::size_t>* fold;
  double label;
};

Eigen::VectorXd group_sum(const Group& g, std::size_t held_out, bool train, const Eigen::VectorXd* shift,
                          bool squares) {
  const std::size_t d = g.x->cols();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < g.x->rows(); ++r) {
    if (((*g.fold)[r] == held_out) == train) continue;
    auto row = g.x->row(r);
    for (std::size_t c = 0; c < d; ++c) {
      double v = row[c];
      if (shift) v -= (*shift)(static_cast<Eigen::Index>(c));
      s(static_cast<Eigen::Index>(c)) += squares ? v * v : v;
    }
  }
  return s;
}

std::size_t group_count(const Group& g, std::size_t held_out, bool train) {
  std::size_t n = 0;
  for (std::size_t f : *g.fold) n += ((f == held_out) != train) ? 1 : 0;
  return n;
}

double fold_error(const Group& ga, const Group& gb, std::size_t held_out, const ADistanceOptions& opts) {
  const std::size_t d = ga.x->cols();
  const auto D = static_cast<Eigen::Index>(d);
  const double n_train = static_cast<double>(group_count(ga, held_out, true) + group_count(gb, held_out, true));
  const Eigen::VectorXd mean = (group_sum(ga, held_out, true, nullptr, false) +
                                group_sum(gb, held_out, true, nullptr, false)) / n_train;
  const Eigen::VectorXd var = (group_sum(ga, held_out, true, &mean, true) +
                               group_sum(gb, held_out, true, &mean, true)) / n_train;
  Eigen::VectorXd inv_std(D);
  for (Eigen::Index c = 0; c < D; ++c) inv_std(c) = var(c) > 1e-24 ? 1.0 / std::sqrt(var(c)) : 0.0;

  auto standardized = [&](const Group& g, bool train) {
    std::vector<Eigen::VectorXd> rows;
    for (std::size_t r = 0; r < g.x->rows(); ++r) {
      if (((*g.fold)[r] == held_out) == train) continue;
      Eigen::VectorXd v(D);
      auto row = g.x->row(r);
      for (Eigen::Index c = 0; c < D; ++c) v(c) = (row[static_cast<std::size_t>(c)] - mean(c)) * inv_std(c);
      rows.push_back(std::move(v));
    }
    return rows;
  };
  const auto train_a = standardized(ga, true);
  const auto train_b = standardized(gb, true);

  // Margin form of the logistic loss: for label y, d/dw = -y x sigmoid(-y (w.x + b)).
  Eigen::VectorXd w = Eigen::VectorXd::Zero(D);
  double bias = 0.0;
  auto group_grad = [&](const std::vector<Eigen::VectorXd>& rows, double y, Eigen::VectorXd& gw, double& gb_) {
    for (const auto& x : rows) {
      const double margin = y * (w.dot(x) + bias);
      const double s = 1.0 / (1.0 + std::exp(margin));
      gw -= (y * s) * x;
      gb_ -= y * s;
    }
  };
  for (std::size_t it = 0; it < opts.iterations; ++it) {
    Eigen::VectorXd gw_a = Eigen::VectorXd::Zero(D);
    Eigen::VectorXd gw_b = Eigen::VectorXd::Zero(D);
    double gb_a = 0.0;
    double gb_b = 0.0;
    group_grad(train_a, ga.label, gw_a, gb_a);
    group_grad(train_b, gb.label, gw_b, gb_b);
    const Eigen::VectorXd gw = (gw_a + gw_b) / n_train + opts.l2 * w;
    const double gbias = (gb_a + gb_b) / n_train;
    w -= opts.learning_rate * gw;
    bias -= opts.learning_rate * gbias;
  }

  std::size_t errors = 0;
  std::size_t total = 0;
  for (const Group* g : {&ga, &gb}) {
    for (const auto& x : standardized(*g, false)) {
      errors += g->label * (w.dot(x) + bias) <= 0.0 ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(errors) / static_cast<double>(total);
}

}  // namespace

double a_distance_from_error(double eps) {
  if (std::isnan(eps)) throw NumericalError("a_distance: error rate is NaN");
  return 2.0 * (1.0 - std::clamp(eps, 0.0, 0.5));
}

double a_distance(const Tensor& a, const Tensor& b, std::uint64_t seed_a, std::uint64_t seed_b,
                  const ADistanceOptions& opts) {
  require_rank(a, 2, "a_distance");
  require_rank(b, 2, "a_distance");
  if (a.cols() != b.cols()) throw DimensionError("a_distance: feature widths differ");
  if (opts.folds < 2) throw ConfigError("a_distance: need at least two folds");
  if (a.rows() < 2 * opts.folds || b.rows() < 2 * opts.folds) {
    throw ValidationError("a_distance: each set needs at least " + std::to_string(2 * opts.folds) + " samples");
  }
  const auto fold_a = assign_folds(a.rows(), opts.folds, seed_a);
  const auto fold_b = assign_folds(b.rows(), opts.folds, seed_b);
  const Group ga{&a, &fold_a, 1.0};
  const Group gb{&b, &fold_b, -1.0};
  double err = 0.0;
  for (std::size_t k = 0; k < opts.folds; ++k) err += fold_error(ga, gb, k, opts);
  return a_distance_from_error(err / static_cast<double>(opts.folds));
}

double a_distance(const Tensor& a, const Tensor& b, std::uint64_t seed, const ADistanceOptions& opts) {
  return a_distance(a, b, derive_seed(seed, {1}), derive_seed(seed, {2}), opts);
}

std::vector<AggregateRow> aggregate(std::span<const MetricRow> rows) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& r : rows) groups[{r.experiment_id, r.target}].push_back(r.accuracy);
  std::vector<AggregateRow> out;
  for (auto& [key, values] : groups) {
    // Order-independent: sort before summing so permuted inputs give identical bits.
    std::sort(values.begin(), values.end());
    AggregateRow a;
    a.experiment_id = key.first;
    a.target = key.second;
    a.count = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(values.size()));
    out.push_back(std::move(a));
  }
  return out;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows) {
  out << "experiment_id,target,seed,accuracy,a_distance\n";
  for (const auto& r : rows) {
    out << r.experiment_id << ',' << r.target << ',' << r.seed << ',' << std::setprecision(17) << r.accuracy << ',';
    if (r.a_distance) out << std::setprecision(17) << *r.a_distance;
    out << '\n';
  }
}

std::vector<MetricRow> read_metrics_csv(std::istream& in) {
  std::vector<MetricRow> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 5) throw ValidationError("metrics csv: malformed row '" + line + "'");
    MetricRow r;
    r.experiment_id = cells[0];
    r.target = cells[1];
    r.seed = std::stoull(cells[2]);
    r.accuracy = std::stod(cells[3]);
    if (!cells[4].empty()) r.a_distance = std::stod(cells[4]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace rdcm
