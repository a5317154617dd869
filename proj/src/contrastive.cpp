#include "rdcm/contrastive.hpp"

#include "rdcm/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace rdcm {

ContrastiveMode parse_contrastive_mode(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "ours") return ContrastiveMode::Ours;
  if (s == "regular") return ContrastiveMode::Regular;
  if (s == "textcon") return ContrastiveMode::TextCon;
  if (s == "threscon") return ContrastiveMode::ThresCon;
  throw ConfigError("unknown contrastive mode: " + std::string(name));
}

std::string to_string(ContrastiveMode m) {
  switch (m) {
    case ContrastiveMode::Ours: return "ours";
    case ContrastiveMode::Regular: return "regular";
    case ContrastiveMode::TextCon: return "textcon";
    case ContrastiveMode::ThresCon: return "threscon";
  }
  throw ConfigError("unknown contrastive mode");
}

void ContrastiveHyper::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("contrastive threshold beta must lie in [0, 1]");
  if (!(temperature > 0.0)) throw ConfigError("contrastive temperature must be positive");
}

namespace {

void check_unit_rows(const Tensor& t, const char* what) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double ss = 0.0;
    for (double v : t.row(r)) ss += v * v;
    const double norm = std::sqrt(ss);
    if (std::abs(norm - 1.0) > 1e-6 && norm > 1e-12) {
      throw ValidationError(std::string(what) + " row " + std::to_string(r) + " is not L2-normalized (norm " +
                            std::to_string(norm) + ")");
    }
  }
}

void check_simplex_rows(const Tensor& t, const char* what) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double sum = 0.0;
    for (double v : t.row(r)) {
      if (v < 0.0) throw ValidationError(std::string(what) + " row " + std::to_string(r) + " has a negative entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ValidationError(std::string(what) + " row " + std::to_string(r) + " does not sum to 1");
    }
  }
}

}  // namespace

void ContrastiveBatch::validate(ContrastiveMode mode) const {
  require_rank(text, 2, "ContrastiveBatch.text");
  require_rank(vis, 2, "ContrastiveBatch.vis");
  const std::size_t b = text.rows();
  if (b < 1) throw DimensionError("ContrastiveBatch: empty batch");
  if (vis.rows() != b || real.size() != b) throw DimensionError("ContrastiveBatch: row counts differ");
  if (text.cols() != vis.cols()) throw DimensionError("ContrastiveBatch: text and visual widths differ");
  check_unit_rows(text, "ContrastiveBatch.text");
  check_unit_rows(vis, "ContrastiveBatch.vis");
  if (mode == ContrastiveMode::Ours) {
    require_rank(inst, 2, "ContrastiveBatch.inst");
    if (inst.rows() != b) throw DimensionError("ContrastiveBatch: descriptor row count differs");
    check_simplex_rows(inst, "ContrastiveBatch.inst");
  }
  if (mode == ContrastiveMode::TextCon) {
    if (!text_desc) throw ConfigError("TextCon mode requires text-side descriptors");
    require_rank(*text_desc, 2, "ContrastiveBatch.text_desc");
    if (text_desc->rows() != b) throw DimensionError("ContrastiveBatch: text descriptor row count differs");
  }
}

double descriptor_similarity(std::span<const double> hp, std::span<const double> hq) {
  if (hp.size() != hq.size()) throw DimensionError("descriptor_similarity: dimension mismatch");
  double dot = 0.0;
  double np = 0.0;
  double nq = 0.0;
  for (std::size_t i = 0; i < hp.size(); ++i) {
    dot += hp[i] * hq[i];
    np += hp[i] * hp[i];
    nq += hq[i] * hq[i];
  }
  np = std::sqrt(np);
  nq = std::sqrt(nq);
  if (np < 1e-12 || nq < 1e-12) return 0.5;
  const double cosine = std::clamp(dot / (np * nq), -1.0, 1.0);
  return (cosine + 1.0) / 2.0;
}

double negative_weight(double sim, double beta) { return sim >= beta ? 0.0 : beta - sim; }

Tensor negative_weights(const ContrastiveBatch& batch, const ContrastiveHyper& hyper, ContrastiveMode mode) {
  const std::size_t b = batch.text.rows();
  Tensor w({b, b}, 1.0);
  const Tensor* desc = nullptr;
  if (mode == ContrastiveMode::Ours) desc = &batch.inst;
  if (mode == ContrastiveMode::TextCon) desc = &*batch.text_desc;
  for (std::size_t p = 0; p < b; ++p) {
    for (std::size_t q = 0; q < b; ++q) {
      if (p == q) {
        w(p, q) = 0.0;
      } else if (desc != nullptr) {
        w(p, q) = negative_weight(descriptor_similarity(desc->row(p), desc->row(q)), hyper.beta);
      }
    }
  }
  return w;
}

std::vector<std::size_t> contrastive_anchors(const std::vector<bool>& real, ContrastiveMode mode) {
  std::vector<std::size_t> anchors;
  for (std::size_t i = 0; i < real.size(); ++i) {
    if (mode == ContrastiveMode::Regular || real[i]) anchors.push_back(i);
  }
  return anchors;
}

ContrastiveResult contrastive_loss(const ContrastiveBatch& batch, const ContrastiveHyper& hyper,
                                   ContrastiveMode mode) {
  hyper.validate();
  batch.validate(mode);
  const auto anchors = contrastive_anchors(batch.real, mode);
  const Tensor weights = negative_weights(batch, hyper, mode);
  return {weighted_infonce(batch.text, batch.vis, weights, anchors, hyper.temperature), anchors.size()};
}

namespace {

struct AnchorTerms {
  double loss = 0.0;
  // Softmax-like shares: positive share and per-negative shares (weight included).
  double positive_share = 0.0;
  std::vector<double> negative_share;
};

// -log( e^{s_pp} / (e^{s_pp} + sum_{q != p} w_pq e^{s_pq}) ) with a max shift over the active terms.
AnchorTerms anchor_terms(const RowMatrix& sims, const Tensor& weights, std::size_t p) {
  const Eigen::Index pi = static_cast<Eigen::Index>(p);
  const std::size_t b = static_cast<std::size_t>(sims.cols());
  double shift = sims(pi, pi);
  for (std::size_t q = 0; q < b; ++q) {
    if (q != p && weights(p, q) > 0.0) shift = std::max(shift, sims(pi, static_cast<Eigen::Index>(q)));
  }
  AnchorTerms t;
  t.negative_share.assign(b, 0.0);
  const double pos = std::exp(sims(pi, pi) - shift);
  double denom = pos;
  for (std::size_t q = 0; q < b; ++q) {
    if (q == p || weights(p, q) == 0.0) continue;
    t.negative_share[q] = weights(p, q) * std::exp(sims(pi, static_cast<Eigen::Index>(q)) - shift);
    denom += t.negative_share[q];
  }
  t.loss = std::log(denom) - (sims(pi, pi) - shift);
  t.positive_share = pos / denom;
  for (double& s : t.negative_share) s /= denom;
  return t;
}

void check_infonce_shapes(const Tensor& text, const Tensor& vis, const Tensor& weights,
                          std::span<const std::size_t> anchors, double temperature) {
  require_rank(text, 2, "weighted_infonce");
  require_rank(vis, 2, "weighted_infonce");
  const std::size_t b = text.rows();
  if (vis.rows() != b || text.cols() != vis.cols()) throw DimensionError("weighted_infonce: feature shapes differ");
  if (weights.rank() != 2 || weights.rows() != b || weights.cols() != b) {
    throw DimensionError("weighted_infonce: weight matrix must be B x B");
  }
  for (std::size_t a : anchors) {
    if (a >= b) throw DimensionError("weighted_infonce: anchor index out of range");
  }
  if (!(temperature > 0.0)) throw ConfigError("weighted_infonce: temperature must be positive");
}

}  // namespace

double weighted_infonce(const Tensor& text, const Tensor& vis, const Tensor& weights,
                        std::span<const std::size_t> anchors, double temperature) {
  check_infonce_shapes(text, vis, weights, anchors, temperature);
  if (anchors.empty()) return 0.0;
  const RowMatrix sims = text.mat() * vis.mat().transpose() / temperature;
  double total = 0.0;
  for (std::size_t p : anchors) total += anchor_terms(sims, weights, p).loss;
  return total / static_cast<double>(anchors.size());
}

Var weighted_infonce(Var text, Var vis, const Tensor& weights, std::span<const std::size_t> anchors,
                     double temperature) {
  const double loss = weighted_infonce(text.value(), vis.value(), weights, anchors, temperature);
  std::vector<std::size_t> anchor_list(anchors.begin(), anchors.end());
  return text.tape->record(
      Tensor::scalar(loss), {text, vis}, [text, vis, weights, anchor_list, temperature](Tape& tp, const Tensor& g) {
        if (anchor_list.empty()) return;
        const Tensor& t = tp.value(text);
        const Tensor& v = tp.value(vis);
        const RowMatrix sims = t.mat() * v.mat().transpose() / temperature;
        const Eigen::Index b = sims.rows();
        // d loss / d sims, then chain through sims = T V^T / tau.
        RowMatrix ds = RowMatrix::Zero(b, b);
        const double scale = g.values()[0] / static_cast<double>(anchor_list.size());
        for (std::size_t p : anchor_list) {
          const AnchorTerms terms = anchor_terms(sims, weights, p);
          const Eigen::Index pi = static_cast<Eigen::Index>(p);
          ds(pi, pi) += scale * (terms.positive_share - 1.0);
          for (Eigen::Index q = 0; q < b; ++q) {
            if (q != pi) ds(pi, q) += scale * terms.negative_share[static_cast<std::size_t>(q)];
          }
        }
        ds /= temperature;
        if (tp.requires_grad(text)) tp.grad_slot(text).mat().noalias() += ds * v.mat();
        if (tp.requires_grad(vis)) tp.grad_slot(vis).mat().noalias() += ds.transpose() * t.mat();
      });
}

}  // namespace rdcm
