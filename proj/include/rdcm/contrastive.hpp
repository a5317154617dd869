#pragma once

#include "rdcm/autograd.hpp"
#include "rdcm/tensor.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rdcm {

/// Negative-sample selection used by the cross-modal contrastive loss.
enum class ContrastiveMode {
  Ours,      // real-post anchors, negatives weighted by visual-descriptor similarity
  Regular,   // every row is an anchor, all negatives weight 1
  TextCon,   // real-post anchors, negatives weighted by text-side descriptor similarity
  ThresCon,  // real-post anchors, all negatives weight 1
};

ContrastiveMode parse_contrastive_mode(std::string_view name);
std::string to_string(ContrastiveMode m);

struct ContrastiveHyper {
  double beta = 0.5;         // similarity threshold in [0, 1]
  double temperature = 0.5;  // tau > 0

  void validate() const;
};

struct ContrastiveBatch {
  Tensor text;                      // B x d, rows unit-norm (or zero)
  Tensor vis;                       // B x d, rows unit-norm (or zero)
  Tensor inst;                      // B x C instance descriptors (probability rows)
  std::vector<bool> real;           // true where label == 0
  std::optional<Tensor> text_desc;  // B x C' descriptors for TextCon

  void validate(ContrastiveMode mode) const;
};

struct ContrastiveResult {
  double loss = 0.0;
  std::size_t anchors = 0;
  bool no_anchors() const { return anchors == 0; }
};

/// (cos(h_p, h_q) + 1) / 2; a zero-norm descriptor counts as cosine 0.
double descriptor_similarity(std::span<const double> hp, std::span<const double> hq);

/// 0 when sim >= beta, otherwise beta - sim.
double negative_weight(double sim, double beta);

/// Pairwise weights w(p, q) for the given mode; the diagonal is unused and set to 0.
Tensor negative_weights(const ContrastiveBatch& batch, const ContrastiveHyper& hyper, ContrastiveMode mode);

/// Anchor rows for the given mode (real posts, or every row for Regular).
std::vector<std::size_t> contrastive_anchors(const std::vector<bool>& real, ContrastiveMode mode);

ContrastiveResult contrastive_loss(const ContrastiveBatch& batch, const ContrastiveHyper& hyper,
                                   ContrastiveMode mode);

/// Weighted text-to-image InfoNCE over precomputed weights. Returns 0 when `anchors` is empty.
double weighted_infonce(const Tensor& text, const Tensor& vis, const Tensor& weights,
                        std::span<const std::size_t> anchors, double temperature);
Var weighted_infonce(Var text, Var vis, const Tensor& weights, std::span<const std::size_t> anchors,
                     double temperature);

}  // namespace rdcm
