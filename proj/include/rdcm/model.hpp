#pragma once

#include "rdcm/autograd.hpp"
#include "rdcm/contrastive.hpp"
#include "rdcm/data.hpp"
#include "rdcm/layers.hpp"
#include "rdcm/mmd.hpp"
#include "rdcm/optim.hpp"
#include "rdcm/params.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rdcm {

struct ModelConfig {
  TextMode text_mode = TextMode::Pooled;
  std::size_t text_dim = 0;  // pooled input width
  std::size_t seq_len = 0;   // sequence mode
  std::size_t vis_dim = 0;
  std::size_t d = 256;       // shared representation width
  TextCnnConfig textcnn;     // embedding_dim set from the manifest in sequence mode
  Activation hidden_activation = Activation::Relu;

  void validate() const;
  static ModelConfig for_manifest(const Manifest& manifest, std::size_t d = 256);

  MlpConfig text_mlp() const;        // (text_dim | textcnn width) -> d -> d
  MlpConfig vis_mlp() const;         // vis_dim -> d -> d
  MlpConfig classifier_mlp() const;  // 2d -> d -> 2
};

/// Text encoder, visual encoder and classifier sharing one ParamSet.
struct RdcmModel {
  ModelConfig config;
  ParamSet params;

  static RdcmModel create(const ModelConfig& config, std::uint64_t seed);
};

enum class AdaptMode { DG, DA };

AdaptMode parse_adapt_mode(std::string_view name);
std::string to_string(AdaptMode m);

struct HyperParams {
  double lambda_inter = 0.1;
  double lambda_intra = 0.5;
  ContrastiveHyper contrastive;
  ContrastiveMode contrastive_mode = ContrastiveMode::Ours;
  MmdVariant variant = MmdVariant::Joint;
  KernelSpecs kernels;
  AdamOptions adam;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  AdaptMode mode = AdaptMode::DG;
  std::uint64_t seed = 0;

  void validate() const;
  bool vanilla_equivalent() const { return lambda_inter == 0.0 && lambda_intra == 0.0; }
};

Var encode_text(Tape& tape, const RdcmModel& model, const Tensor& text);
Var encode_image(Tape& tape, const RdcmModel& model, const Tensor& vis);
Var classifier_logits(Tape& tape, const RdcmModel& model, Var text_features, Var vis_features);

/// Softmax probabilities; column 1 is the fake / rumor probability.
Tensor classify(const RdcmModel& model, const Tensor& text_features, const Tensor& vis_features);

struct EncodedFeatures {
  Tensor text;
  Tensor vis;
};
EncodedFeatures encode(const RdcmModel& model, const Batch& batch);

struct Prediction {
  std::vector<int> labels;
  Tensor probabilities;
};
/// Argmax of classify; exact ties resolve to label 0.
Prediction predict(const RdcmModel& model, const Batch& batch);

/// Text-side instance descriptors: softmax over the raw text input (token mean in sequence mode).
Tensor text_descriptors(const Tensor& text);

struct LossComponents {
  double total = 0.0;
  double cls = 0.0;
  double inter = 0.0;
  double intra = 0.0;
  std::size_t anchors = 0;
};

struct LossGraph {
  Var total;
  Var cls;
  Var inter;
  Var intra;
  LossComponents parts;
};

/// lambda_inter * L_inter + lambda_intra * L_intra + L_cls over one batch per source domain.
/// The target batch (DA only) enters L_inter alone. Terms with a zero weight are
/// reported but not connected to the objective.
LossGraph total_loss(Tape& tape, const RdcmModel& model, std::span<const Batch> sources, const Batch* target,
                     const HyperParams& hyper);
LossComponents total_loss(const RdcmModel& model, std::span<const Batch> sources, const Batch* target,
                          const HyperParams& hyper);

struct EpochRecord {
  double cls = 0.0;
  double inter = 0.0;
  double intra = 0.0;
  double total = 0.0;
  double val_accuracy = 0.0;
  std::size_t empty_anchor_steps = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  bool vanilla_equivalent = false;
};

/// Trains on the source train splits (plus the target train split in DA) and leaves the
/// model holding the parameters of the epoch with the best pooled source-test accuracy.
TrainReport fit(RdcmModel& model, const DatasetBundle& bundle, const HyperParams& hyper);

/// Accuracy of the model on `indices` of a domain (all samples when empty).
double evaluate_accuracy(const RdcmModel& model, const Manifest& manifest, const Domain& domain,
                         const std::vector<std::size_t>& indices = {});

}  // namespace rdcm
