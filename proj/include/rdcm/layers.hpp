#pragma once

#include "rdcm/autograd.hpp"
#include "rdcm/params.hpp"
#include "rdcm/tensor.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace rdcm {

enum class Activation { Relu, Identity };

struct MlpConfig {
  std::vector<std::size_t> widths;            // input, hidden..., output
  std::vector<Activation> hidden_activations;  // one per hidden layer; empty means all ReLU

  void validate() const;
  std::size_t layers() const { return widths.size() - 1; }
  Activation activation(std::size_t hidden_layer) const;
};

struct TextCnnConfig {
  std::size_t embedding_dim = 0;
  std::vector<std::size_t> kernel_widths{3, 4, 5};
  std::size_t filters = 100;

  void validate() const;
  std::size_t output_width() const { return kernel_widths.size() * filters; }
  std::size_t max_width() const;
};

// Parameter names used by the layer builders: "<prefix>.w<i>", "<prefix>.b<i>"
// for MLP layer i and "<prefix>.conv<k>.w", "<prefix>.conv<k>.b" for kernel width k.
void init_mlp(ParamSet& params, const MlpConfig& cfg, const std::string& prefix, std::mt19937_64& rng);
void init_textcnn(ParamSet& params, const TextCnnConfig& cfg, const std::string& prefix, std::mt19937_64& rng);

/// Affine-activation stack; the last layer has no activation.
Var mlp_forward(Tape& tape, const ParamSet& params, const MlpConfig& cfg, const std::string& prefix, Var x);

/// Valid 1-D convolution per kernel width over a (batch x len x emb) sequence,
/// ReLU, max over positions, then concatenation of the pooled maps.
Var textcnn_forward(Tape& tape, const ParamSet& params, const TextCnnConfig& cfg, const std::string& prefix,
                    Var seq);

/// Single conv-ReLU-maxpool branch; weight is (filters x width*emb), bias has `filters` entries.
Var conv1d_relu_maxpool(Var seq, Var weight, Var bias, std::size_t width);

/// Rows scaled to unit Euclidean norm; rows with norm below 1e-12 pass through unchanged.
Tensor l2_normalize(const Tensor& x);

Tensor softmax_rows(const Tensor& logits);

/// Mean over rows of -log softmax(logits)[label]; logits must have two columns.
double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

}  // namespace rdcm
