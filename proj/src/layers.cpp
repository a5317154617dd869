#include "rdcm/layers.hpp"

#include "rdcm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rdcm {

void MlpConfig::validate() const {
  if (widths.size() < 2) throw ConfigError("MlpConfig: at least two widths required");
  for (std::size_t w : widths) {
    if (w < 1) throw ConfigError("MlpConfig: widths must be >= 1");
  }
  if (!hidden_activations.empty() && hidden_activations.size() != widths.size() - 2) {
    throw ConfigError("MlpConfig: need one activation per hidden layer");
  }
}

Activation MlpConfig::activation(std::size_t hidden_layer) const {
  return hidden_activations.empty() ? Activation::Relu : hidden_activations.at(hidden_layer);
}

void TextCnnConfig::validate() const {
  if (embedding_dim < 1) throw ConfigError("TextCnnConfig: embedding_dim must be >= 1");
  if (kernel_widths.empty()) throw ConfigError("TextCnnConfig: no kernel widths");
  for (std::size_t w : kernel_widths) {
    if (w < 1) throw ConfigError("TextCnnConfig: kernel widths must be strictly positive");
  }
  if (filters < 1) throw ConfigError("TextCnnConfig: filters must be >= 1");
}

std::size_t TextCnnConfig::max_width() const {
  return *std::max_element(kernel_widths.begin(), kernel_widths.end());
}

namespace {

Tensor uniform_tensor(std::vector<std::size_t> shape, double bound, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

void init_mlp(ParamSet& params, const MlpConfig& cfg, const std::string& prefix, std::mt19937_64& rng) {
  cfg.validate();
  for (std::size_t i = 0; i < cfg.layers(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.widths[i]));
    params.add(prefix + ".w" + std::to_string(i), uniform_tensor({cfg.widths[i], cfg.widths[i + 1]}, bound, rng));
    params.add(prefix + ".b" + std::to_string(i), uniform_tensor({cfg.widths[i + 1]}, bound, rng));
  }
}

void init_textcnn(ParamSet& params, const TextCnnConfig& cfg, const std::string& prefix,
                  std::mt19937_64& rng) {
  cfg.validate();
  for (std::size_t k : cfg.kernel_widths) {
    const std::size_t fan_in = k * cfg.embedding_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    const std::string base = prefix + ".conv" + std::to_string(k);
    params.add(base + ".w", uniform_tensor({cfg.filters, fan_in}, bound, rng));
    params.add(base + ".b", uniform_tensor({cfg.filters}, bound, rng));
  }
}

Var mlp_forward(Tape& tape, const ParamSet& params, const MlpConfig& cfg, const std::string& prefix, Var x) {
  cfg.validate();
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.cols() != cfg.widths.front()) {
    throw DimensionError("mlp_forward(" + prefix + "): input " + xv.shape_string() + ", expected width " +
                         std::to_string(cfg.widths.front()));
  }
  Var h = x;
  for (std::size_t i = 0; i < cfg.layers(); ++i) {
    Var w = tape.param(params, prefix + ".w" + std::to_string(i));
    Var b = tape.param(params, prefix + ".b" + std::to_string(i));
    if (w.value().rows() != cfg.widths[i] || w.value().cols() != cfg.widths[i + 1]) {
      throw DimensionError("mlp_forward(" + prefix + "): weight " + w.value().shape_string() +
                           " does not match config");
    }
    h = ag::add_bias(ag::matmul(h, w), b);
    if (i + 1 < cfg.layers() && cfg.activation(i) == Activation::Relu) h = ag::relu(h);
  }
  return h;
}

Var conv1d_relu_maxpool(Var seq, Var weight, Var bias, std::size_t width) {
  Tape& tape = *seq.tape;
  const Tensor& sv = seq.value();
  require_rank(sv, 3, "conv1d_relu_maxpool");
  const std::size_t batch = sv.dim(0);
  const std::size_t len = sv.dim(1);
  const std::size_t emb = sv.dim(2);
  const Tensor& wv = weight.value();
  const std::size_t filters = wv.rows();
  if (wv.cols() != width * emb || bias.value().size() != filters) {
    throw DimensionError("conv1d_relu_maxpool: weight " + wv.shape_string() + " for width " +
                         std::to_string(width) + " and embedding " + std::to_string(emb));
  }
  if (len < width) {
    throw DimensionError("conv1d_relu_maxpool: sequence length " + std::to_string(len) +
                         " shorter than kernel width " + std::to_string(width));
  }
  const std::size_t windows = len - width + 1;
  using WindowMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

  Tensor out({batch, filters});
  std::vector<std::size_t> argmax(batch * filters, 0);
  const auto bv = bias.value().values();
  RowMatrix conv(static_cast<Eigen::Index>(windows), static_cast<Eigen::Index>(filters));
  for (std::size_t b = 0; b < batch; ++b) {
    WindowMap win(sv.values().data() + b * len * emb, static_cast<Eigen::Index>(windows),
                  static_cast<Eigen::Index>(width * emb), Eigen::OuterStride<>(static_cast<Eigen::Index>(emb)));
    conv.noalias() = win * wv.mat().transpose();
    for (std::size_t f = 0; f < filters; ++f) {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t best_pos = 0;
      for (std::size_t p = 0; p < windows; ++p) {
        const double v = conv(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(f));
        if (v > best) {
          best = v;
          best_pos = p;
        }
      }
      const double pre = best + bv[f];
      out(b, f) = pre > 0.0 ? pre : 0.0;
      // Positions with a non-positive maximum have zero gradient; mark them.
      argmax[b * filters + f] = pre > 0.0 ? best_pos : windows;
    }
  }

  return tape.record(std::move(out), {seq, weight, bias},
                     [seq, weight, bias, width, argmax, windows](Tape& tp, const Tensor& g) {
                       const Tensor& s = tp.value(seq);
                       const Tensor& w = tp.value(weight);
                       const std::size_t batch = s.dim(0);
                       const std::size_t len = s.dim(1);
                       const std::size_t emb = s.dim(2);
                       const std::size_t filters = w.rows();
                       const std::size_t span = width * emb;
                       const bool need_seq = tp.requires_grad(seq);
                       const bool need_w = tp.requires_grad(weight);
                       const bool need_b = tp.requires_grad(bias);
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t f = 0; f < filters; ++f) {
                           const std::size_t pos = argmax[b * filters + f];
                           if (pos == windows) continue;
                           const double gv = g(b, f);
                           if (gv == 0.0) continue;
                           const double* window = s.values().data() + (b * len + pos) * emb;
                           if (need_w) {
                             double* dw = tp.grad_slot(weight).values().data() + f * span;
                             for (std::size_t i = 0; i < span; ++i) dw[i] += gv * window[i];
                           }
                           if (need_b) tp.grad_slot(bias).values()[f] += gv;
                           if (need_seq) {
                             double* ds = tp.grad_slot(seq).values().data() + (b * len + pos) * emb;
                             const double* wf = w.values().data() + f * span;
                             for (std::size_t i = 0; i < span; ++i) ds[i] += gv * wf[i];
                           }
                         }
                       }
                     });
}

Var textcnn_forward(Tape& tape, const ParamSet& params, const TextCnnConfig& cfg, const std::string& prefix,
                    Var seq) {
  cfg.validate();
  const Tensor& sv = seq.value();
  require_rank(sv, 3, "textcnn_forward");
  if (sv.dim(2) != cfg.embedding_dim) {
    throw DimensionError("textcnn_forward: embedding width " + std::to_string(sv.dim(2)) + ", expected " +
                         std::to_string(cfg.embedding_dim));
  }
  if (sv.dim(1) < cfg.max_width()) {
    throw DimensionError("textcnn_forward: sequence length " + std::to_string(sv.dim(1)) +
                         " shorter than largest kernel width " + std::to_string(cfg.max_width()));
  }
  Var pooled;
  bool first = true;
  for (std::size_t k : cfg.kernel_widths) {
    const std::string base = prefix + ".conv" + std::to_string(k);
    Var branch = conv1d_relu_maxpool(seq, tape.param(params, base + ".w"), tape.param(params, base + ".b"), k);
    pooled = first ? branch : ag::concat_cols(pooled, branch);
    first = false;
  }
  return pooled;
}

Tensor l2_normalize(const Tensor& x) {
  require_rank(x, 2, "l2_normalize");
  Tensor out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double ss = 0.0;
    for (double v : row) ss += v * v;
    const double norm = std::sqrt(ss);
    if (norm < 1e-12) continue;
    for (double& v : row) v /= norm;
  }
  return out;
}

Tensor softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax_rows");
  Tensor out = logits;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      z += v;
    }
    for (double& v : row) v /= z;
  }
  return out;
}

namespace {

void check_ce_inputs(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  if (logits.cols() != 2) throw DimensionError("softmax_cross_entropy: expected two logit columns");
  if (labels.size() != logits.rows()) throw DimensionError("softmax_cross_entropy: label count mismatch");
  if (labels.empty()) throw DimensionError("softmax_cross_entropy: empty batch");
  for (int y : labels) {
    if (y != 0 && y != 1) throw ValidationError("softmax_cross_entropy: label " + std::to_string(y));
  }
}

// -log softmax(row)[label], computed as logsumexp - row[label].
double row_nll(std::span<const double> row, int label) {
  const double mx = std::max(row[0], row[1]);
  const double lse = mx + std::log(std::exp(row[0] - mx) + std::exp(row[1] - mx));
  return lse - row[static_cast<std::size_t>(label)];
}

}  // namespace

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  check_ce_inputs(logits, labels);
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) total += row_nll(logits.row(r), labels[r]);
  return total / static_cast<double>(logits.rows());
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& lv = logits.value();
  const double loss = softmax_cross_entropy(lv, labels);
  std::vector<int> y(labels.begin(), labels.end());
  return logits.tape->record(Tensor::scalar(loss), {logits}, [logits, y](Tape& tp, const Tensor& g) {
    const Tensor p = softmax_rows(tp.value(logits));
    Tensor& dst = tp.grad_slot(logits);
    const double scale = g.values()[0] / static_cast<double>(y.size());
    for (std::size_t r = 0; r < y.size(); ++r) {
      for (std::size_t c = 0; c < 2; ++c) {
        dst(r, c) += scale * (p(r, c) - (static_cast<int>(c) == y[r] ? 1.0 : 0.0));
      }
    }
  });
}

}  // namespace rdcm
