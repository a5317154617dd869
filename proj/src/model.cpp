#include "rdcm/model.hpp"

#include "rdcm/errors.hpp"
#include "rdcm/evaluation.hpp"
#include "rdcm/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

namespace rdcm {

void ModelConfig::validate() const {
  if (d < 1) throw ConfigError("model: d must be >= 1");
  if (vis_dim < 1) throw ConfigError("model: vis_dim must be >= 1");
  if (text_mode == TextMode::Pooled) {
    if (text_dim < 1) throw ConfigError("model: text_dim must be >= 1");
  } else {
    textcnn.validate();
    if (seq_len < textcnn.max_width()) {
      throw ConfigError("model: seq_len " + std::to_string(seq_len) + " shorter than largest kernel width");
    }
  }
}

ModelConfig ModelConfig::for_manifest(const Manifest& manifest, std::size_t d) {
  ModelConfig c;
  c.text_mode = manifest.text_mode;
  c.text_dim = manifest.text_dim;
  c.seq_len = manifest.seq_len;
  c.vis_dim = manifest.vis_dim;
  c.d = d;
  c.textcnn.embedding_dim = manifest.emb_dim;
  return c;
}

MlpConfig ModelConfig::text_mlp() const {
  const std::size_t in = text_mode == TextMode::Pooled ? text_dim : textcnn.output_width();
  return MlpConfig{{in, d, d}, {hidden_activation}};
}

MlpConfig ModelConfig::vis_mlp() const { return MlpConfig{{vis_dim, d, d}, {hidden_activation}}; }

MlpConfig ModelConfig::classifier_mlp() const { return MlpConfig{{2 * d, d, 2}, {hidden_activation}}; }

RdcmModel RdcmModel::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  RdcmModel m;
  m.config = config;
  std::mt19937_64 rng(derive_seed(seed, {0x6d6f64656cULL}));
  if (config.text_mode == TextMode::Sequence) init_textcnn(m.params, config.textcnn, "text.cnn", rng);
  init_mlp(m.params, config.text_mlp(), "text.mlp", rng);
  init_mlp(m.params, config.vis_mlp(), "vis.mlp", rng);
  init_mlp(m.params, config.classifier_mlp(), "cls.mlp", rng);
  return m;
}

AdaptMode parse_adapt_mode(std::string_view name) {
  if (name == "dg" || name == "DG") return AdaptMode::DG;
  if (name == "da" || name == "DA") return AdaptMode::DA;
  throw ConfigError("unknown mode: " + std::string(name));
}

std::string to_string(AdaptMode m) { return m == AdaptMode::DG ? "dg" : "da"; }

void HyperParams::validate() const {
  if (!(lambda_inter >= 0.0) || !(lambda_intra >= 0.0)) throw ConfigError("lambda weights must be >= 0");
  contrastive.validate();
  kernels.text.validate();
  kernels.vis.validate();
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(adam.weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
}

Var encode_text(Tape& tape, const RdcmModel& model, const Tensor& text) {
  const ModelConfig& c = model.config;
  Var x = tape.constant(text);
  if (c.text_mode == TextMode::Sequence) {
    if (text.rank() != 3) throw DimensionError("encode_text: sequence mode expects batch x len x emb input");
    x = textcnn_forward(tape, model.params, c.textcnn, "text.cnn", x);
  } else if (text.rank() != 2) {
    throw DimensionError("encode_text: pooled mode expects batch x text_dim input, got " + text.shape_string());
  }
  return mlp_forward(tape, model.params, c.text_mlp(), "text.mlp", x);
}

Var encode_image(Tape& tape, const RdcmModel& model, const Tensor& vis) {
  if (vis.rank() != 2) throw DimensionError("encode_image: expects batch x vis_dim input");
  return mlp_forward(tape, model.params, model.config.vis_mlp(), "vis.mlp", tape.constant(vis));
}

Var classifier_logits(Tape& tape, const RdcmModel& model, Var text_features, Var vis_features) {
  const std::size_t d = model.config.d;
  if (text_features.value().cols() != d || vis_features.value().cols() != d) {
    throw DimensionError("classify: encoder outputs must both have width " + std::to_string(d));
  }
  return mlp_forward(tape, model.params, model.config.classifier_mlp(), "cls.mlp",
                     ag::concat_cols(text_features, vis_features));
}

Tensor classify(const RdcmModel& model, const Tensor& text_features, const Tensor& vis_features) {
  Tape tape;
  Var logits = classifier_logits(tape, model, tape.constant(text_features), tape.constant(vis_features));
  return softmax_rows(logits.value());
}

EncodedFeatures encode(const RdcmModel& model, const Batch& batch) {
  Tape tape;
  return {encode_text(tape, model, batch.text).value(), encode_image(tape, model, batch.vis).value()};
}

Prediction predict(const RdcmModel& model, const Batch& batch) {
  const EncodedFeatures f = encode(model, batch);
  Prediction p;
  p.probabilities = classify(model, f.text, f.vis);
  p.labels.resize(batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r) {
    p.labels[r] = p.probabilities(r, 1) > p.probabilities(r, 0) ? 1 : 0;
  }
  return p;
}

Tensor text_descriptors(const Tensor& text) {
  if (text.rank() == 2) return softmax_rows(text);
  require_rank(text, 3, "text_descriptors");
  const std::size_t n = text.dim(0);
  const std::size_t len = text.dim(1);
  const std::size_t emb = text.dim(2);
  Tensor pooled({n, emb});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t e = 0; e < emb; ++e) pooled(b, e) += text.values()[(b * len + t) * emb + e];
    }
    for (std::size_t e = 0; e < emb; ++e) pooled(b, e) /= static_cast<double>(len);
  }
  return softmax_rows(pooled);
}

namespace {

Tensor stack_rows(const std::vector<const Tensor*>& parts) {
  std::vector<std::size_t> shape = parts.front()->shape();
  std::size_t rows = 0;
  for (const Tensor* t : parts) {
    if (t->rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), t->shape().begin() + 1)) {
      throw DimensionError("batches have inconsistent feature shapes");
    }
    rows += t->dim(0);
  }
  shape[0] = rows;
  Tensor out(shape);
  std::size_t offset = 0;
  for (const Tensor* t : parts) {
    std::copy(t->values().begin(), t->values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += t->size();
  }
  return out;
}

}  // namespace

LossGraph total_loss(Tape& tape, const RdcmModel& model, std::span<const Batch> sources, const Batch* target,
                     const HyperParams& hyper) {
  hyper.validate();
  if (sources.size() < 2) throw ConfigError("total_loss: need at least two source batches");
  if (hyper.mode == AdaptMode::DA && target == nullptr) throw ConfigError("total_loss: DA mode requires a target batch");
  if (hyper.mode == AdaptMode::DG && target != nullptr) throw ConfigError("total_loss: DG mode takes no target batch");

  // One encoder pass over all rows; per-domain views are row slices.
  std::vector<const Tensor*> texts;
  std::vector<const Tensor*> viss;
  std::vector<std::size_t> offsets;
  std::size_t rows = 0;
  for (const Batch& b : sources) {
    if (b.size() == 0) throw ConfigError("total_loss: empty source batch");
    texts.push_back(&b.text);
    viss.push_back(&b.vis);
    offsets.push_back(rows);
    rows += b.size();
  }
  const std::size_t source_rows = rows;
  if (target != nullptr) {
    if (target->size() == 0) throw ConfigError("total_loss: empty target batch");
    texts.push_back(&target->text);
    viss.push_back(&target->vis);
    rows += target->size();
  }
  Var xt = encode_text(tape, model, stack_rows(texts));
  Var xv = encode_image(tape, model, stack_rows(viss));

  std::vector<DomainVars> domains;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    domains.push_back({ag::slice_rows(xt, offsets[i], sources[i].size()), ag::slice_rows(xv, offsets[i], sources[i].size())});
  }
  Var src_t = target ? ag::slice_rows(xt, 0, source_rows) : xt;
  Var src_v = target ? ag::slice_rows(xv, 0, source_rows) : xv;

  std::vector<int> labels;
  std::vector<bool> real;
  std::vector<const Tensor*> insts;
  for (const Batch& b : sources) {
    labels.insert(labels.end(), b.labels.begin(), b.labels.end());
    insts.push_back(&b.inst);
  }
  for (int y : labels) real.push_back(y == 0);

  LossGraph out;
  Var cls = softmax_cross_entropy(classifier_logits(tape, model, src_t, src_v), labels);

  Var inter;
  if (target != nullptr) {
    const DomainVars tgt{ag::slice_rows(xt, source_rows, target->size()), ag::slice_rows(xv, source_rows, target->size())};
    inter = inter_loss_da(domains, tgt, hyper.kernels, hyper.variant);
  } else {
    inter = inter_loss_dg(domains, hyper.kernels, hyper.variant);
  }

  ContrastiveBatch cb;
  cb.real = real;
  if (hyper.contrastive_mode == ContrastiveMode::Ours) cb.inst = stack_rows(insts);
  if (hyper.contrastive_mode == ContrastiveMode::TextCon) cb.text_desc = text_descriptors(stack_rows(std::vector<const Tensor*>(texts.begin(), texts.begin() + static_cast<std::ptrdiff_t>(sources.size()))));
  Var nt = ag::l2_normalize_rows(src_t);
  Var nv = ag::l2_normalize_rows(src_v);
  cb.text = nt.value();
  cb.vis = nv.value();
  cb.validate(hyper.contrastive_mode);
  const auto anchors = contrastive_anchors(real, hyper.contrastive_mode);
  const Tensor weights = negative_weights(cb, hyper.contrastive, hyper.contrastive_mode);
  Var intra = weighted_infonce(nt, nv, weights, anchors, hyper.contrastive.temperature);

  Var total = cls;
  if (hyper.lambda_inter != 0.0) total = ag::add(total, ag::scale(inter, hyper.lambda_inter));
  if (hyper.lambda_intra != 0.0) total = ag::add(total, ag::scale(intra, hyper.lambda_intra));

  out.total = total;
  out.cls = cls;
  out.inter = inter;
  out.intra = intra;
  out.parts.cls = cls.value().item();
  out.parts.inter = inter.value().item();
  out.parts.intra = intra.value().item();
  out.parts.total = total.value().item();
  out.parts.anchors = anchors.size();
  return out;
}

LossComponents total_loss(const RdcmModel& model, std::span<const Batch> sources, const Batch* target,
                          const HyperParams& hyper) {
  Tape tape;
  return total_loss(tape, model, sources, target, hyper).parts;
}

double evaluate_accuracy(const RdcmModel& model, const Manifest& manifest, const Domain& domain,
                         const std::vector<std::size_t>& indices) {
  const Batch batch = indices.empty() ? make_batch(manifest, domain) : make_batch(manifest, domain, indices);
  return accuracy(predict(model, batch).labels, batch.labels);
}

namespace {

double source_validation_accuracy(const RdcmModel& model, const DatasetBundle& bundle) {
  std::vector<int> preds;
  std::vector<int> gold;
  for (const Domain& d : bundle.sources) {
    if (d.test.empty()) continue;
    const Batch b = make_batch(bundle.manifest, d, d.test);
    const Prediction p = predict(model, b);
    preds.insert(preds.end(), p.labels.begin(), p.labels.end());
    gold.insert(gold.end(), b.labels.begin(), b.labels.end());
  }
  if (gold.empty()) throw ConfigError("fit: source domains have no test split for model selection");
  return accuracy(preds, gold);
}

std::string describe(const LossComponents& c) {
  std::ostringstream os;
  os << "total=" << c.total << " cls=" << c.cls << " inter=" << c.inter << " intra=" << c.intra;
  return os.str();
}

}  // namespace

TrainReport fit(RdcmModel& model, const DatasetBundle& bundle, const HyperParams& hyper) {
  hyper.validate();
  const auto started = std::chrono::steady_clock::now();
  if (bundle.sources.size() < 2) throw ConfigError("fit: need at least two source domains");
  for (const Domain& d : bundle.sources) {
    if (!d.has_split()) throw ConfigError("fit: source domain '" + d.id + "' has no train/test split");
  }
  const bool use_target = hyper.mode == AdaptMode::DA;
  if (use_target && (!bundle.target || bundle.target->train.empty())) {
    throw ConfigError("fit: DA mode requires a split target domain");
  }

  TrainReport report;
  report.seed = hyper.seed;
  report.vanilla_equivalent = hyper.vanilla_equivalent();
  ParamSet best = model.params;
  bool have_best = false;

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    const auto steps = make_minibatches(bundle, hyper.batch_size, derive_seed(hyper.seed, {0x65706f6368ULL, epoch}), use_target);
    EpochRecord rec;
    for (const MinibatchStep& step : steps) {
      std::vector<Batch> batches;
      for (std::size_t i = 0; i < bundle.sources.size(); ++i) {
        batches.push_back(make_batch(bundle.manifest, bundle.sources[i], step.sources[i]));
      }
      Batch target_batch;
      if (use_target) target_batch = make_batch(bundle.manifest, *bundle.target, *step.target);

      Tape tape;
      LossGraph graph = total_loss(tape, model, batches, use_target ? &target_batch : nullptr, hyper);
      const LossComponents& c = graph.parts;
      if (!std::isfinite(c.total) || !std::isfinite(c.cls) || !std::isfinite(c.inter) || !std::isfinite(c.intra)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ": " + describe(c));
      }
      compute_gradients(tape, graph.total, model.params);
      adam_step(model.params, hyper.adam);
      rec.cls += c.cls;
      rec.inter += c.inter;
      rec.intra += c.intra;
      rec.total += c.total;
      if (c.anchors == 0) ++rec.empty_anchor_steps;
    }
    const double n = static_cast<double>(steps.size());
    rec.cls /= n;
    rec.inter /= n;
    rec.intra /= n;
    rec.total /= n;
    rec.val_accuracy = source_validation_accuracy(model, bundle);
    if (!have_best || rec.val_accuracy > report.best_val_accuracy) {
      best = model.params;
      report.best_epoch = epoch;
      report.best_val_accuracy = rec.val_accuracy;
      have_best = true;
    }
    report.epochs.push_back(rec);
  }
  model.params = std::move(best);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace rdcm
