#include "oracles.hpp"
#include "support.hpp"

#include "rdcm/checkpoint.hpp"
#include "rdcm/errors.hpp"
#include "rdcm/evaluation.hpp"
#include "rdcm/layers.hpp"
#include "rdcm/model.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace rdcm;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config(const Manifest& m, std::size_t d = 4) { return ModelConfig::for_manifest(m, d); }

void set_identity(ParamSet& p, const std::string& name) {
  Tensor& w = p.at(name).value;
  w.fill(0.0);
  for (std::size_t i = 0; i < std::min(w.rows(), w.cols()); ++i) w(i, i) = 1.0;
}

void zero(ParamSet& p, const std::string& name) { p.at(name).value.fill(0.0); }

// One batch of `n` consecutive samples per source domain.
std::vector<Batch> source_batches(const DatasetBundle& b, std::size_t n, std::size_t start = 0) {
  std::vector<Batch> out;
  for (const Domain& d : b.sources) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) idx.push_back(start + i);
    out.push_back(make_batch(b.manifest, d, idx));
  }
  return out;
}

HyperParams test_hyper() {
  HyperParams h;
  h.lambda_inter = 0.7;
  h.lambda_intra = 0.3;
  h.contrastive.beta = 0.8;
  h.kernels.text.sigmas = {0.5, 1.0, 2.0};
  h.kernels.vis.sigmas = {1.0, 3.0};
  return h;
}

Tensor stack(const std::vector<Tensor>& parts) {
  std::size_t rows = 0;
  for (const auto& t : parts) rows += t.rows();
  Tensor out({rows, parts[0].cols()});
  std::size_t r = 0;
  for (const auto& t : parts) {
    for (std::size_t i = 0; i < t.rows(); ++i, ++r) std::copy(t.row(i).begin(), t.row(i).end(), out.row(r).begin());
  }
  return out;
}

struct TempDir {
  fs::path path = fs::temp_directory_path() / ("rdcm_model_" + std::to_string(std::random_device{}()));
  TempDir() { fs::create_directories(path); }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("model construction and encoder shapes") {
  const DatasetBundle b = testing::tiny_dataset();
  const RdcmModel m = RdcmModel::create(ModelConfig::for_manifest(b.manifest), 1);
  CHECK(m.params.at("text.mlp.w0").value.shape() == std::vector<std::size_t>{5, 256});
  CHECK(m.params.at("text.mlp.w1").value.shape() == std::vector<std::size_t>{256, 256});
  CHECK(m.params.at("vis.mlp.w0").value.shape() == std::vector<std::size_t>{4, 256});
  CHECK(m.params.at("cls.mlp.w0").value.shape() == std::vector<std::size_t>{512, 256});
  CHECK(m.params.at("cls.mlp.w1").value.shape() == std::vector<std::size_t>{256, 2});
  const EncodedFeatures f = encode(m, make_batch(b.manifest, b.sources[0]));
  CHECK(f.text.shape() == std::vector<std::size_t>{40, 256});
  CHECK(f.vis.shape() == std::vector<std::size_t>{40, 256});

  SUBCASE("sequence mode defaults") {
    SynthConfig cfg;
    cfg.domains = 2;
    cfg.samples_per_domain = 6;
    cfg.seq_len = 8;
    cfg.text_dim = 6;
    const DatasetBundle s = synth_generate(cfg);
    const RdcmModel sm = RdcmModel::create(ModelConfig::for_manifest(s.manifest), 2);
    CHECK(sm.params.contains("text.cnn.conv3.w"));
    CHECK(sm.params.at("text.mlp.w0").value.shape() == std::vector<std::size_t>{300, 256});
    const EncodedFeatures sf = encode(sm, make_batch(s.manifest, s.sources[1]));
    CHECK(sf.text.shape() == std::vector<std::size_t>{6, 256});
    // Pooled input into a sequence model.
    Tape tape;
    CHECK_THROWS_AS(encode_text(tape, sm, Tensor({2, 6})), DimensionError);
  }

  SUBCASE("identical seeds give identical parameters and outputs") {
    const RdcmModel again = RdcmModel::create(ModelConfig::for_manifest(b.manifest), 1);
    const EncodedFeatures g = encode(again, make_batch(b.manifest, b.sources[0]));
    CHECK(std::equal(f.text.values().begin(), f.text.values().end(), g.text.values().begin()));
    const RdcmModel other = RdcmModel::create(ModelConfig::for_manifest(b.manifest), 2);
    CHECK(other.params.at("vis.mlp.w0").value.values()[0] != m.params.at("vis.mlp.w0").value.values()[0]);
  }

  SUBCASE("config errors") {
    ModelConfig bad = ModelConfig::for_manifest(b.manifest);
    bad.d = 0;
    CHECK_THROWS_AS(RdcmModel::create(bad, 0), ConfigError);
    Tape tape;
    CHECK_THROWS_AS(encode_image(tape, m, Tensor({2, 5})), DimensionError);
  }
}

TEST_CASE("hand-set encoders") {
  const DatasetBundle b = testing::tiny_dataset();

  SUBCASE("identity text encoder passes pooled input through") {
    ModelConfig cfg = small_config(b.manifest, 5);
    cfg.hidden_activation = Activation::Identity;
    RdcmModel m = RdcmModel::create(cfg, 3);
    set_identity(m.params, "text.mlp.w0");
    set_identity(m.params, "text.mlp.w1");
    zero(m.params, "text.mlp.b0");
    zero(m.params, "text.mlp.b1");
    const Batch batch = make_batch(b.manifest, b.sources[0]);
    Tape tape;
    const Tensor out = encode_text(tape, m, batch.text).value();
    CHECK(std::equal(out.values().begin(), out.values().end(), batch.text.values().begin()));
  }

  SUBCASE("zero input with zero bias encodes to zero") {
    RdcmModel m = RdcmModel::create(small_config(b.manifest), 3);
    zero(m.params, "vis.mlp.b0");
    zero(m.params, "vis.mlp.b1");
    Tape tape;
    for (double v : encode_image(tape, m, Tensor({3, 4})).value().values()) CHECK(v == 0.0);
  }

  SUBCASE("3 -> 2 projection by hand") {
    Manifest man = b.manifest;
    man.vis_dim = 3;
    ModelConfig cfg = small_config(man, 2);
    cfg.hidden_activation = Activation::Identity;
    RdcmModel m = RdcmModel::create(cfg, 3);
    m.params.at("vis.mlp.w0").value = Tensor::matrix(3, 2, {1, 0, 0, 1, 1, -1});
    set_identity(m.params, "vis.mlp.w1");
    zero(m.params, "vis.mlp.b0");
    m.params.at("vis.mlp.b1").value = Tensor({2}, {0.5, 0.0});
    Tape tape;
    const Tensor out = encode_image(tape, m, Tensor::matrix(1, 3, {1, 2, 3})).value();
    CHECK(out(0, 0) == 4.5);
    CHECK(out(0, 1) == -1.0);
  }
}

TEST_CASE("classify and predict") {
  const DatasetBundle b = testing::tiny_dataset();
  RdcmModel m = RdcmModel::create(small_config(b.manifest), 4);
  const Batch batch = make_batch(b.manifest, b.sources[1]);
  const EncodedFeatures f = encode(m, batch);
  const Tensor p = classify(m, f.text, f.vis);
  for (std::size_t r = 0; r < p.rows(); ++r) CHECK(p(r, 0) + p(r, 1) == doctest::Approx(1.0).epsilon(1e-12));

  const Prediction first = predict(m, batch);
  const Prediction second = predict(m, batch);
  CHECK(first.labels == second.labels);
  for (std::size_t r = 0; r < batch.size(); ++r) CHECK(first.labels[r] == (first.probabilities(r, 1) > 0.5 ? 1 : 0));

  SUBCASE("swapping the output units flips every decision") {
    RdcmModel swapped = m;
    Tensor& w = swapped.params.at("cls.mlp.w1").value;
    for (std::size_t r = 0; r < w.rows(); ++r) std::swap(w(r, 0), w(r, 1));
    Tensor& bias = swapped.params.at("cls.mlp.b1").value;
    std::swap(bias.values()[0], bias.values()[1]);
    const Prediction flipped = predict(swapped, batch);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      if (first.probabilities(r, 0) != first.probabilities(r, 1)) CHECK(flipped.labels[r] == 1 - first.labels[r]);
    }
  }

  SUBCASE("zero classifier gives uniform output and label 0") {
    for (const char* name : {"cls.mlp.w0", "cls.mlp.b0", "cls.mlp.w1", "cls.mlp.b1"}) zero(m.params, name);
    const Prediction u = predict(m, batch);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      CHECK(u.probabilities(r, 0) == 0.5);
      CHECK(u.probabilities(r, 1) == 0.5);
      CHECK(u.labels[r] == 0);
    }
  }

  CHECK_THROWS_AS(classify(m, Tensor({2, 3}), Tensor({2, 4})), DimensionError);
}

TEST_CASE("text descriptors") {
  const Tensor pooled = Tensor::matrix(1, 2, {0.0, std::log(3.0)});
  const Tensor d = text_descriptors(pooled);
  CHECK(d(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(d(0, 1) == doctest::Approx(0.75).epsilon(1e-15));
  // A sequence descriptor is the descriptor of the token mean.
  const Tensor seq({1, 2, 2}, {0.0, 0.0, 0.0, 2.0 * std::log(3.0)});
  const Tensor s = text_descriptors(seq);
  CHECK(s(0, 1) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("total loss against component oracles") {
  const DatasetBundle b = testing::tiny_dataset(3, 20);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const RdcmModel m = RdcmModel::create(small_config(b.manifest, 6), seed);
    const std::vector<Batch> batches = source_batches(b, 4, seed);
    const HyperParams h = test_hyper();

    std::vector<EncodedFeatures> enc;
    for (const Batch& x : batches) enc.push_back(encode(m, x));
    double inter = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = i + 1; j < 3; ++j) {
        inter += oracle::joint_mmd(enc[i].text, enc[i].vis, enc[j].text, enc[j].vis, h.kernels.text.sigmas,
                                   h.kernels.vis.sigmas);
      }
    }
    inter /= 3.0;

    std::vector<Tensor> texts, viss, insts;
    std::vector<bool> real;
    std::vector<int> labels;
    for (std::size_t i = 0; i < 3; ++i) {
      texts.push_back(enc[i].text);
      viss.push_back(enc[i].vis);
      insts.push_back(batches[i].inst);
      for (int y : batches[i].labels) {
        real.push_back(y == 0);
        labels.push_back(y);
      }
    }
    const Tensor all_t = stack(texts);
    const Tensor all_v = stack(viss);
    const double intra = oracle::weighted_infonce(l2_normalize(all_t), l2_normalize(all_v), stack(insts), real,
                                                  h.contrastive.beta, h.contrastive.temperature, false);
    const Tensor probs = classify(m, all_t, all_v);
    double cls = 0.0;
    for (std::size_t r = 0; r < labels.size(); ++r) cls -= std::log(probs(r, static_cast<std::size_t>(labels[r])));
    cls /= static_cast<double>(labels.size());

    const LossComponents c = total_loss(m, batches, nullptr, h);
    CAPTURE(seed);
    CHECK(std::abs(c.inter - inter) <= 1e-12);
    CHECK(std::abs(c.intra - intra) <= 1e-12);
    CHECK(std::abs(c.cls - cls) <= 1e-12);
    CHECK(std::abs(c.total - (cls + 0.7 * inter + 0.3 * intra)) <= 1e-12);
    CHECK(c.intra > 0.0);
    CHECK(c.anchors == static_cast<std::size_t>(std::count(real.begin(), real.end(), true)));

    // DA adds the source-target term to the inter-domain loss only.
    HyperParams da = h;
    da.mode = AdaptMode::DA;
    const Batch target = make_batch(b.manifest, b.sources[0], {10, 11, 12, 13, 14});
    const EncodedFeatures te = encode(m, target);
    double cross = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      cross += oracle::joint_mmd(enc[i].text, enc[i].vis, te.text, te.vis, h.kernels.text.sigmas, h.kernels.vis.sigmas);
    }
    const LossComponents cd = total_loss(m, batches, &target, da);
    CHECK(std::abs(cd.inter - (inter + cross / 3.0)) <= 1e-12);
    CHECK(std::abs(cd.intra - c.intra) <= 1e-12);
    CHECK(std::abs(cd.cls - c.cls) <= 1e-12);
  }
}

TEST_CASE("total loss identities") {
  const DatasetBundle b = testing::tiny_dataset(3, 20);
  const RdcmModel m = RdcmModel::create(small_config(b.manifest), 9);
  std::vector<Batch> batches = source_batches(b, 6);

  SUBCASE("zero weights leave the classification loss alone") {
    HyperParams h = test_hyper();
    h.lambda_inter = 0.0;
    h.lambda_intra = 0.0;
    const LossComponents c = total_loss(m, batches, nullptr, h);
    CHECK(c.total == c.cls);
    CHECK(c.inter > 0.0);

    // Swapping rows between domain batches only reorders the pooled classification loss.
    std::vector<Batch> mixed = batches;
    std::swap(mixed[0], mixed[2]);
    CHECK(std::abs(total_loss(m, mixed, nullptr, h).total - c.total) <= 1e-12);
  }

  SUBCASE("identical source domains have no inter-domain loss") {
    const HyperParams h = test_hyper();
    const std::vector<Batch> same(3, batches[1]);
    const LossComponents c = total_loss(m, same, nullptr, h);
    CHECK(std::abs(c.inter) <= 1e-12);
    CHECK(std::abs(c.total - (c.cls + 0.3 * c.intra)) <= 1e-12);
  }

  SUBCASE("within-domain permutation keeps the inter-domain loss") {
    const HyperParams h = test_hyper();
    std::vector<Batch> permuted = batches;
    permuted[1] = make_batch(b.manifest, b.sources[1], {5, 3, 0, 1, 4, 2});
    CHECK(std::abs(total_loss(m, permuted, nullptr, h).inter - total_loss(m, batches, nullptr, h).inter) <= 1e-12);
  }

  SUBCASE("mode and batch errors") {
    HyperParams h = test_hyper();
    h.mode = AdaptMode::DA;
    CHECK_THROWS_AS(total_loss(m, batches, nullptr, h), ConfigError);
    h.mode = AdaptMode::DG;
    CHECK_THROWS_AS(total_loss(m, batches, &batches[0], h), ConfigError);
    CHECK_THROWS_AS(total_loss(m, std::span<const Batch>(batches).first(1), nullptr, h), ConfigError);
    h.contrastive.beta = 1.2;
    CHECK_THROWS_AS(total_loss(m, batches, nullptr, h), ConfigError);
  }
}

TEST_CASE("total loss gradients") {
  const DatasetBundle b = testing::tiny_dataset(3, 12);
  RdcmModel m = RdcmModel::create(small_config(b.manifest, 3), 5);
  const std::vector<Batch> batches = source_batches(b, 4);
  for (ContrastiveMode mode : {ContrastiveMode::Ours, ContrastiveMode::TextCon, ContrastiveMode::Regular}) {
    for (MmdVariant variant : {MmdVariant::Joint, MmdVariant::Fusion}) {
      HyperParams h = test_hyper();
      h.contrastive_mode = mode;
      h.variant = variant;
      CAPTURE(to_string(mode));
      CAPTURE(to_string(variant));
      const double err = testing::fd_param_error(m.params, [&](Tape& tape) {
        return total_loss(tape, m, batches, nullptr, h).total;
      });
      CHECK(err <= 1e-4);
    }
  }
}

TEST_CASE("a small Adam step decreases the objective") {
  const DatasetBundle b = testing::tiny_dataset(3, 20);
  const std::vector<Batch> batches = source_batches(b, 8);
  HyperParams h = test_hyper();
  h.adam.lr = 1e-5;
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RdcmModel m = RdcmModel::create(small_config(b.manifest, 8), seed);
    const double before = total_loss(m, batches, nullptr, h).total;
    {
      Tape tape;
      compute_gradients(tape, total_loss(tape, m, batches, nullptr, h).total, m.params);
    }
    adam_step(m.params, h.adam);
    if (!(total_loss(m, batches, nullptr, h).total < before)) ++failures;
  }
  CHECK(failures <= 1);
}

TEST_CASE("fit") {
  const DatasetBundle b = split_70_30(testing::tiny_dataset(3, 60), 1);
  HyperParams h = test_hyper();
  h.epochs = 4;
  h.batch_size = 8;
  h.seed = 3;

  RdcmModel m1 = RdcmModel::create(small_config(b.manifest, 8), 3);
  RdcmModel m2 = m1;
  const TrainReport r1 = fit(m1, b, h);
  const TrainReport r2 = fit(m2, b, h);
  REQUIRE(r1.epochs.size() == 4);
  for (std::size_t e = 0; e < 4; ++e) {
    CHECK(r1.epochs[e].total == r2.epochs[e].total);
    CHECK(r1.epochs[e].inter == r2.epochs[e].inter);
    CHECK(r1.epochs[e].val_accuracy == r2.epochs[e].val_accuracy);
    CHECK(std::isfinite(r1.epochs[e].cls));
    CHECK(r1.epochs[e].val_accuracy <= r1.best_val_accuracy);
  }
  CHECK(r1.epochs[r1.best_epoch].val_accuracy == r1.best_val_accuracy);
  CHECK_FALSE(r1.vanilla_equivalent);

  // The returned parameters are the selected epoch's.
  std::vector<int> preds, gold;
  for (const Domain& d : b.sources) {
    const Batch batch = make_batch(b.manifest, d, d.test);
    const Prediction p = predict(m1, batch);
    preds.insert(preds.end(), p.labels.begin(), p.labels.end());
    gold.insert(gold.end(), batch.labels.begin(), batch.labels.end());
  }
  CHECK(accuracy(preds, gold) == r1.best_val_accuracy);

  SUBCASE("zero weights ignore every alignment setting") {
    HyperParams a = h;
    a.lambda_inter = a.lambda_intra = 0.0;
    HyperParams c = a;
    c.contrastive_mode = ContrastiveMode::Regular;
    c.variant = MmdVariant::Vision;
    c.contrastive.beta = 0.2;
    RdcmModel x = RdcmModel::create(small_config(b.manifest, 8), 3);
    RdcmModel y = x;
    const TrainReport rx = fit(x, b, a);
    const TrainReport ry = fit(y, b, c);
    CHECK(rx.vanilla_equivalent);
    for (std::size_t i = 0; i < x.params.size(); ++i) {
      const auto& u = x.params.at(i).value.values();
      const auto& v = y.params.at(i).value.values();
      CHECK(std::equal(u.begin(), u.end(), v.begin()));
    }
    CHECK(rx.epochs.back().cls == ry.epochs.back().cls);
  }

  SUBCASE("DA needs a split target") {
    HyperParams da = h;
    da.mode = AdaptMode::DA;
    RdcmModel x = RdcmModel::create(small_config(b.manifest, 8), 3);
    CHECK_THROWS_AS(fit(x, b, da), ConfigError);
    const DatasetBundle held = split_70_30(hold_out(testing::tiny_dataset(3, 60), "d02"), 1);
    RdcmModel y = RdcmModel::create(small_config(held.manifest, 8), 3);
    da.epochs = 1;
    CHECK(fit(y, held, da).epochs.size() == 1);
  }

  SUBCASE("non-finite loss aborts with the components") {
    RdcmModel x = RdcmModel::create(small_config(b.manifest, 8), 3);
    x.params.at("cls.mlp.b1").value.values()[0] = std::numeric_limits<double>::quiet_NaN();
    try {
      fit(x, b, h);
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("cls=") != std::string::npos);
    }
  }

  SUBCASE("unsplit data") {
    RdcmModel x = RdcmModel::create(small_config(b.manifest, 8), 3);
    CHECK_THROWS_AS(fit(x, testing::tiny_dataset(3, 60), h), ConfigError);
  }
}

TEST_CASE("checkpoint round trip") {
  TempDir tmp;
  const DatasetBundle b = testing::tiny_dataset();
  RdcmModel m = RdcmModel::create(small_config(b.manifest, 5), 8);
  m.params.at("vis.mlp.b0").value.values()[1] = 1.0 / 3.0;
  save_model(m, tmp.path);
  CHECK(fs::file_size(tmp.path / "params.bin") == 8 * m.params.scalar_count());

  const RdcmModel back = load_model(tmp.path);
  REQUIRE(back.params.size() == m.params.size());
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    CHECK(back.params.at(i).name == m.params.at(i).name);
    const auto& u = m.params.at(i).value.values();
    const auto& v = back.params.at(i).value.values();
    CHECK(std::equal(u.begin(), u.end(), v.begin(), v.end()));
  }
  const Batch batch = make_batch(b.manifest, b.sources[2]);
  CHECK(predict(back, batch).labels == predict(m, batch).labels);

  SUBCASE("truncated values") {
    fs::resize_file(tmp.path / "params.bin", 16);
    CHECK_THROWS_AS(load_model(tmp.path), LoadError);
  }
  SUBCASE("missing index") {
    fs::remove(tmp.path / "params.json");
    CHECK_THROWS_AS(load_model(tmp.path), LoadError);
  }
  SUBCASE("index for another architecture") {
    RdcmModel other = RdcmModel::create(small_config(b.manifest, 6), 8);
    save_model(other, tmp.path);
    fs::resize_file(tmp.path / "params.bin", 8 * m.params.scalar_count());
    CHECK_THROWS_AS(load_model(tmp.path), LoadError);
  }
}
