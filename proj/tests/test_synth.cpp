#include "support.hpp"

#include "rdcm/errors.hpp"
#include "rdcm/experiment.hpp"
#include "rdcm/mmd.hpp"
#include "rdcm/synth.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rdcm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

DomainFeatures features(const Domain& d) {
  DomainFeatures f{d.id, Tensor({d.size(), d.samples[0].text.size()}), Tensor({d.size(), d.samples[0].vis.size()})};
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::copy(d.samples[i].text.begin(), d.samples[i].text.end(), f.text.row(i).begin());
    std::copy(d.samples[i].vis.begin(), d.samples[i].vis.end(), f.vis.row(i).begin());
  }
  return f;
}

}  // namespace

TEST_CASE("synth bookkeeping") {
  SynthConfig cfg;
  cfg.domains = 4;
  cfg.samples_per_domain = 200;
  const DatasetBundle b = synth_generate(cfg);
  REQUIRE(b.manifest.domains.size() == 4);
  for (const auto& info : b.manifest.domains) {
    CHECK(info.count == 200);
    CHECK(info.label_counts[0] + info.label_counts[1] == 200);
    // Balanced prior: far from either class dominating.
    CHECK(info.label_counts[1] > 70);
    CHECK(info.label_counts[1] < 130);
  }
  CHECK(b.domain_ids() == std::vector<std::string>{"d00", "d01", "d02", "d03"});
  for (const Sample& s : b.sources[2].samples) {
    CHECK(s.text.size() == cfg.text_dim);
    CHECK(s.vis.size() == cfg.vis_dim);
    REQUIRE(s.inst.size() == cfg.inst_dim);
    double sum = 0.0;
    for (double v : s.inst) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  cfg.fake_prior = 0.9;
  const DatasetBundle skewed = synth_generate(cfg);
  CHECK(skewed.manifest.domains[0].label_counts[1] > 160);
}

TEST_CASE("synth determinism") {
  SynthConfig cfg;
  cfg.domains = 3;
  cfg.samples_per_domain = 30;
  const fs::path base = fs::temp_directory_path() / ("rdcm_synth_" + std::to_string(std::random_device{}()));
  write_dataset(synth_generate(cfg), base / "a");
  write_dataset(synth_generate(cfg), base / "b");
  for (const char* f : {"manifest.json", "d00.jsonl", "d02.jsonl"}) {
    CHECK(slurp(base / "a" / f) == slurp(base / "b" / f));
    CHECK_FALSE(slurp(base / "a" / f).empty());
  }
  cfg.seed = 8;
  write_dataset(synth_generate(cfg), base / "c");
  CHECK(slurp(base / "a" / "d00.jsonl") != slurp(base / "c" / "d00.jsonl"));
  fs::remove_all(base);
}

TEST_CASE("without shift the domains share one distribution") {
  SynthConfig cfg;
  cfg.domains = 3;
  cfg.samples_per_domain = 150;
  cfg.shift = 0.0;
  cfg.spurious = 0.0;
  const DatasetBundle same = synth_generate(cfg);
  cfg.shift = 1.0;
  cfg.spurious = 2.0;
  const DatasetBundle shifted = synth_generate(cfg);

  const KernelSpecs specs;
  for (MmdVariant v : {MmdVariant::Joint, MmdVariant::Text, MmdVariant::Vision}) {
    CAPTURE(to_string(v));
    const double flat = marginal_mmd(features(same.sources[0]), features(same.sources[1]), specs, v);
    const double moved = marginal_mmd(features(shifted.sources[0]), features(shifted.sources[1]), specs, v);
    CHECK(flat < moved);
    CHECK(flat < 0.5 * moved);
  }
}

TEST_CASE("real posts align across modalities more than fake posts") {
  for (std::uint64_t seed : {7, 8, 9}) {
    SynthConfig cfg;
    cfg.domains = 2;
    cfg.samples_per_domain = 300;
    cfg.seed = seed;
    const DatasetBundle b = synth_generate(cfg);

    // Shared Gaussian projection for both modalities (equal widths).
    std::mt19937_64 rng(seed + 100);
    const Tensor proj = testing::random_tensor({cfg.text_dim, 16}, rng);
    double cos_sum[2] = {0.0, 0.0};
    std::size_t count[2] = {0, 0};
    for (const Domain& d : b.sources) {
      const DomainFeatures f = features(d);
      const RowMatrix pt = f.text.mat() * proj.mat();
      const RowMatrix pv = f.vis.mat() * proj.mat();
      for (std::size_t i = 0; i < d.size(); ++i) {
        const Eigen::Index r = static_cast<Eigen::Index>(i);
        const double c = pt.row(r).dot(pv.row(r)) / (pt.row(r).norm() * pv.row(r).norm());
        cos_sum[d.samples[i].label] += c;
        ++count[d.samples[i].label];
      }
    }
    const double real = cos_sum[0] / static_cast<double>(count[0]);
    const double fake = cos_sum[1] / static_cast<double>(count[1]);
    CAPTURE(seed);
    CHECK(real > fake + 0.1);
  }
}

TEST_CASE("decorrelation flag controls the fake-pair alignment gap") {
  SynthConfig cfg;
  cfg.domains = 2;
  cfg.samples_per_domain = 300;
  cfg.spurious = 0.0;
  cfg.separation = 0.0;
  auto gap = [&](bool decorrelate) {
    cfg.decorrelate_fake = decorrelate;
    const DatasetBundle b = synth_generate(cfg);
    double s[2] = {0, 0};
    std::size_t n[2] = {0, 0};
    for (const Domain& d : b.sources) {
      const DomainFeatures f = features(d);
      for (std::size_t i = 0; i < d.size(); ++i) {
        const Eigen::Index r = static_cast<Eigen::Index>(i);
        s[d.samples[i].label] += f.text.mat().row(r).dot(f.vis.mat().row(r)) /
                                 (f.text.mat().row(r).norm() * f.vis.mat().row(r).norm());
        ++n[d.samples[i].label];
      }
    }
    return s[0] / static_cast<double>(n[0]) - s[1] / static_cast<double>(n[1]);
  };
  CHECK(gap(true) > 0.1);
  CHECK(std::abs(gap(false)) < 0.05);
}

TEST_CASE("synth validation") {
  auto bad = [](auto edit) {
    SynthConfig cfg;
    edit(cfg);
    return cfg;
  };
  CHECK_THROWS_AS(synth_generate(bad([](SynthConfig& c) { c.domains = 0; })), ConfigError);
  CHECK_THROWS_AS(synth_generate(bad([](SynthConfig& c) { c.samples_per_domain = 0; })), ConfigError);
  CHECK_THROWS_AS(synth_generate(bad([](SynthConfig& c) { c.shift = -0.1; })), ConfigError);
  CHECK_THROWS_AS(synth_generate(bad([](SynthConfig& c) { c.spurious = -1.0; })), ConfigError);
  CHECK_THROWS_AS(synth_generate(bad([](SynthConfig& c) { c.noise = -1.0; })), ConfigError);
  CHECK_THROWS_AS(synth_generate(bad([](SynthConfig& c) { c.fake_prior = 1.5; })), ConfigError);
  CHECK_THROWS_AS(synth_generate(bad([](SynthConfig& c) { c.inst_dim = 0; })), ConfigError);
}
