#include "rdcm/synth.hpp"

#include "rdcm/errors.hpp"
#include "rdcm/random.hpp"

#include <Eigen/QR>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace rdcm {

void SynthConfig::validate() const {
  auto positive = [](std::size_t v, const char* field) {
    if (v < 1) throw ConfigError(std::string("synth.") + field + " must be >= 1");
  };
  positive(domains, "domains");
  positive(samples_per_domain, "samples_per_domain");
  positive(latent_dim, "latent_dim");
  positive(text_dim, "text_dim");
  positive(vis_dim, "vis_dim");
  positive(inst_dim, "inst_dim");
  positive(nuisance_rank, "nuisance_rank");
  auto non_negative = [](double v, const char* field) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string("synth.") + field + " must be >= 0");
  };
  non_negative(shift, "shift");
  non_negative(separation, "separation");
  non_negative(noise, "noise");
  non_negative(spurious, "spurious");
  if (!(fake_prior > 0.0 && fake_prior < 1.0)) throw ConfigError("synth.fake_prior must lie in (0, 1)");
}

namespace {

RowMatrix gaussian(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  RowMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * n(rng);
  }
  return m;
}

Eigen::VectorXd gaussian_vec(Eigen::Index n, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * dist(rng);
  return v;
}

struct Modality {
  RowMatrix mixing;    // out x latent
  Eigen::VectorXd offset;
  Eigen::VectorXd spurious;  // label-signed offset, differs per domain
};

// Shared map plus a low-rank domain perturbation: A + shift * U R, b = shift * U c.
// The shortcut direction rotates with the domain index, so the sources' shortcuts
// average to roughly the opposite of the held-out domain's.
Modality perturb(const RowMatrix& base, const RowMatrix& basis, double shift, double spurious, double angle,
                 std::mt19937_64& rng) {
  const Eigen::Index latent = base.cols();
  const Eigen::Index rank = basis.cols();
  Modality m;
  m.mixing = base + shift * basis * gaussian(rank, latent, 1.0 / std::sqrt(static_cast<double>(latent)), rng);
  m.offset = shift * basis * gaussian_vec(rank, 1.0, rng);
  m.spurious = std::cos(angle) * basis.col(0);
  if (rank > 1) m.spurious += std::sin(angle) * basis.col(1);
  const double norm = m.spurious.norm();
  if (norm > 0.0) m.spurious *= spurious / norm;
  return m;
}

// Gaussian basis for the nuisance subspace, orthogonalized against the signal map so
// that an encoder can drop it without losing label information. Columns are scaled
// to the norm a raw Gaussian column would have.
RowMatrix nuisance_basis(const RowMatrix& map, Eigen::Index rank, std::mt19937_64& rng) {
  const Eigen::Index out = map.rows();
  const Eigen::Index latent = map.cols();
  RowMatrix raw = gaussian(out, rank, 1.0, rng);
  if (out < latent + rank) return raw;
  Eigen::MatrixXd joined(out, latent + rank);
  joined << map, raw;
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(joined);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(out, latent + rank);
  return std::sqrt(static_cast<double>(out)) * q.rightCols(rank);
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

DatasetBundle synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(cfg.seed, {0}));
  const auto L = static_cast<Eigen::Index>(cfg.latent_dim);
  const auto Dt = static_cast<Eigen::Index>(cfg.text_dim);
  const auto Dv = static_cast<Eigen::Index>(cfg.vis_dim);
  const auto C = static_cast<Eigen::Index>(cfg.inst_dim);
  const auto R = static_cast<Eigen::Index>(cfg.nuisance_rank);
  const double inv_sqrt_l = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));

  const RowMatrix text_map = gaussian(Dt, L, inv_sqrt_l, rng);
  // Equal widths share one base map, so a real post's two modalities start out close.
  RowMatrix vis_map = gaussian(Dv, L, inv_sqrt_l, rng);
  if (Dv == Dt) vis_map = text_map;
  const RowMatrix text_basis = nuisance_basis(text_map, R, rng);
  const RowMatrix vis_basis = nuisance_basis(vis_map, R, rng);
  const RowMatrix inst_map = gaussian(C, Dv, 1.0 / std::sqrt(static_cast<double>(cfg.vis_dim)), rng);
  Eigen::VectorXd class_dir = Eigen::VectorXd::Zero(L);
  class_dir(0) = 1.0;

  DatasetBundle bundle;
  Manifest& m = bundle.manifest;
  m.name = cfg.name;
  if (cfg.seq_len > 0) {
    m.text_mode = TextMode::Sequence;
    m.seq_len = cfg.seq_len;
    m.emb_dim = cfg.text_dim;
  } else {
    m.text_mode = TextMode::Pooled;
    m.text_dim = cfg.text_dim;
  }
  m.vis_dim = cfg.vis_dim;
  m.inst_dim = cfg.inst_dim;

  std::normal_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution is_fake(cfg.fake_prior);
  for (std::size_t d = 0; d < cfg.domains; ++d) {
    Domain dom;
    char id[32];
    std::snprintf(id, sizeof(id), "d%02zu", d);
    dom.id = id;
    std::mt19937_64 drng(derive_seed(cfg.seed, {1, d}));
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(d) / static_cast<double>(cfg.domains);
    const Modality text = perturb(text_map, text_basis, cfg.shift, cfg.spurious, angle, drng);
    const Modality vis = perturb(vis_map, vis_basis, cfg.shift, cfg.spurious, angle, drng);
    DomainInfo info;
    info.id = dom.id;
    info.file = dom.id + ".jsonl";
    for (std::size_t i = 0; i < cfg.samples_per_domain; ++i) {
      Sample s;
      char sid[48];
      std::snprintf(sid, sizeof(sid), "%s-%06zu", id, i);
      s.id = sid;
      s.domain = dom.id;
      s.label = is_fake(drng) ? 1 : 0;
      const double sign = s.label == 1 ? 1.0 : -1.0;
      const Eigen::VectorXd mean = cfg.separation * sign * class_dir;
      const Eigen::VectorXd z_text = mean + gaussian_vec(L, 1.0, drng);
      const Eigen::VectorXd z_vis =
          (s.label == 1 && cfg.decorrelate_fake) ? Eigen::VectorXd(mean + gaussian_vec(L, 1.0, drng)) : z_text;
      const Eigen::VectorXd t = text.mixing * z_text + text.offset + sign * text.spurious;
      const Eigen::VectorXd v =
          vis.mixing * z_vis + vis.offset + sign * vis.spurious + gaussian_vec(Dv, cfg.noise, drng);
      if (cfg.seq_len > 0) {
        for (std::size_t k = 0; k < cfg.seq_len; ++k) {
          const Eigen::VectorXd tok = t + gaussian_vec(Dt, cfg.noise, drng);
          s.text.insert(s.text.end(), tok.data(), tok.data() + tok.size());
        }
      } else {
        s.text = to_vector(t + gaussian_vec(Dt, cfg.noise, drng));
      }
      s.vis = to_vector(v);
      Eigen::VectorXd logits = inst_map * v;
      logits.array() -= logits.maxCoeff();
      Eigen::VectorXd p = logits.array().exp();
      p /= p.sum();
      s.inst = to_vector(p);
      ++info.label_counts[static_cast<std::size_t>(s.label)];
      dom.samples.push_back(std::move(s));
    }
    info.count = dom.samples.size();
    m.domains.push_back(info);
    bundle.sources.push_back(std::move(dom));
  }
  return bundle;
}

}  // namespace rdcm
