#pragma once

#include "rdcm/data.hpp"

#include <cstdint>
#include <string>

namespace rdcm {

/// Synthetic multi-modal, multi-domain benchmark.
///
/// Every domain shares a class-conditional latent z ~ N(separation * (2y - 1) * u, I).
/// Real posts emit both modalities from the same latent; fake posts (when
/// `decorrelate_fake`) draw an independent latent per modality. Each domain perturbs
/// the shared mixing maps and adds an offset, both inside a low-rank nuisance
/// subspace and scaled by `shift`. `spurious` adds a label-signed offset along a
/// direction of the same subspace that rotates with the domain index, so a
/// classifier that latches onto it in the sources does not transfer. With
/// shift = spurious = 0 all domains are identically distributed.
struct SynthConfig {
  std::string name = "synthetic";
  std::size_t domains = 4;
  std::size_t samples_per_domain = 400;
  std::size_t latent_dim = 8;
  std::size_t text_dim = 32;
  std::size_t vis_dim = 32;
  std::size_t inst_dim = 10;
  std::size_t seq_len = 0;        // > 0 emits token sequences (emb_dim = text_dim)
  std::size_t nuisance_rank = 2;  // rank of the per-domain perturbation subspace
  double shift = 0.1;
  double spurious = 2.0;  // length of the per-domain label shortcut inside the nuisance subspace
  double separation = 1.0;
  double noise = 0.5;
  double fake_prior = 0.5;
  bool decorrelate_fake = true;
  std::uint64_t seed = 7;

  void validate() const;
};

DatasetBundle synth_generate(const SynthConfig& cfg);

}  // namespace rdcm
