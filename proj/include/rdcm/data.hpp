#pragma once

#include "rdcm/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rdcm {

enum class TextMode { Pooled, Sequence };

TextMode parse_text_mode(std::string_view name);
std::string to_string(TextMode m);

/// One post. `text` is a pooled vector, or a row-major seq_len x emb_dim token sequence.
struct Sample {
  std::string id;
  std::string domain;
  int label = 0;  // 0 real / non-rumor, 1 fake / rumor
  std::vector<double> text;
  std::vector<double> vis;
  std::vector<double> inst;
};

struct DomainInfo {
  std::string id;
  std::string file;
  std::size_t count = 0;
  std::array<std::size_t, 2> label_counts{0, 0};
};

struct Manifest {
  std::string name;
  TextMode text_mode = TextMode::Pooled;
  std::size_t text_dim = 0;  // pooled width
  std::size_t seq_len = 0;   // sequence mode
  std::size_t emb_dim = 0;   // sequence mode
  std::size_t vis_dim = 0;
  std::size_t inst_dim = 0;
  std::vector<DomainInfo> domains;

  // Number of doubles in one sample's text payload.
  std::size_t text_values() const;
  void validate() const;
};

struct Domain {
  std::string id;
  std::vector<Sample> samples;
  std::vector<std::size_t> train;  // indices into samples
  std::vector<std::size_t> test;

  std::size_t size() const { return samples.size(); }
  bool has_split() const { return !train.empty() || !test.empty(); }
};

/// Labelled source domains plus an optional held-out target domain.
struct DatasetBundle {
  Manifest manifest;
  std::vector<Domain> sources;
  std::optional<Domain> target;

  const Domain& domain(std::string_view id) const;
  std::vector<std::string> domain_ids() const;
};

/// Stacked tensors for a set of samples from one domain.
struct Batch {
  Tensor text;  // n x text_dim, or n x seq_len x emb_dim
  Tensor vis;   // n x vis_dim
  Tensor inst;  // n x inst_dim
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

/// Reads manifest.json and the per-domain JSON Lines files it names (paths relative
/// to the manifest directory). Domains are ordered by id and samples by id.
DatasetBundle load_dataset(const std::filesystem::path& manifest_path);

/// Writes manifest.json plus one JSON Lines file per domain into `dir`. Declared counts
/// are recomputed from the samples. Target and sources are written alike.
void write_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir);

/// Per-domain seeded shuffle with |train| = floor(0.7 N); applied to the target too.
DatasetBundle split_70_30(DatasetBundle bundle, std::uint64_t seed);

/// Moves domain `target_id` out of the sources into the target slot.
DatasetBundle hold_out(DatasetBundle bundle, std::string_view target_id);

struct MinibatchStep {
  std::vector<std::vector<std::size_t>> sources;  // one index list per source domain
  std::optional<std::vector<std::size_t>> target;
};

/// One epoch of per-domain batches of exactly `batch_size` train indices. The epoch has
/// ceil(min_m |train_m| / B) steps; a domain that runs out of shuffled indices is topped
/// up by sampling its train split with replacement.
std::vector<MinibatchStep> make_minibatches(const DatasetBundle& bundle, std::size_t batch_size,
                                            std::uint64_t epoch_seed, bool include_target);

Batch make_batch(const Manifest& manifest, const Domain& domain, const std::vector<std::size_t>& indices);
Batch make_batch(const Manifest& manifest, const Domain& domain);  // every sample

}  // namespace rdcm
