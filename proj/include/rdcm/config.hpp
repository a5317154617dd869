#pragma once

#include "rdcm/model.hpp"
#include "rdcm/synth.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rdcm {

/// Everything a CLI run needs. Every key is optional in the JSON form; unknown keys are
/// rejected so that typos fail loudly instead of silently using a default.
///
/// {
///   "experiment_id": "rdcm", "data": "DIR or manifest.json", "target": "d00",
///   "out": "runs", "seeds": [1], "d": 256, "a_distance": false,
///   "betas": [0.3, 0.5, 0.7],
///   "hyper": {"lambda_inter", "lambda_intra", "beta", "temperature", "contrastive",
///             "variant", "mode", "text_sigmas", "vis_sigmas", "learning_rate",
///             "weight_decay", "batch_size", "epochs"},
///   "synth": {"name", "domains", "samples_per_domain", "latent_dim", "text_dim", "vis_dim",
///             "inst_dim", "seq_len", "nuisance_rank", "shift", "spurious", "separation",
///             "noise", "fake_prior", "decorrelate_fake", "seed"}
/// }
struct RunConfig {
  std::string experiment_id = "rdcm";
  std::string data;
  std::string target;
  std::string out = "runs";
  std::vector<std::uint64_t> seeds{1};
  std::size_t d = 256;
  bool a_distance = false;
  std::vector<double> betas{0.3, 0.5, 0.7};
  HyperParams hyper;
  SynthConfig synth;

  void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

/// Parses "1,2,3" into seeds. Throws ConfigError on anything that is not a
/// non-negative integer.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);
std::vector<double> parse_number_list(const std::string& text, const std::string& what);

/// A directory is resolved to DIR/manifest.json.
std::filesystem::path manifest_path(const std::string& data);

}  // namespace rdcm
