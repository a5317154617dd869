#include "rdcm/config.hpp"

#include "rdcm/errors.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace rdcm {

namespace {

using nlohmann::json;

// Reads fields of one JSON object, remembering which keys were used.
class Fields {
 public:
  Fields(const json& j, std::string scope) : j_(j), scope_(std::move(scope)) {
    if (!j_.is_object()) throw ConfigError(where("") + " must be a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  void read_size(const char* key, std::size_t& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ConfigError(where(key) + " must be a non-negative integer");
    out = v.get<std::size_t>();
  }

  void read_seed(const char* key, std::uint64_t& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned()) throw ConfigError(where(key) + " must be a non-negative integer");
    out = v.get<std::uint64_t>();
  }

  const json* child(const char* key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.contains(k)) throw ConfigError("unknown config key '" + where(k.c_str()) + "'");
    }
  }

  std::string where(const char* key) const {
    if (scope_.empty()) return key;
    return *key ? scope_ + "." + key : scope_;
  }

 private:
  const json& j_;
  std::string scope_;
  std::set<std::string, std::less<>> used_;
};

template <typename Parse>
void read_enum(Fields& f, const char* key, Parse parse) {
  std::string name;
  f.read(key, name);
  if (!name.empty()) parse(name);
}

void read_hyper(const json& j, HyperParams& h) {
  Fields f(j, "hyper");
  f.read("lambda_inter", h.lambda_inter);
  f.read("lambda_intra", h.lambda_intra);
  f.read("beta", h.contrastive.beta);
  f.read("temperature", h.contrastive.temperature);
  read_enum(f, "contrastive", [&](const std::string& s) { h.contrastive_mode = parse_contrastive_mode(s); });
  read_enum(f, "variant", [&](const std::string& s) { h.variant = parse_mmd_variant(s); });
  read_enum(f, "mode", [&](const std::string& s) { h.mode = parse_adapt_mode(s); });
  f.read("text_sigmas", h.kernels.text.sigmas);
  f.read("vis_sigmas", h.kernels.vis.sigmas);
  f.read("learning_rate", h.adam.lr);
  f.read("weight_decay", h.adam.weight_decay);
  f.read_size("batch_size", h.batch_size);
  f.read_size("epochs", h.epochs);
  f.finish();
}

void read_synth(const json& j, SynthConfig& s) {
  Fields f(j, "synth");
  f.read("name", s.name);
  f.read_size("domains", s.domains);
  f.read_size("samples_per_domain", s.samples_per_domain);
  f.read_size("latent_dim", s.latent_dim);
  f.read_size("text_dim", s.text_dim);
  f.read_size("vis_dim", s.vis_dim);
  f.read_size("inst_dim", s.inst_dim);
  f.read_size("seq_len", s.seq_len);
  f.read_size("nuisance_rank", s.nuisance_rank);
  f.read("shift", s.shift);
  f.read("spurious", s.spurious);
  f.read("separation", s.separation);
  f.read("noise", s.noise);
  f.read("fake_prior", s.fake_prior);
  f.read("decorrelate_fake", s.decorrelate_fake);
  f.read_seed("seed", s.seed);
  f.finish();
}

}  // namespace

void RunConfig::validate() const {
  if (experiment_id.empty()) throw ConfigError("experiment_id must not be empty");
  if (experiment_id.find_first_of(",\n\"") != std::string::npos) throw ConfigError("experiment_id must not contain ',' or quotes");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (d < 1) throw ConfigError("d must be >= 1");
  for (double b : betas) {
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("betas: value " + std::to_string(b) + " outside [0, 1]");
  }
  hyper.validate();
  synth.validate();
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Fields f(j, "");
  f.read("experiment_id", c.experiment_id);
  f.read("data", c.data);
  f.read("target", c.target);
  f.read("out", c.out);
  if (const json* seeds = f.child("seeds")) {
    if (!seeds->is_array()) throw ConfigError("seeds must be an array of non-negative integers");
    c.seeds.clear();
    for (const json& s : *seeds) {
      if (!s.is_number_unsigned()) throw ConfigError("seeds must be an array of non-negative integers");
      c.seeds.push_back(s.get<std::uint64_t>());
    }
  }
  f.read_size("d", c.d);
  f.read("a_distance", c.a_distance);
  f.read("betas", c.betas);
  if (const json* h = f.child("hyper")) read_hyper(*h, c.hyper);
  if (const json* s = f.child("synth")) read_synth(*s, c.synth);
  f.finish();
  return c;
}

json to_json(const RunConfig& c) {
  const HyperParams& h = c.hyper;
  const SynthConfig& s = c.synth;
  return {
      {"experiment_id", c.experiment_id},
      {"data", c.data},
      {"target", c.target},
      {"out", c.out},
      {"seeds", c.seeds},
      {"d", c.d},
      {"a_distance", c.a_distance},
      {"betas", c.betas},
      {"hyper",
       {{"lambda_inter", h.lambda_inter},
        {"lambda_intra", h.lambda_intra},
        {"beta", h.contrastive.beta},
        {"temperature", h.contrastive.temperature},
        {"contrastive", to_string(h.contrastive_mode)},
        {"variant", to_string(h.variant)},
        {"mode", to_string(h.mode)},
        {"text_sigmas", h.kernels.text.sigmas},
        {"vis_sigmas", h.kernels.vis.sigmas},
        {"learning_rate", h.adam.lr},
        {"weight_decay", h.adam.weight_decay},
        {"batch_size", h.batch_size},
        {"epochs", h.epochs}}},
      {"synth",
       {{"name", s.name},
        {"domains", s.domains},
        {"samples_per_domain", s.samples_per_domain},
        {"latent_dim", s.latent_dim},
        {"text_dim", s.text_dim},
        {"vis_dim", s.vis_dim},
        {"inst_dim", s.inst_dim},
        {"seq_len", s.seq_len},
        {"nuisance_rank", s.nuisance_rank},
        {"shift", s.shift},
        {"spurious", s.spurious},
        {"separation", s.separation},
        {"noise", s.noise},
        {"fake_prior", s.fake_prior},
        {"decorrelate_fake", s.decorrelate_fake},
        {"seed", s.seed}}},
  };
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("--seed: '" + item + "' is not a non-negative integer");
    }
    try {
      seeds.push_back(std::stoull(item));
    } catch (const std::out_of_range&) {
      throw ConfigError("--seed: '" + item + "' is out of range");
    }
  }
  if (seeds.empty()) throw ConfigError("--seed: empty list");
  return seeds;
}

std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError(what + ": '" + item + "' is not a number");
    values.push_back(v);
  }
  if (values.empty()) throw ConfigError(what + ": empty list");
  return values;
}

std::filesystem::path manifest_path(const std::string& data) {
  if (data.empty()) throw ConfigError("no dataset given (set \"data\" or pass --data)");
  std::filesystem::path p(data);
  if (std::filesystem::is_directory(p)) p /= "manifest.json";
  return p;
}

}  // namespace rdcm
