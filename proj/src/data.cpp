#include "rdcm/data.hpp"

#include "rdcm/errors.hpp"
#include "rdcm/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace rdcm {

using nlohmann::json;

TextMode parse_text_mode(std::string_view name) {
  if (name == "pooled") return TextMode::Pooled;
  if (name == "sequence") return TextMode::Sequence;
  throw ConfigError("unknown text mode: " + std::string(name));
}

std::string to_string(TextMode m) { return m == TextMode::Pooled ? "pooled" : "sequence"; }

std::size_t Manifest::text_values() const {
  return text_mode == TextMode::Pooled ? text_dim : seq_len * emb_dim;
}

void Manifest::validate() const {
  if (text_mode == TextMode::Pooled && text_dim < 1) throw ConfigError("manifest: text_dim must be >= 1");
  if (text_mode == TextMode::Sequence && (seq_len < 1 || emb_dim < 1)) {
    throw ConfigError("manifest: seq_len and emb_dim must be >= 1");
  }
  if (vis_dim < 1) throw ConfigError("manifest: vis_dim must be >= 1");
  if (inst_dim < 1) throw ConfigError("manifest: inst_dim must be >= 1");
  std::set<std::string> ids;
  for (const auto& d : domains) {
    if (d.id.empty()) throw ConfigError("manifest: empty domain id");
    if (!ids.insert(d.id).second) throw ConfigError("manifest: duplicate domain id '" + d.id + "'");
    if (d.label_counts[0] + d.label_counts[1] != d.count) {
      throw ConfigError("manifest: label counts of domain '" + d.id + "' do not add up to its count");
    }
  }
}

const Domain& DatasetBundle::domain(std::string_view id) const {
  for (const auto& d : sources) {
    if (d.id == id) return d;
  }
  if (target && target->id == id) return *target;
  throw ConfigError("unknown domain: " + std::string(id));
}

std::vector<std::string> DatasetBundle::domain_ids() const {
  std::vector<std::string> ids;
  for (const auto& d : sources) ids.push_back(d.id);
  if (target) ids.push_back(target->id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

Manifest manifest_from_json(const json& j) {
  Manifest m;
  m.name = j.at("name").get<std::string>();
  m.text_mode = parse_text_mode(j.at("text_mode").get<std::string>());
  const json& td = j.at("text_dim");
  if (m.text_mode == TextMode::Pooled) {
    m.text_dim = td.get<std::size_t>();
  } else {
    m.seq_len = td.at("seq_len").get<std::size_t>();
    m.emb_dim = td.at("emb_dim").get<std::size_t>();
  }
  m.vis_dim = j.at("vis_dim").get<std::size_t>();
  m.inst_dim = j.at("inst_dim").get<std::size_t>();
  for (const auto& dj : j.at("domains")) {
    DomainInfo d;
    d.id = dj.at("id").get<std::string>();
    d.file = dj.at("file").get<std::string>();
    d.count = dj.at("count").get<std::size_t>();
    const json& lc = dj.at("label_counts");
    d.label_counts = {lc.at("0").get<std::size_t>(), lc.at("1").get<std::size_t>()};
    m.domains.push_back(std::move(d));
  }
  return m;
}

json manifest_to_json(const Manifest& m) {
  json j;
  j["name"] = m.name;
  j["text_mode"] = to_string(m.text_mode);
  if (m.text_mode == TextMode::Pooled) {
    j["text_dim"] = m.text_dim;
  } else {
    j["text_dim"] = json{{"seq_len", m.seq_len}, {"emb_dim", m.emb_dim}};
  }
  j["vis_dim"] = m.vis_dim;
  j["inst_dim"] = m.inst_dim;
  j["domains"] = json::array();
  for (const auto& d : m.domains) {
    j["domains"].push_back(json{{"id", d.id},
                                {"file", d.file},
                                {"count", d.count},
                                {"label_counts", json{{"0", d.label_counts[0]}, {"1", d.label_counts[1]}}}});
  }
  return j;
}

std::vector<double> number_array(const json& j, std::size_t expected, const std::string& field) {
  if (!j.is_array()) throw ValidationError("'" + field + "' must be an array");
  if (j.size() != expected) {
    throw ValidationError("'" + field + "' has " + std::to_string(j.size()) + " entries, expected " +
                          std::to_string(expected));
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& v : j) {
    if (!v.is_number()) throw ValidationError("'" + field + "' contains a non-number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ValidationError("'" + field + "' contains a non-finite number");
    out.push_back(x);
  }
  return out;
}

Sample sample_from_json(const json& j, const Manifest& m, const std::string& domain) {
  Sample s;
  s.domain = domain;
  s.id = j.at("id").get<std::string>();
  const json& label = j.at("label");
  if (!label.is_number_integer() || (label.get<int>() != 0 && label.get<int>() != 1)) {
    throw ValidationError("label must be 0 or 1");
  }
  s.label = label.get<int>();
  const json& text = j.at("text");
  if (m.text_mode == TextMode::Pooled) {
    s.text = number_array(text, m.text_dim, "text");
  } else {
    if (!text.is_array() || text.size() != m.seq_len) {
      throw ValidationError("'text' must hold " + std::to_string(m.seq_len) + " token vectors");
    }
    s.text.reserve(m.seq_len * m.emb_dim);
    for (const auto& tok : text) {
      const auto row = number_array(tok, m.emb_dim, "text token");
      s.text.insert(s.text.end(), row.begin(), row.end());
    }
  }
  s.vis = number_array(j.at("vis"), m.vis_dim, "vis");
  s.inst = number_array(j.at("inst"), m.inst_dim, "inst");
  double sum = 0.0;
  for (double v : s.inst) {
    if (v < 0.0) throw ValidationError("'inst' has a negative entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ValidationError("'inst' does not sum to 1 (sum " + std::to_string(sum) + ")");
  return s;
}

json sample_to_json(const Sample& s, const Manifest& m) {
  json j;
  j["id"] = s.id;
  j["label"] = s.label;
  if (m.text_mode == TextMode::Pooled) {
    j["text"] = s.text;
  } else {
    json seq = json::array();
    for (std::size_t t = 0; t < m.seq_len; ++t) {
      seq.push_back(std::vector<double>(s.text.begin() + static_cast<std::ptrdiff_t>(t * m.emb_dim),
                                        s.text.begin() + static_cast<std::ptrdiff_t>((t + 1) * m.emb_dim)));
    }
    j["text"] = std::move(seq);
  }
  j["vis"] = s.vis;
  j["inst"] = s.inst;
  return j;
}

Domain load_domain(const std::filesystem::path& path, const DomainInfo& info, const Manifest& m,
                   std::set<std::string>& seen_ids) {
  std::ifstream in(path);
  if (!in) throw LoadError(path.string() + ": cannot open domain file");
  Domain d;
  d.id = info.id;
  std::array<std::size_t, 2> labels{0, 0};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      Sample s = sample_from_json(json::parse(line), m, info.id);
      if (!seen_ids.insert(s.id).second) throw ValidationError("duplicate sample id '" + s.id + "'");
      ++labels[static_cast<std::size_t>(s.label)];
      d.samples.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw LoadError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (d.samples.size() != info.count) {
    throw LoadError(path.string() + ": count mismatch for domain '" + info.id + "': manifest declares " +
                    std::to_string(info.count) + ", file has " + std::to_string(d.samples.size()));
  }
  if (labels != info.label_counts) {
    throw LoadError(path.string() + ": label count mismatch for domain '" + info.id + "': manifest declares " +
                    std::to_string(info.label_counts[0]) + "/" + std::to_string(info.label_counts[1]) +
                    ", file has " + std::to_string(labels[0]) + "/" + std::to_string(labels[1]));
  }
  std::sort(d.samples.begin(), d.samples.end(), [](const Sample& a, const Sample& b) { return a.id < b.id; });
  return d;
}

}  // namespace

DatasetBundle load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw LoadError(manifest_path.string() + ": cannot open manifest");
  DatasetBundle bundle;
  try {
    bundle.manifest = manifest_from_json(json::parse(in));
    bundle.manifest.validate();
  } catch (const std::exception& e) {
    throw LoadError(manifest_path.string() + ": " + e.what());
  }
  const auto base = manifest_path.parent_path();
  std::set<std::string> seen_ids;
  for (const auto& info : bundle.manifest.domains) {
    bundle.sources.push_back(load_domain(base / info.file, info, bundle.manifest, seen_ids));
  }
  std::sort(bundle.sources.begin(), bundle.sources.end(),
            [](const Domain& a, const Domain& b) { return a.id < b.id; });
  std::sort(bundle.manifest.domains.begin(), bundle.manifest.domains.end(),
            [](const DomainInfo& a, const DomainInfo& b) { return a.id < b.id; });
  return bundle;
}

void write_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Manifest m = bundle.manifest;
  m.domains.clear();
  std::vector<const Domain*> all;
  for (const auto& d : bundle.sources) all.push_back(&d);
  if (bundle.target) all.push_back(&*bundle.target);
  std::sort(all.begin(), all.end(), [](const Domain* a, const Domain* b) { return a->id < b->id; });
  for (const Domain* d : all) {
    DomainInfo info;
    info.id = d->id;
    info.file = d->id + ".jsonl";
    info.count = d->samples.size();
    std::ofstream out(dir / info.file, std::ios::binary);
    if (!out) throw LoadError((dir / info.file).string() + ": cannot write");
    for (const auto& s : d->samples) {
      ++info.label_counts[static_cast<std::size_t>(s.label)];
      out << sample_to_json(s, m).dump() << '\n';
    }
    m.domains.push_back(std::move(info));
  }
  m.validate();
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw LoadError((dir / "manifest.json").string() + ": cannot write");
  out << manifest_to_json(m).dump(2) << '\n';
}

namespace {

void split_domain(Domain& d, std::uint64_t seed) {
  const std::size_t n = d.samples.size();
  if (n < 2) throw ConfigError("split: domain '" + d.id + "' has fewer than 2 samples");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = (7 * n) / 10;
  d.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  d.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(d.train.begin(), d.train.end());
  std::sort(d.test.begin(), d.test.end());
}

std::uint64_t domain_salt(std::string_view id) {
  // FNV-1a; keeps a domain's split independent of which domains are held out.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

DatasetBundle split_70_30(DatasetBundle bundle, std::uint64_t seed) {
  for (auto& d : bundle.sources) split_domain(d, derive_seed(seed, {domain_salt(d.id)}));
  if (bundle.target) split_domain(*bundle.target, derive_seed(seed, {domain_salt(bundle.target->id)}));
  return bundle;
}

DatasetBundle hold_out(DatasetBundle bundle, std::string_view target_id) {
  if (bundle.target) {
    bundle.sources.push_back(std::move(*bundle.target));
    bundle.target.reset();
    std::sort(bundle.sources.begin(), bundle.sources.end(),
              [](const Domain& a, const Domain& b) { return a.id < b.id; });
  }
  auto it = std::find_if(bundle.sources.begin(), bundle.sources.end(),
                         [&](const Domain& d) { return d.id == target_id; });
  if (it == bundle.sources.end()) throw ConfigError("unknown target domain: " + std::string(target_id));
  bundle.target = std::move(*it);
  bundle.sources.erase(it);
  return bundle;
}

namespace {

std::vector<std::vector<std::size_t>> domain_batches(const Domain& d, std::size_t batch_size, std::size_t steps,
                                                     std::uint64_t seed) {
  if (d.train.empty()) throw ConfigError("minibatches: domain '" + d.id + "' has an empty train split");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order = d.train;
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<std::size_t> pick(0, d.train.size() - 1);
  std::vector<std::vector<std::size_t>> batches(steps);
  std::size_t cursor = 0;
  for (auto& batch : batches) {
    batch.reserve(batch_size);
    while (batch.size() < batch_size) {
      batch.push_back(cursor < order.size() ? order[cursor++] : d.train[pick(rng)]);
    }
  }
  return batches;
}

}  // namespace

std::vector<MinibatchStep> make_minibatches(const DatasetBundle& bundle, std::size_t batch_size,
                                            std::uint64_t epoch_seed, bool include_target) {
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
  if (bundle.sources.empty()) throw ConfigError("minibatches: no source domains");
  if (include_target && !bundle.target) throw ConfigError("minibatches: no target domain");
  std::size_t min_train = bundle.sources.front().train.size();
  for (const auto& d : bundle.sources) min_train = std::min(min_train, d.train.size());
  const std::size_t steps = std::max<std::size_t>(1, (min_train + batch_size - 1) / batch_size);

  std::vector<std::vector<std::vector<std::size_t>>> per_domain;
  for (std::size_t i = 0; i < bundle.sources.size(); ++i) {
    per_domain.push_back(
        domain_batches(bundle.sources[i], batch_size, steps, derive_seed(epoch_seed, {domain_salt(bundle.sources[i].id)})));
  }
  std::vector<std::vector<std::size_t>> target_batches;
  if (include_target) {
    target_batches =
        domain_batches(*bundle.target, batch_size, steps, derive_seed(epoch_seed, {domain_salt(bundle.target->id), 1}));
  }
  std::vector<MinibatchStep> out(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    for (auto& batches : per_domain) out[s].sources.push_back(std::move(batches[s]));
    if (include_target) out[s].target = std::move(target_batches[s]);
  }
  return out;
}

Batch make_batch(const Manifest& manifest, const Domain& domain, const std::vector<std::size_t>& indices) {
  const std::size_t n = indices.size();
  Batch b;
  if (manifest.text_mode == TextMode::Pooled) {
    b.text = Tensor({n, manifest.text_dim});
  } else {
    b.text = Tensor({n, manifest.seq_len, manifest.emb_dim});
  }
  b.vis = Tensor({n, manifest.vis_dim});
  b.inst = Tensor({n, manifest.inst_dim});
  b.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = domain.samples.at(indices[i]);
    std::copy(s.text.begin(), s.text.end(), b.text.row(i).begin());
    std::copy(s.vis.begin(), s.vis.end(), b.vis.row(i).begin());
    std::copy(s.inst.begin(), s.inst.end(), b.inst.row(i).begin());
    b.labels[i] = s.label;
  }
  return b;
}

Batch make_batch(const Manifest& manifest, const Domain& domain) {
  std::vector<std::size_t> all(domain.samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return make_batch(manifest, domain, all);
}

}  // namespace rdcm
