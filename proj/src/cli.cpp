#include "rdcm/cli.hpp"

#include "rdcm/checkpoint.hpp"
#include "rdcm/config.hpp"
#include "rdcm/errors.hpp"
#include "rdcm/experiment.hpp"
#include "rdcm/random.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace rdcm {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Flags {
  std::string config;
  std::string seeds;
  std::string out;
  std::string mode;
  std::string variant;
  std::string contrastive;
  std::string data;
  std::string target;
  std::string betas;
  std::string domains;
  std::string halves;
  std::string model;
  bool a_distance = false;
  bool without_inter = false;
  bool without_cross = false;
  bool without_both = false;
};

RunConfig effective_config(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (!f.seeds.empty()) c.seeds = parse_seed_list(f.seeds);
  if (!f.out.empty()) c.out = f.out;
  if (!f.mode.empty()) c.hyper.mode = parse_adapt_mode(f.mode);
  if (!f.variant.empty()) c.hyper.variant = parse_mmd_variant(f.variant);
  if (!f.contrastive.empty()) c.hyper.contrastive_mode = parse_contrastive_mode(f.contrastive);
  if (!f.data.empty()) c.data = f.data;
  if (!f.target.empty()) c.target = f.target;
  if (!f.betas.empty()) c.betas = parse_number_list(f.betas, "--betas");
  if (f.a_distance) c.a_distance = true;
  c.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_metrics(const fs::path& path, const std::vector<MetricRow>& rows) {
  std::ostringstream s;
  write_metrics_csv(s, rows);
  write_text(path, s.str());
}

json report_json(const RunResult& r, const HyperParams& hyper) {
  json epochs = json::array();
  for (const auto& e : r.report.epochs) {
    epochs.push_back({{"cls", e.cls},
                      {"inter", e.inter},
                      {"intra", e.intra},
                      {"total", e.total},
                      {"val_accuracy", e.val_accuracy},
                      {"empty_anchor_steps", e.empty_anchor_steps}});
  }
  json j = {{"experiment_id", r.metrics.experiment_id},
            {"target", r.metrics.target},
            {"seed", r.metrics.seed},
            {"mode", to_string(hyper.mode)},
            {"vanilla_equivalent", r.report.vanilla_equivalent},
            {"accuracy", r.metrics.accuracy},
            {"best_epoch", r.report.best_epoch},
            {"best_val_accuracy", r.report.best_val_accuracy},
            {"wall_seconds", r.report.wall_seconds},
            {"epochs", epochs}};
  if (r.metrics.a_distance) j["a_distance"] = *r.metrics.a_distance;
  return j;
}

DatasetBundle load_data(const RunConfig& c) { return load_dataset(manifest_path(c.data)); }

RunOptions run_options(const RunConfig& c, const std::string& experiment_id, const HyperParams& hyper) {
  RunOptions o;
  o.experiment_id = experiment_id;
  o.hyper = hyper;
  o.d = c.d;
  o.a_distance = c.a_distance;
  return o;
}

std::string dir_name(const std::string& id) {
  std::string s = id;
  for (char& ch : s) {
    if (ch == '/' || ch == '\\' || ch == ' ' || ch == '=') ch = '_';
  }
  return s;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

int cmd_synth(const RunConfig& c, const Flags& f, std::ostream& out) {
  SynthConfig s = c.synth;
  if (!f.seeds.empty()) s.seed = c.seeds.front();
  const DatasetBundle bundle = synth_generate(s);
  const fs::path dir(c.out);
  write_dataset(bundle, dir);
  RunConfig effective = c;
  effective.synth = s;
  write_json(dir / "config.json", to_json(effective));
  out << "wrote " << bundle.sources.size() << " domains to " << dir.string() << '\n';
  for (const auto& d : bundle.manifest.domains) {
    out << "  " << d.id << ": " << d.count << " posts (" << d.label_counts[0] << " real, " << d.label_counts[1]
        << " fake)\n";
  }
  return kExitOk;
}

int cmd_train(const RunConfig& c, std::ostream& out) {
  if (c.target.empty()) {
    if (c.hyper.mode == AdaptMode::DA) throw ConfigError("DA training needs target domain data: pass --target");
    throw ConfigError("train needs the held-out target domain: pass --target");
  }
  const DatasetBundle dataset = load_data(c);
  (void)dataset.domain(c.target);
  const fs::path dir(c.out);
  std::vector<MetricRow> rows;
  json reports = json::array();
  for (std::uint64_t seed : c.seeds) {
    const RunResult r = run_target(dataset, c.target, seed, run_options(c, c.experiment_id, c.hyper));
    const fs::path run_dir = dir / ("seed-" + std::to_string(seed));
    RunConfig single = c;
    single.seeds = {seed};
    write_json(run_dir / "config.json", to_json(single));
    save_model(r.model, run_dir);
    const json report = report_json(r, c.hyper);
    write_json(run_dir / "report.json", report);
    write_metrics(run_dir / "metrics.csv", {r.metrics});
    reports.push_back(report);
    rows.push_back(r.metrics);
    out << c.experiment_id << " target=" << c.target << " seed=" << seed << " accuracy=" << std::fixed
        << std::setprecision(4) << r.metrics.accuracy;
    if (r.metrics.a_distance) out << " a_distance=" << *r.metrics.a_distance;
    out << (r.report.vanilla_equivalent ? " (vanilla)" : "") << '\n';
    out.unsetf(std::ios::floatfield);
  }
  write_json(dir / "config.json", to_json(c));
  write_json(dir / "report.json", reports);
  write_metrics(dir / "metrics.csv", rows);
  return kExitOk;
}

struct Experiment {
  std::string id;
  HyperParams hyper;
};

// Tables of the form "method, target..., Avg" with mean±std cells in percent. Avg is the
// mean over targets; its spread is the population std over seeds of the per-seed average.
std::string summary_table(const std::vector<Experiment>& experiments, const std::vector<std::string>& targets,
                          const std::vector<MetricRow>& rows) {
  std::ostringstream s;
  s << "method";
  for (const auto& t : targets) s << ',' << t;
  s << ",Avg\n";
  auto cell = [](double mean, double std) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f±%.2f", 100.0 * mean, 100.0 * std);
    return std::string(buf);
  };
  const auto agg = aggregate(rows);
  for (const auto& e : experiments) {
    s << e.id;
    double mean_sum = 0.0;
    for (const auto& t : targets) {
      const auto it = std::find_if(agg.begin(), agg.end(),
                                   [&](const AggregateRow& a) { return a.experiment_id == e.id && a.target == t; });
      if (it == agg.end()) throw UsageError("summary: missing results for " + e.id + "/" + t);
      s << ',' << cell(it->mean, it->std);
      mean_sum += it->mean;
    }
    std::map<std::uint64_t, std::vector<double>> per_seed;
    for (const auto& r : rows) {
      if (r.experiment_id == e.id) per_seed[r.seed].push_back(r.accuracy);
    }
    std::vector<double> averages;
    for (auto& [seed, accs] : per_seed) {
      std::sort(accs.begin(), accs.end());
      averages.push_back(std::accumulate(accs.begin(), accs.end(), 0.0) / static_cast<double>(accs.size()));
    }
    const double avg = mean_sum / static_cast<double>(targets.size());
    double var = 0.0;
    for (double a : averages) var += (a - avg) * (a - avg);
    var /= static_cast<double>(averages.size());
    s << ',' << cell(avg, std::sqrt(var)) << '\n';
  }
  return s.str();
}

int cmd_loo(const RunConfig& c, const Flags& f, std::ostream& out) {
  const DatasetBundle dataset = load_data(c);
  const std::vector<std::string> targets = dataset.domain_ids();
  if (targets.size() < 3) throw ConfigError("loo needs at least 3 domains, dataset has " + std::to_string(targets.size()));

  std::vector<Experiment> experiments{{c.experiment_id, c.hyper}};
  auto ablation = [&](const char* id, bool inter, bool cross) {
    HyperParams h = c.hyper;
    if (inter) h.lambda_inter = 0.0;
    if (cross) h.lambda_intra = 0.0;
    if (id == c.experiment_id) throw ConfigError("experiment_id collides with ablation row " + std::string(id));
    experiments.push_back({id, h});
  };
  if (f.without_inter) ablation("w/o-inter", true, false);
  if (f.without_cross) ablation("w/o-cross", false, true);
  if (f.without_both) ablation("w/o-both", true, true);

  const fs::path dir(c.out);
  std::vector<MetricRow> rows;
  json reports = json::array();
  for (const auto& e : experiments) {
    for (const auto& t : targets) {
      for (std::uint64_t seed : c.seeds) {
        const RunResult r = run_target(dataset, t, seed, run_options(c, e.id, e.hyper));
        const json report = report_json(r, e.hyper);
        write_json(dir / dir_name(e.id) / t / ("seed-" + std::to_string(seed)) / "report.json", report);
        reports.push_back(report);
        rows.push_back(r.metrics);
      }
    }
  }
  const std::string table = summary_table(experiments, targets, rows);
  write_json(dir / "config.json", to_json(c));
  write_json(dir / "report.json", reports);
  write_metrics(dir / "metrics.csv", rows);
  write_text(dir / "summary.csv", table);
  out << table;
  return kExitOk;
}

std::pair<std::string, std::string> domain_pair(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos || comma == 0 || comma + 1 == text.size() ||
      text.find(',', comma + 1) != std::string::npos) {
    throw ConfigError("--domains expects two ids separated by a comma, got '" + text + "'");
  }
  return {text.substr(0, comma), text.substr(comma + 1)};
}

DomainFeatures features_of(const DatasetBundle& dataset, const std::string& id, const RdcmModel* model) {
  const Domain& d = dataset.domain(id);
  return model ? encoded_domain_features(*model, dataset.manifest, d) : raw_domain_features(dataset.manifest, d);
}

std::optional<RdcmModel> maybe_model(const Flags& f, const Manifest& manifest) {
  if (f.model.empty()) return std::nullopt;
  RdcmModel m = load_model(f.model);
  const ModelConfig expected = ModelConfig::for_manifest(manifest, m.config.d);
  if (expected.text_mode != m.config.text_mode || expected.text_dim != m.config.text_dim ||
      expected.seq_len != m.config.seq_len || expected.vis_dim != m.config.vis_dim) {
    throw ConfigError("model in " + f.model + " was trained on data of a different shape");
  }
  return m;
}

int cmd_mmd(const RunConfig& c, const Flags& f, std::ostream& out) {
  const DatasetBundle dataset = load_data(c);
  const auto [a_id, b_id] = domain_pair(f.domains);
  const auto model = maybe_model(f, dataset.manifest);
  const RdcmModel* m = model ? &*model : nullptr;
  const DomainFeatures a = features_of(dataset, a_id, m);
  const DomainFeatures b = features_of(dataset, b_id, m);
  const double value = marginal_mmd(a, b, c.hyper.kernels, c.hyper.variant);
  out << "statistic,variant,domain_a,domain_b,features,value\n";
  out << "mmd," << to_string(c.hyper.variant) << ',' << a_id << ',' << b_id << ',' << (m ? "encoded" : "raw") << ','
      << std::setprecision(17) << value << '\n';
  return kExitOk;
}

Tensor concat_rows_of(const DomainFeatures& f, const std::vector<std::size_t>& rows) {
  const std::size_t wt = f.text.cols();
  const std::size_t wv = f.vis.cols();
  Tensor out({rows.size(), wt + wv});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto t = f.text.row(rows[r]);
    const auto v = f.vis.row(rows[r]);
    std::copy(t.begin(), t.end(), out.row(r).begin());
    std::copy(v.begin(), v.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(wt));
  }
  return out;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

int cmd_adist(const RunConfig& c, const Flags& f, std::ostream& out) {
  if (f.domains.empty() == f.halves.empty()) throw ConfigError("adist needs exactly one of --domains A,B or --halves A");
  const DatasetBundle dataset = load_data(c);
  const auto model = maybe_model(f, dataset.manifest);
  const RdcmModel* m = model ? &*model : nullptr;
  const std::uint64_t seed = c.seeds.front();
  Tensor a, b;
  std::string a_id, b_id;
  if (!f.halves.empty()) {
    const DomainFeatures all = features_of(dataset, f.halves, m);
    std::vector<std::size_t> idx = all_rows(all.size());
    std::mt19937_64 rng(derive_seed(seed, {0x68616c766573ULL}));
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t half = idx.size() / 2;
    std::vector<std::size_t> first(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(half));
    std::vector<std::size_t> second(idx.begin() + static_cast<std::ptrdiff_t>(half), idx.begin() + static_cast<std::ptrdiff_t>(2 * half));
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    a = concat_rows_of(all, first);
    b = concat_rows_of(all, second);
    a_id = f.halves + "[0]";
    b_id = f.halves + "[1]";
  } else {
    std::tie(a_id, b_id) = domain_pair(f.domains);
    const DomainFeatures fa = features_of(dataset, a_id, m);
    const DomainFeatures fb = features_of(dataset, b_id, m);
    a = concat_rows_of(fa, all_rows(fa.size()));
    b = concat_rows_of(fb, all_rows(fb.size()));
  }
  const double value = a_distance(a, b, seed);
  out << "statistic,variant,domain_a,domain_b,features,value\n";
  out << "a_distance,,"<< a_id << ',' << b_id << ',' << (m ? "encoded" : "raw") << ',' << std::setprecision(17) << value
      << '\n';
  return kExitOk;
}

int cmd_sweep_beta(const RunConfig& c, std::ostream& out) {
  if (c.target.empty()) throw ConfigError("sweep-beta needs the held-out target domain: pass --target");
  const DatasetBundle dataset = load_data(c);
  (void)dataset.domain(c.target);
  const fs::path dir(c.out);
  std::vector<MetricRow> rows;
  std::ostringstream sweep;
  sweep << "beta,target,seed,accuracy,max_intra_loss\n";
  for (double beta : c.betas) {
    HyperParams h = c.hyper;
    h.contrastive.beta = beta;
    const std::string id = c.experiment_id + "@beta=" + format_number(beta);
    for (std::uint64_t seed : c.seeds) {
      const RunResult r = run_target(dataset, c.target, seed, run_options(c, id, h));
      double max_intra = 0.0;
      for (const auto& e : r.report.epochs) max_intra = std::max(max_intra, e.intra);
      write_json(dir / dir_name(id) / ("seed-" + std::to_string(seed)) / "report.json", report_json(r, h));
      rows.push_back(r.metrics);
      sweep << format_number(beta) << ',' << c.target << ',' << seed << ',' << std::setprecision(17)
            << r.metrics.accuracy << ',' << max_intra << '\n';
      out << "beta=" << format_number(beta) << " seed=" << seed << " accuracy=" << std::fixed << std::setprecision(4)
          << r.metrics.accuracy << '\n';
      out.unsetf(std::ios::floatfield);
    }
  }
  write_json(dir / "config.json", to_json(c));
  write_metrics(dir / "metrics.csv", rows);
  write_text(dir / "sweep.csv", sweep.str());
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-modal domain alignment for fake news detection"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON run configuration");
  app.add_option("--seed", f.seeds, "seed or comma-separated seed list");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--mode", f.mode, "dg | da");
  app.add_option("--variant", f.variant, "joint | fusion | text | vision");
  app.add_option("--contrastive", f.contrastive, "ours | regular | textcon | threscon");

  auto* synth = app.add_subcommand("synth", "generate a synthetic multi-domain dataset");
  auto* train = app.add_subcommand("train", "train on all domains but --target and evaluate on it");
  auto* loo = app.add_subcommand("loo", "leave-one-domain-out over every domain");
  auto* mmd = app.add_subcommand("mmd", "MMD between two domains");
  auto* adist = app.add_subcommand("adist", "proxy A-distance between two domains or two halves of one");
  auto* sweep = app.add_subcommand("sweep-beta", "train once per similarity threshold and seed");
  for (auto* sub : {train, loo, mmd, adist, sweep}) sub->add_option("--data", f.data, "dataset directory or manifest.json");
  for (auto* sub : {train, sweep}) sub->add_option("--target", f.target, "held-out target domain id");
  for (auto* sub : {train, loo}) sub->add_flag("--a-distance", f.a_distance, "also report the proxy A-distance");
  loo->add_flag("--without-inter", f.without_inter, "add the row without the inter-domain term");
  loo->add_flag("--without-cross", f.without_cross, "add the row without the cross-modal term");
  loo->add_flag("--without-both", f.without_both, "add the row without both alignment terms");
  mmd->add_option("--domains", f.domains, "two domain ids, A,B")->required();
  adist->add_option("--domains", f.domains, "two domain ids, A,B");
  adist->add_option("--halves", f.halves, "one domain id, split in two seeded halves");
  for (auto* sub : {mmd, adist}) sub->add_option("--model", f.model, "run directory holding params.bin; encodes features");
  sweep->add_option("--betas", f.betas, "comma-separated thresholds in [0, 1]");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const RunConfig c = effective_config(f);
    if (synth->parsed()) return cmd_synth(c, f, out);
    if (train->parsed()) return cmd_train(c, out);
    if (loo->parsed()) return cmd_loo(c, f, out);
    if (mmd->parsed()) return cmd_mmd(c, f, out);
    if (adist->parsed()) return cmd_adist(c, f, out);
    if (sweep->parsed()) return cmd_sweep_beta(c, out);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const LoadError& e) {
    err << "load error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitConfig;
}

}  // namespace rdcm
