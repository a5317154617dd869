#include "support.hpp"

#include "rdcm/cli.hpp"
#include "rdcm/evaluation.hpp"
#include "rdcm/experiment.hpp"
#include "rdcm/mmd.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rdcm;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) {
    if (!l.empty()) out.push_back(l);
  }
  return out;
}

// Small, fast configuration shared by every test in this file.
json small_config() {
  return {{"d", 8},
          {"hyper", {{"epochs", 2}, {"batch_size", 8}, {"beta", 0.8}, {"lambda_inter", 1.0}}},
          {"synth",
           {{"domains", 4}, {"samples_per_domain", 40}, {"latent_dim", 3}, {"text_dim", 6}, {"vis_dim", 6},
            {"inst_dim", 4}}}};
}

struct Workspace {
  fs::path root = fs::temp_directory_path() / ("rdcm_cli_" + std::to_string(std::random_device{}()));
  fs::path config = root / "config.json";
  fs::path data = root / "data";

  explicit Workspace(const json& cfg = small_config()) {
    fs::create_directories(root);
    std::ofstream(config) << cfg.dump(2);
    const CliResult r = run({"synth", "--config", config.string(), "--out", data.string()});
    REQUIRE(r.code == kExitOk);
  }
  ~Workspace() { fs::remove_all(root); }

  std::string out(const std::string& name) const { return (root / name).string(); }
};

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run({"--help"}).code == kExitOk);
  CHECK(run({"train", "--help"}).code == kExitOk);
  CHECK(run({}).code == kExitConfig);
  CHECK(run({"frobnicate"}).code == kExitConfig);
  CHECK(run({"train", "--no-such-flag"}).code == kExitConfig);
  CHECK(run({"--config", "/nonexistent/config.json", "synth"}).code == kExitConfig);
}

TEST_CASE("synth subcommand") {
  Workspace ws;
  const DatasetBundle b = load_dataset(ws.data / "manifest.json");
  CHECK(b.sources.size() == 4);
  CHECK(fs::exists(ws.data / "config.json"));

  const CliResult again = run({"synth", "--config", ws.config.string(), "--out", ws.out("again")});
  CHECK(again.code == kExitOk);
  CHECK(again.out.find("d03: 40 posts") != std::string::npos);
  for (const char* f : {"manifest.json", "d00.jsonl", "d03.jsonl"}) CHECK(slurp(ws.data / f) == slurp(ws.root / "again" / f));

  CHECK(run({"synth", "--config", ws.config.string(), "--seed", "99", "--out", ws.out("other")}).code == kExitOk);
  CHECK(slurp(ws.data / "d00.jsonl") != slurp(ws.root / "other" / "d00.jsonl"));

  json bad = small_config();
  bad["synth"]["vis_dim"] = 0;
  std::ofstream(ws.root / "bad.json") << bad.dump();
  const CliResult r = run({"synth", "--config", (ws.root / "bad.json").string(), "--out", ws.out("bad")});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("vis_dim") != std::string::npos);

  json typo = small_config();
  typo["hyper"]["lamda_inter"] = 1.0;
  std::ofstream(ws.root / "typo.json") << typo.dump();
  const CliResult t = run({"synth", "--config", (ws.root / "typo.json").string(), "--out", ws.out("typo")});
  CHECK(t.code == kExitConfig);
  CHECK(t.err.find("lamda_inter") != std::string::npos);
}

TEST_CASE("train subcommand") {
  Workspace ws;
  const std::string cfg = ws.config.string();
  const std::string data = ws.data.string();

  SUBCASE("DG run writes one metrics row per seed and a full run directory") {
    const CliResult r = run({"train", "--config", cfg, "--data", data, "--target", "d01", "--seed", "1,2", "--out",
                             ws.out("dg")});
    REQUIRE(r.code == kExitOk);
    std::ifstream in(ws.root / "dg" / "metrics.csv");
    const auto rows = read_metrics_csv(in);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].target == "d01");
    CHECK(rows[1].seed == 2);
    for (const char* f : {"config.json", "params.bin", "params.json", "report.json", "metrics.csv"}) {
      CHECK(fs::exists(ws.root / "dg" / "seed-1" / f));
    }
    const json report = json::parse(slurp(ws.root / "dg" / "seed-1" / "report.json"));
    CHECK(report["vanilla_equivalent"] == false);
    CHECK(report["epochs"].size() == 2);
    CHECK(report["mode"] == "dg");
    const json effective = json::parse(slurp(ws.root / "dg" / "config.json"));
    CHECK(effective["target"] == "d01");
    CHECK(effective["seeds"] == json::array({1, 2}));
  }

  SUBCASE("zero weights are flagged as vanilla") {
    json v = small_config();
    v["hyper"]["lambda_inter"] = 0.0;
    v["hyper"]["lambda_intra"] = 0.0;
    std::ofstream(ws.root / "vanilla.json") << v.dump();
    const CliResult r = run({"train", "--config", (ws.root / "vanilla.json").string(), "--data", data, "--target",
                             "d00", "--out", ws.out("vanilla")});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.find("(vanilla)") != std::string::npos);
    CHECK(json::parse(slurp(ws.root / "vanilla" / "seed-1" / "report.json"))["vanilla_equivalent"] == true);
  }

  SUBCASE("DA without target data") {
    const CliResult r = run({"--mode", "da", "train", "--config", cfg, "--data", data, "--out", ws.out("da")});
    CHECK(r.code == kExitConfig);
    CHECK(r.err.find("--target") != std::string::npos);
  }

  SUBCASE("DA with target data and A-distance") {
    const CliResult r = run({"--mode", "da", "train", "--config", cfg, "--data", data, "--target", "d02",
                             "--a-distance", "--out", ws.out("da")});
    REQUIRE(r.code == kExitOk);
    const json report = json::parse(slurp(ws.root / "da" / "seed-1" / "report.json"));
    CHECK(report["mode"] == "da");
    CHECK(report["a_distance"].get<double>() >= 1.0);
    CHECK(report["a_distance"].get<double>() <= 2.0);
  }

  SUBCASE("configuration errors") {
    CHECK(run({"train", "--config", cfg, "--data", data, "--target", "nope", "--out", ws.out("x")}).code == kExitConfig);
    CHECK(run({"train", "--config", cfg, "--data", ws.out("missing"), "--target", "d00", "--out", ws.out("x")}).code ==
          kExitConfig);
    CHECK(run({"--variant", "sideways", "train", "--config", cfg, "--data", data, "--target", "d00"}).code == kExitConfig);
    CHECK(run({"--seed", "one", "train", "--config", cfg, "--data", data, "--target", "d00"}).code == kExitConfig);
  }

  SUBCASE("diverging training exits with the numerical code") {
    json hot = small_config();
    hot["hyper"]["learning_rate"] = 1e300;
    std::ofstream(ws.root / "hot.json") << hot.dump();
    const CliResult r = run({"train", "--config", (ws.root / "hot.json").string(), "--data", data, "--target", "d00",
                             "--out", ws.out("hot")});
    CHECK(r.code == kExitNumerical);
    CHECK(r.err.find("non-finite") != std::string::npos);
  }
}

TEST_CASE("loo subcommand") {
  Workspace ws;
  const CliResult r = run({"loo", "--config", ws.config.string(), "--data", ws.data.string(), "--seed", "1,2",
                           "--without-inter", "--without-cross", "--without-both", "--out", ws.out("loo")});
  REQUIRE(r.code == kExitOk);
  const auto summary = lines(slurp(ws.root / "loo" / "summary.csv"));
  REQUIRE(summary.size() == 5);
  CHECK(summary[0] == "method,d00,d01,d02,d03,Avg");
  CHECK(summary[1].rfind("rdcm,", 0) == 0);
  CHECK(summary[2].rfind("w/o-inter,", 0) == 0);
  CHECK(summary[3].rfind("w/o-cross,", 0) == 0);
  CHECK(summary[4].rfind("w/o-both,", 0) == 0);
  std::ifstream in(ws.root / "loo" / "metrics.csv");
  CHECK(read_metrics_csv(in).size() == 4 * 4 * 2);
  CHECK(fs::exists(ws.root / "loo" / "w_o-both" / "d03" / "seed-2" / "report.json"));

  const CliResult single = run({"loo", "--config", ws.config.string(), "--data", ws.data.string(), "--out",
                                ws.out("single")});
  REQUIRE(single.code == kExitOk);
  const auto row = lines(slurp(ws.root / "single" / "summary.csv"))[1];
  std::size_t cells = 0;
  for (std::size_t pos = row.find("±"); pos != std::string::npos; pos = row.find("±", pos + 1)) {
    CHECK(row.substr(pos + std::string("±").size(), 4) == "0.00");
    ++cells;
  }
  CHECK(cells == 5);

  json two = small_config();
  two["synth"]["domains"] = 2;
  Workspace small(two);
  CHECK(run({"loo", "--config", small.config.string(), "--data", small.data.string(), "--out", small.out("x")}).code ==
        kExitConfig);
}

TEST_CASE("mmd and adist subcommands") {
  json big = small_config();
  big["synth"]["samples_per_domain"] = 200;
  Workspace ws(big);
  const std::string data = ws.data.string();
  auto value = [](const std::string& out) { return std::stod(out.substr(out.rfind(',') + 1)); };

  const CliResult same = run({"mmd", "--data", data, "--domains", "d01,d01"});
  REQUIRE(same.code == kExitOk);
  CHECK(lines(same.out)[0] == "statistic,variant,domain_a,domain_b,features,value");
  CHECK(std::abs(value(same.out)) <= 1e-12);

  const DatasetBundle b = load_dataset(ws.data / "manifest.json");
  const double lib = marginal_mmd(raw_domain_features(b.manifest, b.domain("d00")),
                                  raw_domain_features(b.manifest, b.domain("d02")), KernelSpecs{}, MmdVariant::Text);
  const CliResult text = run({"--variant", "text", "mmd", "--data", data, "--domains", "d00,d02"});
  REQUIRE(text.code == kExitOk);
  CHECK(value(text.out) == doctest::Approx(lib).epsilon(1e-15));
  CHECK(text.out.find("mmd,text,d00,d02,raw,") != std::string::npos);

  CHECK(run({"--variant", "bogus", "mmd", "--data", data, "--domains", "d00,d01"}).code == kExitConfig);
  CHECK(run({"mmd", "--data", data, "--domains", "d00"}).code == kExitConfig);
  CHECK(run({"mmd", "--data", data}).code == kExitConfig);

  const CliResult halves = run({"adist", "--data", data, "--halves", "d03"});
  REQUIRE(halves.code == kExitOk);
  CHECK(value(halves.out) == doctest::Approx(1.0).epsilon(0.15));
  CHECK(run({"adist", "--data", data}).code == kExitConfig);
  CHECK(run({"adist", "--data", data, "--halves", "d03", "--domains", "d00,d01"}).code == kExitConfig);

  SUBCASE("encoded features from a trained run") {
    REQUIRE(run({"train", "--config", ws.config.string(), "--data", data, "--target", "d00", "--out", ws.out("m")}).code ==
            kExitOk);
    const std::string model = (ws.root / "m" / "seed-1").string();
    const CliResult enc = run({"mmd", "--data", data, "--domains", "d00,d01", "--model", model});
    REQUIRE(enc.code == kExitOk);
    CHECK(enc.out.find(",encoded,") != std::string::npos);
    CHECK(run({"adist", "--data", data, "--domains", "d00,d01", "--model", model}).code == kExitOk);
  }
}

TEST_CASE("sweep-beta subcommand") {
  Workspace ws;
  const std::vector<std::string> args{"sweep-beta", "--config", ws.config.string(), "--data", ws.data.string(),
                                      "--target", "d03", "--betas", "0,0.5,0.9", "--seed", "1,2", "--out"};
  auto with_out = [&](const std::string& name) {
    auto a = args;
    a.push_back(ws.out(name));
    return a;
  };
  REQUIRE(run(with_out("s1")).code == kExitOk);
  const auto rows = lines(slurp(ws.root / "s1" / "sweep.csv"));
  REQUIRE(rows.size() == 7);
  CHECK(rows[0] == "beta,target,seed,accuracy,max_intra_loss");
  for (std::size_t i = 1; i <= 2; ++i) {
    CHECK(rows[i].rfind("0,d03,", 0) == 0);
    CHECK(rows[i].substr(rows[i].rfind(',') + 1) == "0");
  }
  CHECK(rows[6].rfind("0.9,d03,2,", 0) == 0);

  REQUIRE(run(with_out("s2")).code == kExitOk);
  CHECK(slurp(ws.root / "s1" / "sweep.csv") == slurp(ws.root / "s2" / "sweep.csv"));
  CHECK(slurp(ws.root / "s1" / "metrics.csv") == slurp(ws.root / "s2" / "metrics.csv"));

  CHECK(run({"sweep-beta", "--config", ws.config.string(), "--data", ws.data.string(), "--target", "d03", "--betas",
             "0.5,1.5"})
            .code == kExitConfig);
  CHECK(run({"sweep-beta", "--config", ws.config.string(), "--data", ws.data.string(), "--betas", "0.5"}).code ==
        kExitConfig);
}
