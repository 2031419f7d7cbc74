#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "anchorprop/synth.hpp"
#include "anchorprop/tensor_io.hpp"
#include "cli.hpp"

namespace fs = std::filesystem;
using namespace anchorprop;

namespace {

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "anchorprop_cli" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Small suite written once for the whole file.
const fs::path& suite_dir() {
  static const fs::path dir = [] {
    const fs::path d = fresh_dir("suite");
    const CliRun r = run({"synth", "--count", "3", "--seed", "7", "--output", d.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }();
  return dir;
}

std::map<std::string, std::string> dir_contents(const fs::path& d) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::directory_iterator(d)) m[e.path().filename().string()] = slurp(e.path());
  return m;
}

}  // namespace

TEST(Cli, SynthWritesSuite) {
  const fs::path& d = suite_dir();
  EXPECT_TRUE(fs::exists(d / "scene_000.npz"));
  EXPECT_TRUE(fs::exists(d / "scene_002.npz"));
  EXPECT_TRUE(fs::exists(d / "annotations.json"));
  EXPECT_EQ(run({"validate", d.string()}).code, 0);
}

TEST(Cli, GroundOneConceptWritesThreeFiles) {
  const fs::path out = fresh_dir("ground_one");
  const AttentionBundle b = load_bundle(suite_dir() / "scene_000.npz");
  const CliRun r = run({"ground", (suite_dir() / "scene_000.npz").string(), "--concept", b.concepts[0], "--output",
                     out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto files = dir_contents(out);
  EXPECT_EQ(files.size(), 3u);
  const std::string base = "scene_000__" + b.concepts[0];
  ASSERT_TRUE(files.count(base + ".json"));
  const auto j = nlohmann::json::parse(files.at(base + ".json"));
  EXPECT_EQ(j["report_version"], 1);
  EXPECT_EQ(j["concept"], b.concepts[0]);
  EXPECT_EQ(j["steps"], 160);
  EXPECT_TRUE(j["anchor"].contains("token_index"));
  EXPECT_EQ(j["anchor"]["row"].get<int>() * 32 + j["anchor"]["col"].get<int>(), j["anchor"]["token_index"].get<int>());
  EXPECT_NEAR(j["gate_density"].get<double>(), 0.02, 0.005);
  EXPECT_EQ(files.at(base + ".heat.pgm").substr(0, 13), "P5\n32 32\n255\n");
}

TEST(Cli, UnknownConcept) {
  const fs::path out = fresh_dir("ground_unknown");
  const CliRun r = run({"ground", (suite_dir() / "scene_000.npz").string(), "--concept", "unicorn", "--output", out.string()});
  EXPECT_EQ(r.code, 1);
  const auto j = nlohmann::json::parse(r.err);
  EXPECT_NE(j["error"]["message"].get<std::string>().find("concept not in bundle"), std::string::npos);
  EXPECT_EQ(j["error"]["kind"], "validation");
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run({"validate", "/nonexistent/file.npz"}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"ground", (suite_dir() / "scene_000.npz").string(), "--steps", "-3"}).code, 1);
  const fs::path d = fresh_dir("bad_bundle");
  std::ofstream(d / "junk.npz") << "not a zip";
  EXPECT_EQ(run({"validate", (d / "junk.npz").string()}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, ThreadCountByteIdentical) {
  const fs::path a = fresh_dir("threads_1");
  const fs::path b = fresh_dir("threads_4");
  ASSERT_EQ(run({"ground", suite_dir().string(), "--threads", "1", "--output", a.string()}).code, 0);
  ASSERT_EQ(run({"ground", suite_dir().string(), "--threads", "4", "--output", b.string()}).code, 0);
  const auto x = dir_contents(a);
  EXPECT_GE(x.size(), 18u);
  EXPECT_EQ(x, dir_contents(b));
}

TEST(Cli, EvalOnSuite) {
  const fs::path res = fresh_dir("eval_results");
  ASSERT_EQ(run({"ground", suite_dir().string(), "--output", res.string()}).code, 0);
  const fs::path report = res.parent_path() / "eval_report.json";
  const CliRun r = run({"eval", res.string(), suite_dir().string(), "--output", report.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("miou_fg"), std::string::npos);
  const auto j = nlohmann::json::parse(slurp(report));
  EXPECT_EQ(j["report_version"], 1);
  EXPECT_GE(j["aggregate"]["miou_fg"].get<double>(), 0.9);
  EXPECT_LE(j["aggregate"]["nar"].get<double>(), 0.05);
  EXPECT_EQ(j["aggregate"]["anchor_hit_rate"].get<double>(), 1.0);
  EXPECT_EQ(j["pairs"].size(), j["aggregate"]["pair_count"].get<std::size_t>());
}

TEST(Cli, EvalListsUnmatchedIds) {
  const fs::path res = fresh_dir("eval_unmatched");
  ASSERT_EQ(run({"ground", (suite_dir() / "scene_001.npz").string(), "--output", res.string()}).code, 0);
  const fs::path renamed = fresh_dir("eval_unmatched_ann");
  for (const auto& e : fs::directory_iterator(res)) {
    if (e.path().extension() != ".json") continue;
    auto j = nlohmann::json::parse(slurp(e.path()));
    j["image_id"] = "ghost_scene";
    std::ofstream(e.path()) << j.dump();
  }
  const CliRun r = run({"eval", res.string(), suite_dir().string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("ghost_scene"), std::string::npos);
}

TEST(Cli, StepSweepCsv) {
  const CliRun r = run({"sweep", suite_dir().string(), "--steps", "10,40,160,640"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "config,miou_fg,map_fg,nar,acc_fg");
  EXPECT_EQ(lines[1].substr(0, 9), "steps=10,");
}

TEST(Cli, LayerSweepCsv) {
  const CliRun r = run({"sweep", suite_dir().string(), "--layers", "9;18;9+18"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("L9+L18"), std::string::npos);
  EXPECT_EQ(run({"sweep", suite_dir().string(), "--layers", "9;12"}).code, 1);
}

TEST(Cli, LocalityCsv) {
  const CliRun r = run({"stats", (suite_dir() / "scene_000.npz").string(), "--locality"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "bin_min,bin_max,mean_weight");
  double prev_max = -1.0;
  int rows = 0;
  for (std::string l; std::getline(in, l); ++rows) {
    double lo = 0, hi = 0;
    char c = 0;
    std::istringstream ls(l);
    ls >> lo >> c >> hi;
    EXPECT_GT(lo, prev_max);
    EXPECT_GE(hi, lo);
    prev_max = hi;
  }
  EXPECT_EQ(rows, 7);
}

TEST(Cli, AffinityJson) {
  const CliRun r = run({"stats", (suite_dir() / "scene_000.npz").string(), "--affinity", "--annotations",
                     suite_dir().string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_GT(j["gated"]["same_object"].get<double>(), 10.0 * j["gated"]["confusable_diff"].get<double>());
  EXPECT_EQ(j["w_attn"]["kind"], "w_attn");
}

TEST(Cli, ConfigFile) {
  const fs::path d = fresh_dir("config");
  std::ofstream(d / "cfg.json") << R"({"graph_layer_set": "sd3-default", "anchor_layer_set": "all", "n_steps": 12,
                                      "gate_quantile": 0.95, "threads": 2})";
  const fs::path out = d / "out";
  const CliRun r = run({"--config", (d / "cfg.json").string(), "ground", (suite_dir() / "scene_000.npz").string(),
                     "--output", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& e : fs::directory_iterator(out)) {
    if (e.path().extension() != ".json") continue;
    const auto j = nlohmann::json::parse(slurp(e.path()));
    EXPECT_EQ(j["steps"], 12);
    EXPECT_EQ(j["config"]["gate_quantile"], 0.95);
  }
  std::ofstream(d / "bad.json") << R"({"graph_layer_set": "sd9"})";
  EXPECT_EQ(run({"--config", (d / "bad.json").string(), "ground", (suite_dir() / "scene_000.npz").string()}).code, 1);
  EXPECT_EQ(run({"--config", (d / "absent.json").string(), "ground", (suite_dir() / "scene_000.npz").string()}).code, 2);
}
