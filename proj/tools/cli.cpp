#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "anchorprop/analysis.hpp"
#include "anchorprop/error.hpp"
#include "anchorprop/metrics.hpp"
#include "anchorprop/parallel.hpp"
#include "anchorprop/pgm.hpp"
#include "anchorprop/pipeline.hpp"
#include "anchorprop/synth.hpp"
#include "anchorprop/tensor_io.hpp"

namespace anchorprop::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kReportVersion = 1;

struct GlobalOptions {
  std::string config_path;
  std::optional<int> threads;
  std::uint64_t seed = 7;
  std::string output;
};

// ---- config ------------------------------------------------------------------

std::vector<int> parse_int_list(const std::string& text, char sep = ',') {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (item.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw ValidationError("not an integer: '" + item + "'");
    }
    if (used != item.size()) throw ValidationError("not an integer: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("empty list '" + text + "'");
  return out;
}

/// A preset name or an explicit comma-separated list.
std::vector<int> parse_layer_set(const std::string& text) {
  if (!text.empty() && std::isalpha(static_cast<unsigned char>(text.front()))) return graph_layer_preset(text);
  return parse_int_list(text);
}

PipelineConfig load_config(const GlobalOptions& g) {
  PipelineConfig c;
  if (!g.config_path.empty()) {
    std::ifstream in(g.config_path);
    if (!in) throw IoError("cannot open config: " + g.config_path);
    json j;
    try {
      j = json::parse(in);
      if (j.contains("anchor_layer_set")) {
        const json& a = j.at("anchor_layer_set");
        if (a.is_string()) {
          if (a.get<std::string>() != "all") throw ValidationError("anchor_layer_set must be \"all\" or a list");
        } else {
          c.anchor_layers = a.get<std::vector<int>>();
        }
      }
      if (j.contains("graph_layer_set")) {
        const json& l = j.at("graph_layer_set");
        c.graph_layers = l.is_string() ? graph_layer_preset(l.get<std::string>()) : l.get<std::vector<int>>();
      }
      if (j.contains("gate_quantile")) c.gate_quantile = j.at("gate_quantile").get<double>();
      if (j.contains("n_steps")) c.n_steps = j.at("n_steps").get<int>();
      if (j.contains("threads")) c.threads = j.at("threads").get<int>();
      if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    } catch (const json::exception& e) {
      throw ValidationError("config " + g.config_path + ": " + e.what());
    }
  }
  if (g.threads) c.threads = *g.threads;
  if (!g.output.empty()) c.output_dir = g.output;
  if (c.threads < 1) throw ValidationError("threads must be at least 1");
  if (!(c.gate_quantile > 0.0 && c.gate_quantile < 1.0)) throw ValidationError("gate_quantile must lie in (0, 1)");
  if (c.n_steps < 0) throw ValidationError("n_steps must be non-negative");
  return c;
}

// ---- files -------------------------------------------------------------------

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory: " + dir.string());
}

/// Bundle files named on the command line; directories expand to their *.npz entries.
std::vector<fs::path> expand_bundles(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& s : inputs) {
    const fs::path p(s);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ".npz") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      if (!fs::exists(p)) throw IoError("bundle not found: " + p.string());
      out.push_back(p);
    }
  }
  if (out.empty()) throw ValidationError("no bundles given");
  return out;
}

/// Scenes stored as `<image_id>.npz` next to `annotations.json`.
std::vector<Scene> load_scenes(const fs::path& dir) {
  std::vector<SceneAnnotation> annotations = load_annotations(dir);
  std::vector<Scene> scenes;
  for (auto& a : annotations) {
    AttentionBundle b = load_bundle(dir / (a.image_id + ".npz"));
    scenes.push_back({a.image_id, std::move(b), std::move(a)});
  }
  if (scenes.empty()) throw ValidationError("no annotated scenes in " + dir.string());
  return scenes;
}

json report_json(const MetricsReport& r) {
  json agg = {{"acc", r.acc},
              {"miou", r.miou},
              {"map", r.map},
              {"acc_fg", r.acc_fg},
              {"miou_fg", r.miou_fg},
              {"map_fg", r.map_fg},
              {"nar", r.nar},
              {"anchor_hit_rate", r.anchor_hit_rate},
              {"coverage", r.coverage},
              {"pair_count", r.pair_count},
              {"flagged_ap", r.flagged_ap},
              {"flagged_nar", r.flagged_nar},
              {"flagged_empty_iou", r.flagged_empty_iou},
              {"degenerate_heatmaps", r.degenerate_heatmaps}};
  json pairs = json::array();
  for (const PairMetrics& p : r.pairs) {
    pairs.push_back({{"image_id", p.image_id},
                     {"concept", p.concept_name},
                     {"acc", p.acc},
                     {"iou", p.iou},
                     {"ap", p.ap},
                     {"acc_fg", p.acc_fg},
                     {"iou_fg", p.iou_fg},
                     {"ap_fg", p.ap_fg},
                     {"nar", p.nar},
                     {"coverage", p.coverage},
                     {"anchor_hit", p.anchor_hit},
                     {"anchor_token", p.anchor_token},
                     {"flags",
                      {{"ap_undefined", p.ap_undefined},
                       {"ap_fg_undefined", p.ap_fg_undefined},
                       {"nar_undefined", p.nar_undefined},
                       {"iou_both_empty", p.iou_both_empty},
                       {"iou_fg_both_empty", p.iou_fg_both_empty},
                       {"degenerate_heat", p.degenerate_heat}}}});
  }
  return {{"report_version", kReportVersion}, {"aggregate", agg}, {"pairs", pairs}};
}

void print_aggregate(const MetricsReport& r, std::ostream& out) {
  out << std::fixed << std::setprecision(4);
  out << "pairs      " << r.pair_count << '\n'
      << "acc        " << r.acc << '\n'
      << "miou       " << r.miou << '\n'
      << "map        " << r.map << '\n'
      << "acc_fg     " << r.acc_fg << '\n'
      << "miou_fg    " << r.miou_fg << '\n'
      << "map_fg     " << r.map_fg << '\n'
      << "nar        " << r.nar << '\n'
      << "anchor_hit " << r.anchor_hit_rate << '\n';
  out.unsetf(std::ios::floatfield);
}

// ---- ground ------------------------------------------------------------------

struct GroundArgs {
  std::vector<std::string> bundles;
  std::vector<std::string> concepts;
  std::string graph_layers;
  std::string anchor_layers;
  std::optional<double> quantile;
  std::optional<int> steps;
  bool dump_graph = false;
};

std::string safe_name(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return out;
}

int cmd_ground(const GlobalOptions& g, const GroundArgs& a, std::ostream& out, std::ostream& err) {
  PipelineConfig cfg = load_config(g);
  if (!a.graph_layers.empty()) cfg.graph_layers = parse_layer_set(a.graph_layers);
  if (!a.anchor_layers.empty() && a.anchor_layers != "all") cfg.anchor_layers = parse_int_list(a.anchor_layers);
  if (a.quantile) cfg.gate_quantile = *a.quantile;
  if (a.steps) cfg.n_steps = *a.steps;
  if (cfg.n_steps < 0) throw ValidationError("n_steps must be non-negative");
  const std::vector<fs::path> paths = expand_bundles(a.bundles);
  ensure_dir(cfg.output_dir);

  // Load and check everything first so a bad concept fails before any output is written.
  std::vector<AttentionBundle> bundles;
  std::vector<std::vector<int>> queries;
  for (const fs::path& p : paths) {
    AttentionBundle b = load_bundle(p);
    std::vector<int> ks;
    if (a.concepts.empty()) {
      for (int k = 0; k < b.k(); ++k) ks.push_back(k);
    } else {
      for (const auto& c : a.concepts) {
        const int k = b.concept_index(c);
        if (k < 0) throw ValidationError("concept not in bundle: '" + c + "' (" + p.string() + ")");
        ks.push_back(k);
      }
    }
    bundles.push_back(std::move(b));
    queries.push_back(std::move(ks));
  }

  const int outer = std::min<int>(cfg.threads, static_cast<int>(bundles.size()));
  PipelineConfig inner = cfg;
  inner.threads = outer > 1 ? 1 : cfg.threads;
  std::vector<std::string> logs(bundles.size());
  parallel_for(bundles.size(), outer, [&](std::size_t i) {
    const AttentionBundle& b = bundles[i];
    const std::string stem = paths[i].stem().string();
    const GroundingSession session(b, inner);
    if (a.dump_graph) write_edge_list(session.graph(), cfg.output_dir / (safe_name(stem) + ".edges.txt"));
    for (const int k : queries[i]) {
      const GroundingResult r = session.ground(k);
      const std::string base = safe_name(stem) + "__" + safe_name(b.concepts[static_cast<std::size_t>(k)]);
      const std::string heat_file = base + ".heat.pgm";
      const std::string mask_file = base + ".mask.pgm";
      write_pgm(cfg.output_dir / heat_file, heatmap_to_gray(r.heat));
      write_pgm(cfg.output_dir / mask_file, mask_to_gray(r.mask));
      const json anchor_layers = cfg.anchor_layers ? json(*cfg.anchor_layers) : json("all");
      const json j = {
          {"report_version", kReportVersion},
          {"image_id", stem},
          {"concept", b.concepts[static_cast<std::size_t>(k)]},
          {"concept_index", k},
          {"grid", {{"h", b.grid.h}, {"w", b.grid.w}}},
          {"anchor",
           {{"concept", b.concepts[static_cast<std::size_t>(k)]},
            {"token_index", r.anchor.token_index},
            {"row", b.grid.row_of(r.anchor.token_index)},
            {"col", b.grid.col_of(r.anchor.token_index)},
            {"value", r.anchor.response_value},
            {"tie_count", r.anchor.tie_count}}},
          {"steps", r.heat.steps_used},
          {"threshold", r.mask.threshold_used},
          {"mask_tokens", r.mask.count()},
          {"degenerate_flags",
           {{"heatmap", r.heat.degenerate}, {"mask", r.mask.degenerate}, {"anchor_tie", r.anchor.tie_count > 1}}},
          {"tau_w", session.graph().tau_w},
          {"gate_density", session.graph().gate_density},
          {"zero_rows", session.graph().zero_row_count()},
          {"config",
           {{"graph_layer_set", cfg.graph_layers},
            {"anchor_layer_set", anchor_layers},
            {"gate_quantile", cfg.gate_quantile}}},
          {"files", {{"heat", heat_file}, {"mask", mask_file}}}};
      write_text(cfg.output_dir / (base + ".json"), j.dump(2) + "\n");
      logs[i] += "grounded " + stem + " " + b.concepts[static_cast<std::size_t>(k)] + " anchor=" +
                 std::to_string(r.anchor.token_index) + "\n";
    }
  });
  for (const auto& l : logs) err << l;
  out << "wrote " << cfg.output_dir.string() << '\n';
  return 0;
}

// ---- eval --------------------------------------------------------------------

/// Result records written by `ground`: heat and mask come back from the PGM files.
std::vector<PairInput> load_results(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("results directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<PairInput> out;
  for (const fs::path& f : files) {
    json j;
    try {
      j = json::parse(read_text(f));
    } catch (const json::exception& e) {
      throw ValidationError(f.string() + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("anchor") || !j.contains("files")) continue;
    try {
      PairInput p;
      p.image_id = j.at("image_id").get<std::string>();
      p.concept_name = j.at("concept").get<std::string>();
      const GridShape grid{j.at("grid").at("h").get<int>(), j.at("grid").at("w").get<int>()};
      const GrayImage heat = read_pgm(dir / j.at("files").at("heat").get<std::string>());
      const GrayImage mask = read_pgm(dir / j.at("files").at("mask").get<std::string>());
      if (heat.h != grid.h || heat.w != grid.w || mask.h != grid.h || mask.w != grid.w) {
        throw ValidationError(f.string() + ": PGM size does not match grid");
      }
      p.heat.grid = grid;
      p.heat.steps_used = j.at("steps").get<int>();
      p.heat.degenerate = j.at("degenerate_flags").at("heatmap").get<bool>();
      p.heat.values.resize(heat.pixels.size());
      for (std::size_t i = 0; i < heat.pixels.size(); ++i) p.heat.values[i] = heat.pixels[i] / 255.0;
      p.mask.grid = grid;
      p.mask.threshold_used = j.at("threshold").get<double>();
      p.mask.degenerate = j.at("degenerate_flags").at("mask").get<bool>();
      p.mask.bits.resize(mask.pixels.size());
      for (std::size_t i = 0; i < mask.pixels.size(); ++i) p.mask.bits[i] = mask.pixels[i] != 0;
      p.anchor.token_index = j.at("anchor").at("token_index").get<int>();
      p.anchor.response_value = j.at("anchor").at("value").get<double>();
      p.anchor.tie_count = j.at("anchor").at("tie_count").get<int>();
      p.anchor.concept_index = j.at("concept_index").get<int>();
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ValidationError(f.string() + ": " + e.what());
    }
  }
  if (out.empty()) throw ValidationError("no result records in " + dir.string());
  return out;
}

int cmd_eval(const GlobalOptions& g, const std::string& results, const std::string& annotations, std::ostream& out) {
  const PipelineConfig cfg = load_config(g);
  const std::vector<PairInput> inputs = load_results(results);
  const std::vector<SceneAnnotation> ann = load_annotations(annotations);
  const MetricsReport r = evaluate_dataset(inputs, ann, cfg.threads);
  const fs::path report = g.output.empty() ? fs::path(results) / "metrics.json" : fs::path(g.output);
  if (report.has_parent_path()) ensure_dir(report.parent_path());
  write_text(report, report_json(r).dump(2) + "\n");
  print_aggregate(r, out);
  return 0;
}

// ---- stats -------------------------------------------------------------------

struct StatsArgs {
  std::string bundle;
  bool locality = false;
  bool affinity = false;
  std::string annotations;
  std::string metric = "chebyshev";
  std::string layers;
};

void emit(const GlobalOptions& g, const std::string& text, std::ostream& out) {
  if (g.output.empty()) {
    out << text;
  } else {
    const fs::path p(g.output);
    if (p.has_parent_path()) ensure_dir(p.parent_path());
    write_text(p, text);
  }
}

json stats_json(const AffinityStats& s) {
  auto value = [](bool defined, double v) { return defined ? json(v) : json(nullptr); };
  return {{"kind", std::string(to_string(s.kind))},
          {"same_object", value(s.same_defined(), s.same_object)},
          {"confusable_diff", value(s.confusable_defined(), s.confusable_diff)},
          {"fg_bg", value(s.fg_bg_defined(), s.fg_bg)},
          {"pairs", {{"same_object", s.same_pairs}, {"confusable_diff", s.confusable_pairs}, {"fg_bg", s.fg_bg_pairs}}}};
}

int cmd_stats(const GlobalOptions& g, const StatsArgs& a, std::ostream& out) {
  if (a.locality == a.affinity) throw ValidationError("stats needs exactly one of --locality or --affinity");
  PipelineConfig cfg = load_config(g);
  const AttentionBundle b = load_bundle(a.bundle);
  if (a.locality) {
    DistanceMetric metric;
    if (a.metric == "chebyshev") metric = DistanceMetric::kChebyshev;
    else if (a.metric == "euclidean") metric = DistanceMetric::kEuclidean;
    else throw ValidationError("unknown metric '" + a.metric + "'");
    const std::vector<int> layers = a.layers.empty() ? b.layers : parse_int_list(a.layers);
    const AggregatedSignals s = aggregate_layers(b, layers);
    const auto bins = default_locality_bins(b.grid, metric);
    std::ostringstream csv;
    write_locality_csv(locality_profile(s.a_ii_mean, b.grid, bins, metric), csv);
    emit(g, csv.str(), out);
    return 0;
  }
  if (a.annotations.empty()) throw ValidationError("--affinity needs --annotations");
  if (!a.layers.empty()) cfg.graph_layers = parse_layer_set(a.layers);
  const std::vector<SceneAnnotation> ann = load_annotations(a.annotations);
  const std::string id = fs::path(a.bundle).stem().string();
  const auto it = std::find_if(ann.begin(), ann.end(), [&](const SceneAnnotation& x) { return x.image_id == id; });
  if (it == ann.end()) throw ValidationError("missing annotation for: " + id);
  const AffinityReport r = affinity_report(b, *it, cfg);
  const json j = {{"report_version", kReportVersion},
                  {"image_id", id},
                  {"tau_w", r.tau_w},
                  {"gate_density", r.gate_density},
                  {"w_attn", stats_json(r.attention)},
                  {"w_cos", stats_json(r.output)},
                  {"gated", stats_json(r.gated)}};
  emit(g, j.dump(2) + "\n", out);
  return 0;
}

// ---- sweep -------------------------------------------------------------------

int cmd_sweep(const GlobalOptions& g, const std::string& data, const std::string& steps, const std::string& layers,
              const std::string& variant_name, std::ostream& out) {
  if (steps.empty() == layers.empty()) throw ValidationError("sweep needs exactly one of --steps or --layers");
  PipelineConfig cfg = load_config(g);
  const std::vector<Scene> scenes = load_scenes(data);
  std::vector<SweepRow> rows;
  if (!steps.empty()) {
    GroundingVariant v = GroundingVariant::kFull;
    if (variant_name == "concept-attention-only") v = GroundingVariant::kConceptAttentionOnly;
    else if (variant_name == "ungated") v = GroundingVariant::kUngated;
    else if (variant_name != "full") throw ValidationError("unknown variant '" + variant_name + "'");
    rows = sweep_steps(scenes, parse_int_list(steps), cfg, v);
  } else {
    std::vector<std::vector<int>> sets;
    std::stringstream ss(layers);
    std::string item;
    while (std::getline(ss, item, ';')) {
      if (!item.empty()) sets.push_back(parse_int_list(item, '+'));
    }
    rows = sweep_layers(scenes, sets, cfg);
  }
  std::ostringstream csv;
  write_sweep_csv(rows, csv);
  emit(g, csv.str(), out);
  return 0;
}

// ---- synth / validate --------------------------------------------------------

int cmd_synth(const GlobalOptions& g, int count, std::ostream& out, std::ostream& err) {
  const PipelineConfig cfg = load_config(g);
  const fs::path dir = g.output.empty() ? fs::path("synthetic") : fs::path(g.output);
  ensure_dir(dir);
  const SuiteReport suite = standard_suite(count, g.seed, cfg.threads);
  std::vector<SceneAnnotation> ann;
  for (const Scene& s : suite.scenes) {
    save_bundle(s.bundle, dir / (s.image_id + ".npz"));
    ann.push_back(s.annotation);
  }
  save_annotations(dir, ann);
  if (suite.regenerated > 0) err << "regenerated " << suite.regenerated << " scene(s) after coherence check\n";
  out << "wrote " << suite.scenes.size() << " scenes to " << dir.string() << '\n';
  return 0;
}

int cmd_validate(const std::vector<std::string>& inputs, std::ostream& out) {
  for (const fs::path& p : expand_bundles(inputs)) {
    const AttentionBundle b = load_bundle(p);
    out << "ok " << p.string() << " K=" << b.k() << " N=" << b.n() << " d_h=" << b.d_h << " layers=" << b.layers.size()
        << '\n';
  }
  return 0;
}

int report_error(ErrorKind kind, const std::string& message, std::ostream& err) {
  const char* name = kind == ErrorKind::kValidation ? "validation" : kind == ErrorKind::kIo ? "io" : "invariant";
  const json j = {{"error", {{"kind", name}, {"code", static_cast<int>(kind)}, {"message", message}}}};
  err << j.dump() << '\n';
  return static_cast<int>(kind);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Anchor-based grounding over diffusion attention bundles", "anchorprop"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_path, "JSON pipeline configuration");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "master seed for synthetic data");
  app.add_option("--output", g.output, "output directory or file");

  GroundArgs ga;
  auto* ground = app.add_subcommand("ground", "ground concepts in attention bundles");
  ground->add_option("bundles", ga.bundles, "bundle files or directories")->required();
  ground->add_option("--concept", ga.concepts, "concept to ground (repeatable; default all)");
  ground->add_option("--graph-layers", ga.graph_layers, "preset name or comma list");
  ground->add_option("--anchor-layers", ga.anchor_layers, "\"all\" or comma list");
  ground->add_option("--quantile", ga.quantile, "gate quantile");
  ground->add_option("--steps", ga.steps, "propagation steps");
  ground->add_flag("--dump-graph", ga.dump_graph, "write the propagation graph as an edge list");

  std::string results_dir, annotations_dir;
  auto* eval = app.add_subcommand("eval", "score grounding results against annotations");
  eval->add_option("results", results_dir, "directory written by ground")->required();
  eval->add_option("annotations", annotations_dir, "directory with annotations.json")->required();

  StatsArgs sa;
  auto* stats = app.add_subcommand("stats", "attention locality and affinity statistics");
  stats->add_option("bundle", sa.bundle, "bundle file")->required();
  stats->add_flag("--locality", sa.locality, "mean attention weight by patch distance (CSV)");
  stats->add_flag("--affinity", sa.affinity, "mean affinity by pair category (JSON)");
  stats->add_option("--annotations", sa.annotations, "annotation directory for --affinity");
  stats->add_option("--metric", sa.metric, "chebyshev or euclidean");
  stats->add_option("--layers", sa.layers, "layer set");

  std::string sweep_data, sweep_steps_arg, sweep_layers_arg, sweep_variant = "full";
  auto* sweep = app.add_subcommand("sweep", "propagation-step or layer-set sweeps (CSV)");
  sweep->add_option("data", sweep_data, "directory of bundles plus annotations.json")->required();
  sweep->add_option("--steps", sweep_steps_arg, "comma list of step counts");
  sweep->add_option("--layers", sweep_layers_arg, "semicolon-separated layer sets, e.g. 9;18;9+18");
  sweep->add_option("--variant", sweep_variant, "full, concept-attention-only or ungated");

  int synth_count = 100;
  auto* synth = app.add_subcommand("synth", "write the standard synthetic suite");
  synth->add_option("--count", synth_count, "number of scenes")->check(CLI::PositiveNumber);

  std::vector<std::string> validate_inputs;
  auto* validate = app.add_subcommand("validate", "check bundle files against the format");
  validate->add_option("bundles", validate_inputs, "bundle files or directories")->required();

  for (auto* sub : {ground, eval, stats, sweep, synth, validate}) sub->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return report_error(ErrorKind::kValidation, e.what(), err);
  }

  try {
    if (*ground) return cmd_ground(g, ga, out, err);
    if (*eval) return cmd_eval(g, results_dir, annotations_dir, out);
    if (*stats) return cmd_stats(g, sa, out);
    if (*sweep) return cmd_sweep(g, sweep_data, sweep_steps_arg, sweep_layers_arg, sweep_variant, out);
    if (*synth) return cmd_synth(g, synth_count, out, err);
    if (*validate) return cmd_validate(validate_inputs, out);
  } catch (const Error& e) {
    return report_error(e.kind(), e.what(), err);
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error(ErrorKind::kIo, e.what(), err);
  } catch (const std::exception& e) {
    return report_error(ErrorKind::kInvariant, e.what(), err);
  }
  return report_error(ErrorKind::kValidation, "no subcommand", err);
}

}  // namespace anchorprop::cli
