#include "anchorprop/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "anchorprop/archive.hpp"
#include "anchorprop/error.hpp"
#include "anchorprop/npy.hpp"

namespace anchorprop {
namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

void check_shape(const MatrixF& m, Eigen::Index rows, Eigen::Index cols, const std::string& key) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << key << ": shape mismatch, expected (" << rows << ", " << cols << ") got (" << m.rows()
       << ", " << m.cols() << ")";
    throw ValidationError(os.str());
  }
}

void check_finite(const MatrixF& m, const std::string& key) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(m(r, c))) {
        std::ostringstream os;
        os << key << ": non-finite value at row " << r << ", col " << c;
        throw ValidationError(os.str());
      }
    }
  }
}

void check_softmax_rows(const MatrixF& m, const std::string& key) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double sum = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float v = m(r, c);
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << key << ": non-finite value at row " << r << ", col " << c;
        throw ValidationError(os.str());
      }
      if (v < 0.0f || v > 1.0f) {
        std::ostringstream os;
        os << key << ": value " << v << " outside [0,1] at row " << r << ", col " << c;
        throw ValidationError(os.str());
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      std::ostringstream os;
      os << key << ": row " << r << " sums to " << sum << " (tolerance " << kRowSumTolerance << ")";
      throw ValidationError(os.str());
    }
  }
}

std::span<const char> as_bytes(const MatrixF& m) {
  return {reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(float)};
}

}  // namespace

std::string_view to_string(Trajectory t) {
  return t == Trajectory::kGeneration ? "generation" : "inversion";
}

Trajectory parse_trajectory(std::string_view s) {
  if (s == "generation") return Trajectory::kGeneration;
  if (s == "inversion") return Trajectory::kInversion;
  throw ValidationError("manifest: unknown trajectory '" + std::string(s) + "'");
}

void check_grid(const GridShape& grid) {
  if (grid.h < 2 || grid.w < 2) {
    throw ValidationError("grid must be at least 2x2, got " + std::to_string(grid.h) + "x" +
                          std::to_string(grid.w));
  }
}

std::size_t PixelMask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

int AttentionBundle::layer_position(int layer) const {
  const auto it = std::find(layers.begin(), layers.end(), layer);
  return it == layers.end() ? -1 : static_cast<int>(it - layers.begin());
}

const LayerTensors& AttentionBundle::layer(int layer) const {
  const int pos = layer_position(layer);
  if (pos < 0) throw ValidationError("unknown layer index " + std::to_string(layer));
  return tensors[static_cast<std::size_t>(pos)];
}

int AttentionBundle::concept_index(std::string_view name) const {
  const auto it = std::find(concepts.begin(), concepts.end(), name);
  return it == concepts.end() ? -1 : static_cast<int>(it - concepts.begin());
}

std::string tensor_entry_name(std::string_view kind, int layer) {
  return std::string(kind) + "/layer_" + std::to_string(layer) + ".npy";
}

void validate_bundle(const AttentionBundle& b) {
  check_grid(b.grid);
  if (b.concepts.empty()) throw ValidationError("bundle has no concepts");
  if (b.layers.empty()) throw ValidationError("bundle has no layers");
  if (b.d_h < 1) throw ValidationError("d_h must be positive");
  if (b.tensors.size() != b.layers.size()) {
    throw ValidationError("bundle has " + std::to_string(b.tensors.size()) + " tensor sets for " +
                          std::to_string(b.layers.size()) + " layers");
  }
  std::vector<int> sorted = b.layers;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ValidationError("duplicate layer index in bundle");
  }
  const Eigen::Index n = b.n();
  const Eigen::Index k = b.k();
  for (std::size_t i = 0; i < b.layers.size(); ++i) {
    const int layer = b.layers[i];
    const LayerTensors& t = b.tensors[i];
    const std::string suffix = "/layer_" + std::to_string(layer);
    check_shape(t.a_ci, k, n, "a_ci" + suffix);
    check_shape(t.a_ii, n, n, "a_ii" + suffix);
    check_shape(t.o_ii, n, b.d_h, "o_ii" + suffix);
    check_softmax_rows(t.a_ci, "a_ci" + suffix);
    check_softmax_rows(t.a_ii, "a_ii" + suffix);
    check_finite(t.o_ii, "o_ii" + suffix);
  }
}

AttentionBundle load_bundle(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("bundle not found: " + path.string());
  ZipReader zip(path);
  if (zip.find("manifest.json") == nullptr) throw ValidationError("missing key: manifest.json");
  const std::vector<char> manifest_bytes = zip.read("manifest.json");

  AttentionBundle b;
  try {
    const json m = json::parse(manifest_bytes.begin(), manifest_bytes.end());
    for (const char* key : {"grid", "concepts", "layers", "d_h", "model", "timestep", "trajectory",
                            "prompt", "format_version"}) {
      if (!m.contains(key)) throw ValidationError(std::string("manifest: missing key ") + key);
    }
    if (m.at("format_version").get<int>() != kFormatVersion) {
      throw ValidationError("manifest: unsupported format_version " + m.at("format_version").dump());
    }
    b.grid.h = m.at("grid").at("h").get<int>();
    b.grid.w = m.at("grid").at("w").get<int>();
    b.concepts = m.at("concepts").get<std::vector<std::string>>();
    b.layers = m.at("layers").get<std::vector<int>>();
    b.d_h = m.at("d_h").get<int>();
    b.meta.model = m.at("model").get<std::string>();
    b.meta.timestep = m.at("timestep").get<int>();
    b.meta.trajectory = parse_trajectory(m.at("trajectory").get<std::string>());
    b.meta.prompt = m.at("prompt").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  check_grid(b.grid);

  for (const int layer : b.layers) {
    LayerTensors t;
    const std::array<std::pair<const char*, MatrixF*>, 3> kinds{
        {{"a_ci", &t.a_ci}, {"a_ii", &t.a_ii}, {"o_ii", &t.o_ii}}};
    for (const auto& [kind, dest] : kinds) {
      const std::string entry = tensor_entry_name(kind, layer);
      if (zip.find(entry) == nullptr) throw ValidationError("missing key: " + entry);
      const std::vector<char> bytes = zip.read(entry);
      *dest = decode_npy_matrix(bytes, std::string(kind) + "/layer_" + std::to_string(layer));
    }
    b.tensors.push_back(std::move(t));
  }
  validate_bundle(b);
  return b;
}

void save_bundle(const AttentionBundle& b, const std::filesystem::path& path) {
  validate_bundle(b);
  json m;
  m["format_version"] = kFormatVersion;
  m["grid"] = {{"h", b.grid.h}, {"w", b.grid.w}};
  m["concepts"] = b.concepts;
  m["layers"] = b.layers;
  m["d_h"] = b.d_h;
  m["model"] = b.meta.model;
  m["timestep"] = b.meta.timestep;
  m["trajectory"] = std::string(to_string(b.meta.trajectory));
  m["prompt"] = b.meta.prompt;
  const std::string manifest = m.dump(2);

  ZipWriter zip(path);
  zip.add("manifest.json", std::span<const char>(manifest.data(), manifest.size()));
  for (std::size_t i = 0; i < b.layers.size(); ++i) {
    const LayerTensors& t = b.tensors[i];
    for (const auto& [kind, mat] : std::array<std::pair<const char*, const MatrixF*>, 3>{
             {{"a_ci", &t.a_ci}, {"a_ii", &t.a_ii}, {"o_ii", &t.o_ii}}}) {
      const std::string header = npy_header_2d(static_cast<std::size_t>(mat->rows()),
                                               static_cast<std::size_t>(mat->cols()));
      const std::array<std::span<const char>, 2> parts{std::span<const char>(header.data(), header.size()),
                                                       as_bytes(*mat)};
      zip.add(tensor_entry_name(kind, b.layers[i]), parts);
    }
  }
  zip.finish();
}

AggregatedSignals aggregate_layers(const AttentionBundle& b, std::span<const int> layer_set) {
  if (layer_set.empty()) throw ValidationError("layer set is empty");
  std::vector<int> sorted(layer_set.begin(), layer_set.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ValidationError("duplicate layer index in layer set");
  }
  std::vector<const LayerTensors*> picked;
  for (const int layer : sorted) picked.push_back(&b.layer(layer));

  const double inv = 1.0 / static_cast<double>(picked.size());
  auto mean_of = [&](auto member) {
    const MatrixF& first = picked.front()->*member;
    MatrixF out(first.rows(), first.cols());
    const Eigen::Index size = first.size();
    for (Eigen::Index i = 0; i < size; ++i) {
      double acc = 0.0;
      for (const LayerTensors* t : picked) acc += static_cast<double>((t->*member).data()[i]);
      out.data()[i] = static_cast<float>(acc * inv);
    }
    return out;
  };

  AggregatedSignals s;
  s.a_ci_mean = mean_of(&LayerTensors::a_ci);
  s.a_ii_mean = mean_of(&LayerTensors::a_ii);
  s.o_ii_mean = mean_of(&LayerTensors::o_ii);
  s.layer_set = std::move(sorted);
  return s;
}

}  // namespace anchorprop
