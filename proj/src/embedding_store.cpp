#include "pclip/embedding_store.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_set>

#include <json.hpp>

namespace pclip {

namespace {

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kDataFile = "embeddings.bin";

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
  }
  return v;
}

}  // namespace

void EmbeddingMatrix::check_shape() const {
  if (dim == 0) throw DataError("embedding dim must be positive");
  if (data.size() != rows() * dim) {
    throw DataError("embedding data length " + std::to_string(data.size()) + " != rows " +
                    std::to_string(rows()) + " x dim " + std::to_string(dim));
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw DataError("duplicate embedding id '" + id + "'");
  }
}

std::optional<std::size_t> EmbeddingMatrix::find(const std::string& id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return i;
  }
  return std::nullopt;
}

EmbeddingBundle make_bundle(EmbeddingSet images, EmbeddingMatrix texts) {
  if (images.matrix.dim != texts.dim) {
    throw DataError("image dim " + std::to_string(images.matrix.dim) + " != text dim " +
                    std::to_string(texts.dim));
  }
  return {std::move(images), std::move(texts)};
}

void save_bundle(const EmbeddingSet& set, const std::filesystem::path& dir) {
  const auto& m = set.matrix;
  m.check_shape();
  if (set.meta.has_labels() && set.meta.labels.size() != m.rows()) {
    throw DataError("labels length does not match row count");
  }
  if (set.meta.has_groups() && set.meta.groups.size() != m.rows()) {
    throw DataError("groups length does not match row count");
  }

  nlohmann::ordered_json manifest;
  manifest["dtype"] = "f32";
  manifest["dim"] = m.dim;
  manifest["count"] = m.rows();
  manifest["ids"] = m.ids;
  if (set.meta.has_labels()) {
    auto labels = nlohmann::ordered_json::array();
    for (const auto& label : set.meta.labels) {
      labels.push_back(label ? nlohmann::ordered_json(*label) : nlohmann::ordered_json(nullptr));
    }
    manifest["labels"] = std::move(labels);
  }
  if (set.meta.has_groups()) {
    auto groups = nlohmann::ordered_json::array();
    for (const auto& group : set.meta.groups) {
      groups.push_back(group ? nlohmann::ordered_json(*group) : nlohmann::ordered_json(nullptr));
    }
    manifest["groups"] = std::move(groups);
  }

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError(dir.string() + ": cannot create directory: " + ec.message());

  {
    std::ofstream out(dir / kManifestFile, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError((dir / kManifestFile).string() + ": cannot open for writing");
    out << manifest.dump(1) << '\n';
    if (!out) throw DataError((dir / kManifestFile).string() + ": write failed");
  }
  {
    std::ofstream out(dir / kDataFile, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError((dir / kDataFile).string() + ": cannot open for writing");
    std::vector<std::uint32_t> words(m.data.size());
    for (std::size_t i = 0; i < m.data.size(); ++i) {
      words[i] = to_little_endian(std::bit_cast<std::uint32_t>(m.data[i]));
    }
    out.write(reinterpret_cast<const char*>(words.data()),
              static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
    if (!out) throw DataError((dir / kDataFile).string() + ": write failed");
  }
}

EmbeddingSet load_raw(const std::filesystem::path& dir) {
  const auto manifest_path = dir / kManifestFile;
  std::ifstream in(manifest_path);
  if (!in) throw DataError(manifest_path.string() + ": cannot open");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(manifest_path.string() + ": JSON parse error: " + e.what());
  }

  EmbeddingSet set;
  auto& m = set.matrix;
  std::size_t count = 0;
  try {
    const auto dtype = manifest.at("dtype").get<std::string>();
    if (dtype != "f32") throw DataError(manifest_path.string() + ": unsupported dtype '" + dtype + "'");
    m.dim = manifest.at("dim").get<std::size_t>();
    count = manifest.at("count").get<std::size_t>();
    m.ids = manifest.at("ids").get<std::vector<std::string>>();
    if (auto it = manifest.find("labels"); it != manifest.end() && !it->is_null()) {
      for (const auto& label : *it) {
        set.meta.labels.push_back(label.is_null() ? std::nullopt
                                                  : std::optional<std::size_t>(label.get<std::size_t>()));
      }
    }
    if (auto it = manifest.find("groups"); it != manifest.end() && !it->is_null()) {
      for (const auto& group : *it) {
        set.meta.groups.push_back(group.is_null() ? std::nullopt
                                                  : std::optional<GroupValues>(group.get<GroupValues>()));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }

  if (m.dim == 0) throw DataError(manifest_path.string() + ": dim must be positive");
  if (m.ids.size() != count) {
    throw DataError(manifest_path.string() + ": ids length " + std::to_string(m.ids.size()) +
                    " != count " + std::to_string(count));
  }
  if (set.meta.has_labels() && set.meta.labels.size() != count) {
    throw DataError(manifest_path.string() + ": labels length != count");
  }
  if (set.meta.has_groups() && set.meta.groups.size() != count) {
    throw DataError(manifest_path.string() + ": groups length != count");
  }

  const auto data_path = dir / kDataFile;
  std::error_code ec;
  const auto bytes = std::filesystem::file_size(data_path, ec);
  if (ec) throw DataError(data_path.string() + ": cannot stat: " + ec.message());
  const auto expected = static_cast<std::uintmax_t>(count) * m.dim * sizeof(float);
  if (bytes != expected) {
    throw DataError(data_path.string() + ": size " + std::to_string(bytes) + " bytes, expected " +
                    std::to_string(expected) + (bytes < expected ? " (truncated)" : " (dim/count mismatch)"));
  }

  std::vector<std::uint32_t> words(count * m.dim);
  std::ifstream bin(data_path, std::ios::binary);
  bin.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(expected));
  if (!bin) throw DataError(data_path.string() + ": read failed");
  m.data.resize(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) m.data[i] = std::bit_cast<float>(to_little_endian(words[i]));

  m.check_shape();
  return set;
}

void normalize_rows(EmbeddingMatrix& matrix) {
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    auto row = matrix.row(r);
    double sq = 0.0;
    for (float v : row) {
      if (!std::isfinite(v)) throw DataError("non-finite value in row '" + matrix.ids[r] + "'");
      sq += static_cast<double>(v) * v;
    }
    const double norm = std::sqrt(sq);
    if (norm < kMinRowNorm) throw DataError("zero-norm embedding row '" + matrix.ids[r] + "'");
    for (float& v : row) v = static_cast<float>(v / norm);
  }
}

EmbeddingSet load_normalized(const std::filesystem::path& dir) {
  auto set = load_raw(dir);
  try {
    normalize_rows(set.matrix);
  } catch (const DataError& e) {
    throw DataError(dir.string() + ": " + e.what());
  }
  return set;
}

}  // namespace pclip
