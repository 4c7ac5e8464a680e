#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pclip {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major float32 matrix with one id per row.
struct EmbeddingMatrix {
  std::size_t dim = 0;
  std::vector<float> data;
  std::vector<std::string> ids;

  std::size_t rows() const { return ids.size(); }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
  std::span<float> row(std::size_t i) { return {data.data() + i * dim, dim}; }

  /// Throws DataError unless rows * dim == data.size() and ids are unique.
  void check_shape() const;
  /// Row index for an id, or nullopt.
  std::optional<std::size_t> find(const std::string& id) const;
};

using GroupValues = std::map<std::string, std::string>;  // attribute name -> value name

struct ImageMetadata {
  std::vector<std::optional<std::size_t>> labels;  // empty when the bundle has no labels
  std::vector<std::optional<GroupValues>> groups;  // empty when the bundle has no group data

  bool has_labels() const { return !labels.empty(); }
  bool has_groups() const { return !groups.empty(); }
};

/// Contents of one bundle directory: a matrix plus optional per-row metadata.
struct EmbeddingSet {
  EmbeddingMatrix matrix;
  ImageMetadata meta;
};

/// Image embeddings together with the text embeddings the anchors come from.
struct EmbeddingBundle {
  EmbeddingSet images;
  EmbeddingMatrix texts;
};

EmbeddingBundle make_bundle(EmbeddingSet images, EmbeddingMatrix texts);

inline constexpr double kMinRowNorm = 1e-12;

/// Writes manifest.json and embeddings.bin into `dir` (created if needed).
/// Output bytes depend only on the input.
void save_bundle(const EmbeddingSet& set, const std::filesystem::path& dir);
/// Reads a bundle directory without touching the values.
EmbeddingSet load_raw(const std::filesystem::path& dir);
/// Reads a bundle directory and rescales every row to unit norm.
EmbeddingSet load_normalized(const std::filesystem::path& dir);

/// Rescales every row to unit L2 norm (double accumulation). Throws
/// DataError naming the row id when a norm is below kMinRowNorm.
void normalize_rows(EmbeddingMatrix& matrix);

}  // namespace pclip
