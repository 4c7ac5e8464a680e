#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pclip/embedding_store.hpp"
#include "pclip/schema.hpp"

namespace pclip {

/// Cached text anchors, one unit vector per (class, combination), stored
/// contiguously as [class][combo][dim].
class AnchorSet {
 public:
  AnchorSet() = default;
  AnchorSet(std::size_t classes, std::size_t combos, std::size_t dim)
      : classes_(classes), combos_(combos), dim_(dim), data_(classes * combos * dim, 0.0f) {}

  std::size_t classes() const { return classes_; }
  std::size_t combos() const { return combos_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return classes_ * combos_; }

  std::span<const float> anchor(std::size_t class_id, std::size_t combo) const {
    return {data_.data() + (class_id * combos_ + combo) * dim_, dim_};
  }
  std::span<float> anchor(std::size_t class_id, std::size_t combo) {
    return {data_.data() + (class_id * combos_ + combo) * dim_, dim_};
  }
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

 private:
  std::size_t classes_ = 0;
  std::size_t combos_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

struct AnchorOptions {
  std::size_t anchor_budget = 5'000'000;  // max classes x combos
  int threads = 0;                        // 0 = OpenMP default, 1 = serial kernel
};

/// Mean of every description-choice embedding of each (class, combo),
/// then unit-normalized. Every manifest id must be a row of `texts`.
AnchorSet build_anchors(const EmbeddingMatrix& texts, const PromptManifest& manifest,
                        const AttributeSchema& schema, const AnchorOptions& options = {});

/// One anchor per class: normalized mean over every manifest entry of the
/// class, regardless of combination. With a full_template schema this is
/// the classic template-ensemble classifier.
AnchorSet build_ensemble_anchors(const EmbeddingMatrix& texts, const PromptManifest& manifest,
                                 const AttributeSchema& schema, const AnchorOptions& options = {});

/// Normalized arithmetic mean of the given vectors.
std::vector<float> mean_direction(std::span<const std::span<const float>> vectors);

double dot(std::span<const float> a, std::span<const float> b);
double clip1_score(std::span<const float> image, std::span<const float> class_anchor);
double ensemble_score(std::span<const float> image, std::span<const std::span<const float>> templates);

/// Similarity scores for one image, indexed [class][combo].
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  ScoreMatrix(std::size_t classes, std::size_t combos) : classes_(classes), combos_(combos), values_(classes * combos) {}
  ScoreMatrix(std::size_t classes, std::size_t combos, std::vector<double> values);

  std::size_t classes() const { return classes_; }
  std::size_t combos() const { return combos_; }
  double at(std::size_t class_id, std::size_t combo) const { return values_[class_id * combos_ + combo]; }
  double& at(std::size_t class_id, std::size_t combo) { return values_[class_id * combos_ + combo]; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

 private:
  std::size_t classes_ = 0;
  std::size_t combos_ = 0;
  std::vector<double> values_;
};

ScoreMatrix score_tensor(std::span<const float> image, const AnchorSet& anchors);

/// Scores against a one-class (placeholder word) anchor set: CLIP(z; x).
std::vector<double> class_agnostic_scores(std::span<const float> image, const AnchorSet& placeholder_anchors);

}  // namespace pclip
