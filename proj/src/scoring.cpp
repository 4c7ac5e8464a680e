#include "pclip/scoring.hpp"

#include <cmath>
#include <string>
#include <unordered_map>

#include "pclip/kernels.hpp"

namespace pclip {

namespace {

std::unordered_map<std::string_view, std::size_t> index_ids(const EmbeddingMatrix& texts) {
  std::unordered_map<std::string_view, std::size_t> index;
  index.reserve(texts.rows());
  for (std::size_t i = 0; i < texts.rows(); ++i) index.emplace(texts.ids[i], i);
  return index;
}

// Resolves manifest entries to text rows grouped by output slot.
template <typename SlotOf>
kernels::RowGroups group_rows(const EmbeddingMatrix& texts, const PromptManifest& manifest,
                              const AttributeSchema& schema, std::size_t slots, SlotOf slot_of) {
  const auto index = index_ids(texts);
  const auto combos = schema.combination_count();
  kernels::RowGroups groups(slots);
  for (const auto& entry : manifest) {
    if (entry.class_id >= schema.classes.size() || entry.combo_index >= combos) {
      throw DataError("manifest entry '" + entry.id + "' is outside the schema's class/combination range");
    }
    auto it = index.find(entry.id);
    if (it == index.end()) throw DataError("text embedding missing for manifest id '" + entry.id + "'");
    groups[slot_of(entry)].push_back(it->second);
  }
  return groups;
}

void fill(const EmbeddingMatrix& texts, const kernels::RowGroups& groups, AnchorSet& anchors,
          const AnchorOptions& options) {
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].empty()) {
      throw DataError("no manifest entries for class " + std::to_string(i / anchors.combos()) + " combination " +
                      std::to_string(i % anchors.combos()));
    }
  }
  const auto degenerate = options.threads == 1
                              ? kernels::mean_normalize_serial(texts, groups, anchors.data())
                              : kernels::mean_normalize_parallel(texts, groups, anchors.data(), options.threads);
  if (!degenerate.empty()) {
    const auto i = degenerate.front();
    throw DataError("degenerate anchor (mean norm < 1e-12) for class " + std::to_string(i / anchors.combos()) +
                    " combination " + std::to_string(i % anchors.combos()));
  }
}

}  // namespace

AnchorSet build_anchors(const EmbeddingMatrix& texts, const PromptManifest& manifest,
                        const AttributeSchema& schema, const AnchorOptions& options) {
  const auto classes = schema.classes.size();
  const auto combos = schema.combination_count();
  if (combos > options.anchor_budget / std::max<std::size_t>(classes, 1)) {
    throw DataError("anchor count " + std::to_string(classes) + " x " + std::to_string(combos) +
                    " exceeds the anchor budget of " + std::to_string(options.anchor_budget));
  }
  AnchorSet anchors(classes, combos, texts.dim);
  const auto groups = group_rows(texts, manifest, schema, classes * combos,
                                 [&](const ManifestEntry& e) { return e.class_id * combos + e.combo_index; });
  fill(texts, groups, anchors, options);
  return anchors;
}

AnchorSet build_ensemble_anchors(const EmbeddingMatrix& texts, const PromptManifest& manifest,
                                 const AttributeSchema& schema, const AnchorOptions& options) {
  const auto classes = schema.classes.size();
  AnchorSet anchors(classes, 1, texts.dim);
  const auto groups =
      group_rows(texts, manifest, schema, classes, [](const ManifestEntry& e) { return e.class_id; });
  fill(texts, groups, anchors, options);
  return anchors;
}

std::vector<float> mean_direction(std::span<const std::span<const float>> vectors) {
  if (vectors.empty()) throw DataError("mean of zero vectors");
  const auto dim = vectors.front().size();
  std::vector<double> acc(dim, 0.0);
  for (const auto& v : vectors) {
    if (v.size() != dim) throw DataError("dimension mismatch in mean");
    for (std::size_t k = 0; k < dim; ++k) acc[k] += v[k];
  }
  double sq = 0.0;
  for (auto& a : acc) {
    a /= static_cast<double>(vectors.size());
    sq += a * a;
  }
  const double norm = std::sqrt(sq);
  if (norm < kMinRowNorm) throw DataError("degenerate mean direction (norm < 1e-12)");
  std::vector<float> out(dim);
  for (std::size_t k = 0; k < dim; ++k) out[k] = static_cast<float>(acc[k] / norm);
  return out;
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw DataError("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += static_cast<double>(a[k]) * b[k];
  return s;
}

double clip1_score(std::span<const float> image, std::span<const float> class_anchor) {
  return dot(image, class_anchor);
}

double ensemble_score(std::span<const float> image, std::span<const std::span<const float>> templates) {
  const auto anchor = mean_direction(templates);
  return dot(image, anchor);
}

ScoreMatrix::ScoreMatrix(std::size_t classes, std::size_t combos, std::vector<double> values)
    : classes_(classes), combos_(combos), values_(std::move(values)) {
  if (values_.size() != classes_ * combos_) throw std::invalid_argument("score matrix shape mismatch");
}

ScoreMatrix score_tensor(std::span<const float> image, const AnchorSet& anchors) {
  if (image.size() != anchors.dim()) {
    throw DataError("dimension mismatch: image " + std::to_string(image.size()) + " vs anchors " +
                    std::to_string(anchors.dim()));
  }
  ScoreMatrix scores(anchors.classes(), anchors.combos());
  for (std::size_t c = 0; c < anchors.classes(); ++c) {
    for (std::size_t z = 0; z < anchors.combos(); ++z) scores.at(c, z) = dot(image, anchors.anchor(c, z));
  }
  return scores;
}

std::vector<double> class_agnostic_scores(std::span<const float> image, const AnchorSet& placeholder_anchors) {
  if (placeholder_anchors.classes() != 1) {
    throw DataError("class-agnostic anchors must have exactly one (placeholder) class");
  }
  const auto scores = score_tensor(image, placeholder_anchors);
  return {scores.values().begin(), scores.values().end()};
}

}  // namespace pclip
