#pragma once

#include <optional>
#include <string>

#include "pclip/embedding_store.hpp"
#include "pclip/schema.hpp"
#include "pclip/scoring.hpp"

namespace pclip {

/// Every anchor set an inference mode may need, derived from one schema.
///   attribute:   [class][combo]   attribute-aware scores
///   base:        [class][1]       class-only prompts (attribute-free schema)
///   ensemble:    [class][1]       mean over all of a class's prompts
///   placeholder: [1][combo]       placeholder-class prompts for PureAttr
struct AnchorBank {
  AttributeSchema schema;
  std::optional<AnchorSet> attribute;
  std::optional<AnchorSet> base;
  std::optional<AnchorSet> ensemble;
  std::optional<AnchorSet> placeholder;
  // Combinations whose description cross product was subsampled.
  std::size_t sampled_combinations = 0;
};

struct BankOptions {
  bool attribute = true;
  bool base = false;
  bool ensemble = false;
  bool placeholder = false;
  std::string placeholder_word = "object";
  ManifestOptions manifest;
  AnchorOptions anchors;
};

/// Looks up text embeddings for the manifests of `schema` and its derived
/// schemas (attribute-free, placeholder-class) by prompt id.
AnchorBank build_bank(const EmbeddingMatrix& texts, const AttributeSchema& schema, const BankOptions& options);

/// Manifest of every prompt build_bank may look up for these options.
PromptManifest bank_manifest(const AttributeSchema& schema, const BankOptions& options);

}  // namespace pclip
