#include "pclip/anchor_bank.hpp"

#include <unordered_set>

namespace pclip {

namespace {

std::size_t count_sampled(const AttributeSchema& schema, const ManifestOptions& options) {
  std::size_t sampled = 0;
  for (std::size_t z = 0; z < schema.combination_count(); ++z) {
    if (description_choice_count(schema, combination_at(schema, z)) > options.max_description_choices) ++sampled;
  }
  return sampled;
}

}  // namespace

AnchorBank build_bank(const EmbeddingMatrix& texts, const AttributeSchema& schema, const BankOptions& options) {
  AnchorBank bank{schema, {}, {}, {}, {}, 0};
  if (options.attribute || options.ensemble) {
    const auto manifest = render_manifest(schema, options.manifest);
    if (options.attribute) bank.attribute = build_anchors(texts, manifest, schema, options.anchors);
    if (options.ensemble) bank.ensemble = build_ensemble_anchors(texts, manifest, schema, options.anchors);
    bank.sampled_combinations = count_sampled(schema, options.manifest);
  }
  if (options.base) {
    const auto base_schema = without_attributes(schema);
    bank.base = build_anchors(texts, render_manifest(base_schema, options.manifest), base_schema, options.anchors);
  }
  if (options.placeholder) {
    const auto agnostic = with_placeholder_class(schema, options.placeholder_word);
    bank.placeholder = build_anchors(texts, render_manifest(agnostic, options.manifest), agnostic, options.anchors);
  }
  return bank;
}

PromptManifest bank_manifest(const AttributeSchema& schema, const BankOptions& options) {
  PromptManifest out;
  std::unordered_set<std::string> seen;
  auto append = [&](const PromptManifest& m) {
    for (const auto& entry : m) {
      if (seen.insert(entry.id).second) out.push_back(entry);
    }
  };
  if (options.attribute || options.ensemble) append(render_manifest(schema, options.manifest));
  if (options.base) append(render_manifest(without_attributes(schema), options.manifest));
  if (options.placeholder) append(render_manifest(with_placeholder_class(schema, options.placeholder_word), options.manifest));
  return out;
}

}  // namespace pclip
