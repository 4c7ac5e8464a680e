#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace pclip {

/// Raised for malformed or invalid schema content. The message names the
/// offending element using a JSON-pointer-like path, e.g.
/// `attributes[2].values[0].descriptions`.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RenderingMode { concat, full_template };

struct AttributeValue {
  std::string name;
  std::vector<std::string> descriptions;  // uniform distribution over these
};

struct ContextualAttribute {
  std::string name;
  std::vector<AttributeValue> values;
};

struct ClassVocabulary {
  std::vector<std::string> names;  // class_id == index

  std::size_t size() const { return names.size(); }
  const std::string& name(std::size_t class_id) const { return names.at(class_id); }
};

/// One value index per schema attribute, in schema attribute order.
struct AttributeCombination {
  std::vector<std::size_t> value_indices;

  bool operator==(const AttributeCombination&) const = default;
};

/// The full prompt space: class names, contextual attributes and the
/// template the class name is substituted into. Immutable once validated.
struct AttributeSchema {
  std::string base_template;
  RenderingMode rendering_mode = RenderingMode::concat;
  ClassVocabulary classes;
  std::vector<ContextualAttribute> attributes;

  /// Product of attribute cardinalities (1 for an attribute-free schema).
  std::size_t combination_count() const;
  /// Index of the attribute called `name`, or throws SchemaError.
  std::size_t attribute_index(std::string_view name) const;
};

inline constexpr std::string_view kClassPlaceholder = "{class}";

void validate(const AttributeSchema& schema);
AttributeSchema parse_schema(const nlohmann::json& doc);
AttributeSchema load_schema(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const AttributeSchema& schema);

/// 16 hex digit FNV-1a hash of the canonical JSON form. Used as the prompt
/// id prefix so manifests of different schemas never collide.
std::string schema_fingerprint(const AttributeSchema& schema);

// Combination lattice. Index order is lexicographic with the first
// attribute most significant.
std::vector<AttributeCombination> enumerate_combinations(const AttributeSchema& schema);
std::size_t combination_index(const AttributeSchema& schema, const AttributeCombination& combo);
AttributeCombination combination_at(const AttributeSchema& schema, std::size_t index);

/// Number of description choices for a combination (cross product of the
/// chosen values' description lists).
std::size_t description_choice_count(const AttributeSchema& schema, const AttributeCombination& combo);
std::string render_prompt(const AttributeSchema& schema, std::size_t class_id,
                          const AttributeCombination& combo, std::size_t desc_index);
std::vector<std::string> render_prompts(const AttributeSchema& schema, std::size_t class_id,
                                        const AttributeCombination& combo);

struct ManifestEntry {
  std::string id;
  std::size_t class_id = 0;
  std::size_t combo_index = 0;
  std::size_t desc_index = 0;
  std::string text;
};

using PromptManifest = std::vector<ManifestEntry>;

struct ManifestOptions {
  // Combinations with more description choices than this are represented
  // by a fixed-seed uniform sample of that many choices.
  std::size_t max_description_choices = 256;
  std::uint64_t sample_seed = 0;
};

std::string prompt_id(std::string_view fingerprint, std::size_t class_id, std::size_t combo_index,
                      std::size_t desc_index);

/// Description-choice indices used for a combination, ascending.
std::vector<std::size_t> selected_description_choices(const AttributeSchema& schema,
                                                      std::size_t combo_index,
                                                      const ManifestOptions& options = {});

PromptManifest render_manifest(const AttributeSchema& schema, const ManifestOptions& options = {});
void write_manifest(std::ostream& out, const PromptManifest& manifest);
PromptManifest read_manifest(std::istream& in);

/// Replaces every whitespace-separated word of every attribute description
/// with a random alphanumeric string of the same length.
AttributeSchema randomize_descriptions(const AttributeSchema& schema, std::uint64_t seed);

// Derived schemas.
AttributeSchema without_attributes(const AttributeSchema& schema);
AttributeSchema with_placeholder_class(const AttributeSchema& schema, std::string_view word = "object");
AttributeSchema select_attributes(const AttributeSchema& schema, const std::vector<std::string>& names);
AttributeSchema with_classes(const AttributeSchema& schema, std::vector<std::string> class_names);

}  // namespace pclip
