#include "pclip/schema.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

namespace pclip {

namespace {

using nlohmann::json;

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t count = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

std::string substitute_class(std::string_view tmpl, std::string_view class_name) {
  std::string out(tmpl);
  const auto pos = out.find(kClassPlaceholder);
  if (pos != std::string::npos) out.replace(pos, kClassPlaceholder.size(), class_name);
  return out;
}

// Drops trailing periods and whitespace so the terminal "." is appended once.
std::string_view strip_terminal(std::string_view text) {
  while (!text.empty() && (text.back() == '.' || text.back() == ' ')) text.remove_suffix(1);
  return text;
}

bool is_blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(), [](char c) { return c == ' ' || c == '\t'; });
}

std::size_t checked_mul(std::size_t a, std::size_t b) {
  if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a) {
    throw SchemaError("combination space overflows size_t");
  }
  return a * b;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const json& require(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + key + ": missing");
  return *it;
}

std::string require_string(const json& value, const std::string& path) {
  if (!value.is_string()) throw SchemaError(path + ": expected string");
  return value.get<std::string>();
}

const json& require_array(const json& value, const std::string& path) {
  if (!value.is_array()) throw SchemaError(path + ": expected array");
  return value;
}

}  // namespace

std::size_t AttributeSchema::combination_count() const {
  std::size_t total = 1;
  for (const auto& attr : attributes) total = checked_mul(total, attr.values.size());
  return total;
}

std::size_t AttributeSchema::attribute_index(std::string_view name) const {
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    if (attributes[i].name == name) return i;
  }
  throw SchemaError("attributes: no attribute named '" + std::string(name) + "'");
}

void validate(const AttributeSchema& schema) {
  const auto placeholders = count_occurrences(schema.base_template, kClassPlaceholder);
  if (placeholders != 1) {
    throw SchemaError("base_template: must contain the {class} placeholder exactly once (found " +
                      std::to_string(placeholders) + ")");
  }
  if (schema.classes.size() == 0) throw SchemaError("classes: at least one class is required");
  std::unordered_set<std::string> seen;
  for (std::size_t c = 0; c < schema.classes.size(); ++c) {
    const auto& name = schema.classes.names[c];
    const auto path = "classes[" + std::to_string(c) + "]";
    if (name.empty()) throw SchemaError(path + ": empty class name");
    if (!seen.insert(name).second) throw SchemaError(path + ": duplicate class name '" + name + "'");
  }
  if (schema.rendering_mode == RenderingMode::full_template && schema.attributes.size() > 1) {
    throw SchemaError("attributes: full_template mode supports at most one attribute");
  }

  seen.clear();
  for (std::size_t a = 0; a < schema.attributes.size(); ++a) {
    const auto& attr = schema.attributes[a];
    const auto apath = "attributes[" + std::to_string(a) + "]";
    if (attr.name.empty()) throw SchemaError(apath + ".name: empty attribute name");
    if (!seen.insert(attr.name).second) {
      throw SchemaError(apath + ".name: duplicate attribute name '" + attr.name + "'");
    }
    if (attr.values.empty()) throw SchemaError(apath + ".values: at least one value is required");
    std::unordered_set<std::string> value_names;
    for (std::size_t v = 0; v < attr.values.size(); ++v) {
      const auto& value = attr.values[v];
      const auto vpath = apath + ".values[" + std::to_string(v) + "]";
      if (value.name.empty()) throw SchemaError(vpath + ".name: empty value name");
      if (!value_names.insert(value.name).second) {
        throw SchemaError(vpath + ".name: duplicate value name '" + value.name + "'");
      }
      if (value.descriptions.empty()) throw SchemaError(vpath + ".descriptions: empty description list");
      std::unordered_set<std::string> descs;
      for (std::size_t d = 0; d < value.descriptions.size(); ++d) {
        const auto& desc = value.descriptions[d];
        const auto dpath = vpath + ".descriptions[" + std::to_string(d) + "]";
        if (!descs.insert(desc).second) throw SchemaError(dpath + ": duplicate description '" + desc + "'");
        if (!desc.empty() && is_blank(desc)) throw SchemaError(dpath + ": whitespace-only description");
        if (schema.rendering_mode == RenderingMode::full_template &&
            count_occurrences(desc, kClassPlaceholder) != 1) {
          throw SchemaError(dpath + ": full_template description must contain {class} exactly once");
        }
        if (schema.rendering_mode == RenderingMode::concat &&
            (desc.front() == ',' || strip_terminal(desc).ends_with(','))) {
          throw SchemaError(dpath + ": description must not begin or end with a comma");
        }
      }
    }
  }
  (void)schema.combination_count();  // overflow check
}

AttributeSchema parse_schema(const json& doc) {
  if (!doc.is_object()) throw SchemaError("(root): expected JSON object");
  AttributeSchema schema;
  schema.base_template = require_string(require(doc, "base_template", ""), "base_template");

  if (auto it = doc.find("rendering_mode"); it != doc.end()) {
    const auto mode = require_string(*it, "rendering_mode");
    if (mode == "concat") {
      schema.rendering_mode = RenderingMode::concat;
    } else if (mode == "full_template") {
      schema.rendering_mode = RenderingMode::full_template;
    } else {
      throw SchemaError("rendering_mode: unknown mode '" + mode + "'");
    }
  }

  const auto& classes = require_array(require(doc, "classes", ""), "classes");
  for (std::size_t c = 0; c < classes.size(); ++c) {
    schema.classes.names.push_back(require_string(classes[c], "classes[" + std::to_string(c) + "]"));
  }

  if (auto it = doc.find("attributes"); it != doc.end()) {
    const auto& attrs = require_array(*it, "attributes");
    for (std::size_t a = 0; a < attrs.size(); ++a) {
      const auto apath = "attributes[" + std::to_string(a) + "]";
      if (!attrs[a].is_object()) throw SchemaError(apath + ": expected object");
      ContextualAttribute attr;
      attr.name = require_string(require(attrs[a], "name", apath + "."), apath + ".name");
      const auto& values = require_array(require(attrs[a], "values", apath + "."), apath + ".values");
      for (std::size_t v = 0; v < values.size(); ++v) {
        const auto vpath = apath + ".values[" + std::to_string(v) + "]";
        if (!values[v].is_object()) throw SchemaError(vpath + ": expected object");
        AttributeValue value;
        value.name = require_string(require(values[v], "name", vpath + "."), vpath + ".name");
        const auto& descs =
            require_array(require(values[v], "descriptions", vpath + "."), vpath + ".descriptions");
        for (std::size_t d = 0; d < descs.size(); ++d) {
          value.descriptions.push_back(
              require_string(descs[d], vpath + ".descriptions[" + std::to_string(d) + "]"));
        }
        attr.values.push_back(std::move(value));
      }
      schema.attributes.push_back(std::move(attr));
    }
  }

  validate(schema);
  return schema;
}

AttributeSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError(path.string() + ": cannot open schema file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": JSON parse error: " + e.what());
  }
  try {
    return parse_schema(doc);
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

nlohmann::ordered_json to_json(const AttributeSchema& schema) {
  nlohmann::ordered_json doc;
  doc["base_template"] = schema.base_template;
  doc["rendering_mode"] = schema.rendering_mode == RenderingMode::concat ? "concat" : "full_template";
  doc["classes"] = schema.classes.names;
  auto attrs = nlohmann::ordered_json::array();
  for (const auto& attr : schema.attributes) {
    nlohmann::ordered_json a;
    a["name"] = attr.name;
    auto values = nlohmann::ordered_json::array();
    for (const auto& value : attr.values) {
      nlohmann::ordered_json v;
      v["name"] = value.name;
      v["descriptions"] = value.descriptions;
      values.push_back(std::move(v));
    }
    a["values"] = std::move(values);
    attrs.push_back(std::move(a));
  }
  doc["attributes"] = std::move(attrs);
  return doc;
}

std::string schema_fingerprint(const AttributeSchema& schema) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json(schema).dump()) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::vector<AttributeCombination> enumerate_combinations(const AttributeSchema& schema) {
  const auto total = schema.combination_count();
  std::vector<AttributeCombination> out;
  out.reserve(total);
  AttributeCombination combo{std::vector<std::size_t>(schema.attributes.size(), 0)};
  for (std::size_t n = 0; n < total; ++n) {
    out.push_back(combo);
    // odometer increment, last attribute fastest
    for (std::size_t i = schema.attributes.size(); i-- > 0;) {
      if (++combo.value_indices[i] < schema.attributes[i].values.size()) break;
      combo.value_indices[i] = 0;
    }
  }
  return out;
}

std::size_t combination_index(const AttributeSchema& schema, const AttributeCombination& combo) {
  if (combo.value_indices.size() != schema.attributes.size()) {
    throw std::out_of_range("combination length " + std::to_string(combo.value_indices.size()) +
                            " does not match attribute count " + std::to_string(schema.attributes.size()));
  }
  std::size_t index = 0;
  for (std::size_t i = 0; i < schema.attributes.size(); ++i) {
    const auto n = schema.attributes[i].values.size();
    if (combo.value_indices[i] >= n) {
      throw std::out_of_range("value index out of range for attribute '" + schema.attributes[i].name + "'");
    }
    index = index * n + combo.value_indices[i];
  }
  return index;
}

AttributeCombination combination_at(const AttributeSchema& schema, std::size_t index) {
  if (index >= schema.combination_count()) throw std::out_of_range("combination index out of range");
  AttributeCombination combo{std::vector<std::size_t>(schema.attributes.size(), 0)};
  for (std::size_t i = schema.attributes.size(); i-- > 0;) {
    const auto n = schema.attributes[i].values.size();
    combo.value_indices[i] = index % n;
    index /= n;
  }
  return combo;
}

std::size_t description_choice_count(const AttributeSchema& schema, const AttributeCombination& combo) {
  (void)combination_index(schema, combo);  // validates
  std::size_t total = 1;
  for (std::size_t i = 0; i < schema.attributes.size(); ++i) {
    total = checked_mul(total, schema.attributes[i].values[combo.value_indices[i]].descriptions.size());
  }
  return total;
}

std::string render_prompt(const AttributeSchema& schema, std::size_t class_id,
                          const AttributeCombination& combo, std::size_t desc_index) {
  const auto choices = description_choice_count(schema, combo);
  if (desc_index >= choices) throw std::out_of_range("description index out of range");
  const auto& class_name = schema.classes.name(class_id);

  // decode desc_index, last attribute fastest
  std::vector<const std::string*> descs(schema.attributes.size());
  for (std::size_t i = schema.attributes.size(); i-- > 0;) {
    const auto& options = schema.attributes[i].values[combo.value_indices[i]].descriptions;
    descs[i] = &options[desc_index % options.size()];
    desc_index /= options.size();
  }

  std::string out;
  if (schema.rendering_mode == RenderingMode::full_template && !descs.empty()) {
    if (count_occurrences(*descs[0], kClassPlaceholder) != 1) {
      throw SchemaError("full_template description missing {class}: '" + *descs[0] + "'");
    }
    out = strip_terminal(substitute_class(*descs[0], class_name));
  } else {
    out = strip_terminal(substitute_class(schema.base_template, class_name));
    for (const auto* desc : descs) {
      const auto text = strip_terminal(*desc);
      if (text.empty()) continue;
      out += ", ";
      out += text;
    }
  }
  out += '.';
  return out;
}

std::vector<std::string> render_prompts(const AttributeSchema& schema, std::size_t class_id,
                                        const AttributeCombination& combo) {
  const auto choices = description_choice_count(schema, combo);
  std::vector<std::string> out;
  out.reserve(choices);
  for (std::size_t d = 0; d < choices; ++d) out.push_back(render_prompt(schema, class_id, combo, d));
  return out;
}

std::string prompt_id(std::string_view fingerprint, std::size_t class_id, std::size_t combo_index,
                      std::size_t desc_index) {
  std::ostringstream id;
  id << fingerprint << "/c" << class_id << "/z" << combo_index << "/d" << desc_index;
  return id.str();
}

std::vector<std::size_t> selected_description_choices(const AttributeSchema& schema,
                                                      std::size_t combo_index,
                                                      const ManifestOptions& options) {
  const auto total = description_choice_count(schema, combination_at(schema, combo_index));
  const auto cap = std::max<std::size_t>(options.max_description_choices, 1);
  std::vector<std::size_t> out;
  if (total <= cap) {
    out.resize(total);
    for (std::size_t d = 0; d < total; ++d) out[d] = d;
    return out;
  }
  // Floyd's algorithm: `cap` distinct indices from [0, total).
  std::mt19937_64 rng(splitmix64(options.sample_seed ^ splitmix64(combo_index)));
  std::set<std::size_t> chosen;
  for (std::size_t j = total - cap; j < total; ++j) {
    const auto t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  return {chosen.begin(), chosen.end()};
}

PromptManifest render_manifest(const AttributeSchema& schema, const ManifestOptions& options) {
  const auto fingerprint = schema_fingerprint(schema);
  const auto combos = schema.combination_count();
  std::vector<std::vector<std::size_t>> choices(combos);
  for (std::size_t z = 0; z < combos; ++z) choices[z] = selected_description_choices(schema, z, options);

  PromptManifest manifest;
  for (std::size_t c = 0; c < schema.classes.size(); ++c) {
    for (std::size_t z = 0; z < combos; ++z) {
      const auto combo = combination_at(schema, z);
      for (auto d : choices[z]) {
        manifest.push_back({prompt_id(fingerprint, c, z, d), c, z, d, render_prompt(schema, c, combo, d)});
      }
    }
  }
  return manifest;
}

void write_manifest(std::ostream& out, const PromptManifest& manifest) {
  for (const auto& entry : manifest) {
    nlohmann::ordered_json line;
    line["id"] = entry.id;
    line["class_id"] = entry.class_id;
    line["combo_index"] = entry.combo_index;
    line["desc_index"] = entry.desc_index;
    line["text"] = entry.text;
    out << line.dump() << '\n';
  }
}

PromptManifest read_manifest(std::istream& in) {
  PromptManifest manifest;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto doc = json::parse(line);
      manifest.push_back({doc.at("id").get<std::string>(), doc.at("class_id").get<std::size_t>(),
                          doc.at("combo_index").get<std::size_t>(), doc.at("desc_index").get<std::size_t>(),
                          doc.at("text").get<std::string>()});
    } catch (const json::exception& e) {
      throw SchemaError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return manifest;
}

AttributeSchema randomize_descriptions(const AttributeSchema& schema, std::uint64_t seed) {
  static constexpr std::string_view kAlphabet =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_int_distribution<std::size_t> pick(0, kAlphabet.size() - 1);

  auto out = schema;
  for (auto& attr : out.attributes) {
    for (auto& value : attr.values) {
      for (auto& desc : value.descriptions) {
        std::string replaced;
        replaced.reserve(desc.size());
        for (std::size_t i = 0; i < desc.size(); ++i) {
          const auto ch = static_cast<unsigned char>(desc[i]);
          if (std::string_view(desc).substr(i).starts_with(kClassPlaceholder)) {
            replaced += kClassPlaceholder;
            i += kClassPlaceholder.size() - 1;
          } else if (ch == ' ' || ch == '\t') {
            replaced += static_cast<char>(ch);
          } else if ((ch & 0xC0) == 0x80) {
            continue;  // UTF-8 continuation byte: one code point, one character
          } else {
            replaced += kAlphabet[pick(rng)];
          }
        }
        desc = std::move(replaced);
      }
      // descriptions must stay distinct within a value
      std::unordered_set<std::string> seen;
      for (auto& desc : value.descriptions) {
        while (!desc.empty() && !seen.insert(desc).second) {
          for (std::size_t i = 0; i < desc.size(); ++i) {
            if (std::string_view(desc).substr(i).starts_with(kClassPlaceholder)) {
              i += kClassPlaceholder.size() - 1;
            } else if (desc[i] != ' ' && desc[i] != '\t') {
              desc[i] = kAlphabet[pick(rng)];
            }
          }
        }
      }
    }
  }
  return out;
}

AttributeSchema without_attributes(const AttributeSchema& schema) {
  auto out = schema;
  out.attributes.clear();
  out.rendering_mode = RenderingMode::concat;
  return out;
}

AttributeSchema with_placeholder_class(const AttributeSchema& schema, std::string_view word) {
  auto out = schema;
  out.classes.names = {std::string(word)};
  validate(out);
  return out;
}

AttributeSchema select_attributes(const AttributeSchema& schema, const std::vector<std::string>& names) {
  for (const auto& name : names) (void)schema.attribute_index(name);
  auto out = schema;
  out.attributes.clear();
  for (const auto& attr : schema.attributes) {
    if (std::find(names.begin(), names.end(), attr.name) != names.end()) out.attributes.push_back(attr);
  }
  return out;
}

AttributeSchema with_classes(const AttributeSchema& schema, std::vector<std::string> class_names) {
  auto out = schema;
  out.classes.names = std::move(class_names);
  validate(out);
  return out;
}

}  // namespace pclip
