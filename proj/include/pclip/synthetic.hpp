#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "pclip/embedding_store.hpp"
#include "pclip/schema.hpp"
#include "pclip/scoring.hpp"
#include "pclip/text_hash_encoder.hpp"

namespace pclip {

/// Generative model Y -> X <- {Z_i} in embedding space.
///   u_y = normalize(sqrt(s) * shared + sqrt(1 - s) * r_y),  s = class_similarity
///   v   = gamma * unit offset per attribute value
///   x   = normalize(u_y + sum v + noise * N(0, I))
///   anchor(y, z) = normalize(u_y + text_attribute_scale * sum v)
/// With spurious_correlation rho > 0, value j of the designated attribute
/// co-occurs with class j mod classes at rate rho, and its offset leans
/// towards u_{j mod classes} by spurious_alignment * rho.
/// anchor_leak > 0 miscalibrates the anchors of value 0 of attribute 0:
///   anchor(y, z) gains anchor_leak * u_{(y + 1) mod classes}.
struct GenerativeSpec {
  std::size_t dim = 64;
  std::size_t classes = 5;
  std::vector<std::size_t> attribute_sizes = {2, 3};
  double class_similarity = 0.85;
  double attribute_strength = 1.0;  // gamma
  double noise = 0.1;               // sigma
  double spurious_correlation = 0.0;
  std::size_t spurious_attribute = 0;
  double spurious_alignment = 0.35;
  double text_attribute_scale = 1.0;  // != 1 miscalibrates the anchors
  double anchor_leak = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::ordered_json to_json() const;
};

class SyntheticModel {
 public:
  explicit SyntheticModel(const GenerativeSpec& spec);

  const GenerativeSpec& spec() const { return spec_; }
  const AttributeSchema& schema() const { return schema_; }
  std::span<const double> prototype(std::size_t class_id) const;
  std::span<const double> offset(std::size_t attribute, std::size_t value) const;

  std::vector<float> anchor(std::size_t class_id, std::size_t combo) const;
  std::vector<float> base_anchor(std::size_t class_id) const;
  std::vector<float> placeholder_anchor(std::size_t combo) const;

  /// Text rows for the attribute, attribute-free and placeholder manifests
  /// of schema(), keyed by prompt id, so build_bank can consume them.
  EmbeddingMatrix texts() const;

  /// Draws the (class, combo) of image `row` and the image itself.
  void sample(std::size_t row, std::size_t& class_id, std::size_t& combo, std::span<float> out) const;

 private:
  std::vector<float> direction(std::span<const double> base, std::size_t combo, double scale) const;

  GenerativeSpec spec_;
  AttributeSchema schema_;
  std::vector<double> prototypes_;                // [class][dim]
  std::vector<double> placeholder_;               // [dim]
  std::vector<std::vector<double>> offsets_;      // [attribute][value][dim]
};

struct SyntheticData {
  AttributeSchema schema;
  EmbeddingSet images;        // labels and groups filled in
  EmbeddingMatrix texts;
  std::vector<std::size_t> combos;  // generating combination per image
};

/// Rows are generated in parallel from per-row seeds, so the output does
/// not depend on the thread count.
SyntheticData generate(const GenerativeSpec& spec, std::size_t n_images, int threads = 0);

/// Sidecar with the spec and per-row class/combination.
nlohmann::ordered_json ground_truth_json(const GenerativeSpec& spec, const SyntheticData& data);

/// Same ids, every row replaced by a random unit vector.
EmbeddingMatrix random_texts(const EmbeddingMatrix& like, std::uint64_t seed);

// Text pipeline: images come from rendered prompts through a hash encoder.

/// Five bird classes, orientation (2 values) and illumination (3 values).
AttributeSchema demo_text_schema();

struct TextPipelineSpec {
  AttributeSchema schema = demo_text_schema();
  std::size_t encoder_dim = 128;
  std::uint64_t encoder_seed = 0;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

/// Image i: uniform class and combination, one of its prompts at random,
/// x = normalize(encode(prompt) + noise * N(0, I)).
EmbeddingSet generate_text_images(const TextPipelineSpec& spec, std::size_t n_images, int threads = 0);

class OracleOverflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Posteriors by direct exponentiation in long double, no stabilization.
/// Matrices are [class][combo].
struct OracleResult {
  std::size_t classes = 0;
  std::size_t combos = 0;
  std::vector<long double> joint;
  std::vector<long double> class_given_combo;   // p(y | x, z), each column sums to 1
  std::vector<long double> class_attr;          // tau inside the class sum
  std::vector<long double> class_attr_after;    // tau after the class sum
  std::vector<long double> pure_attr;           // empty without agnostic scores
  std::vector<long double> two_step_class_attr;
  std::vector<long double> two_step_class_attr_after;
  std::vector<long double> two_step_pure_attr;
  std::vector<long double> one_step;            // softmax_y of log sum_z exp S
};

OracleResult brute_force_posteriors(const ScoreMatrix& scores, double temperature,
                                    std::span<const double> agnostic = {});

}  // namespace pclip
