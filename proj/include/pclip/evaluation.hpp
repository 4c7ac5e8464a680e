#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pclip/anchor_bank.hpp"
#include "pclip/embedding_store.hpp"
#include "pclip/inference.hpp"

namespace pclip {

/// Which combination conditioned mode fixes for each image.
///   correct: the ground-truth values from the bundle metadata
///   wrong:   every attribute shifted to its next value (cyclically)
///   random:  a uniformly random combination (seeded per row)
enum class ConditionSource { correct, wrong, random };

struct RunOptions {
  InferenceConfig inference;
  ConditionSource condition = ConditionSource::correct;
  std::uint64_t seed = 0;
  int threads = 0;            // 0 = OpenMP default, 1 = serial kernels
  std::size_t chunk_rows = 256;
  bool ablation = false;      // echoed in reports
  std::vector<std::string> group_attributes;  // empty = every attribute in the metadata
};

/// Streams predictions in row order, one chunk at a time.
using PredictionSink = std::function<void(std::size_t first_row, std::span<const Prediction>)>;
void predict_stream(const EmbeddingSet& images, const AnchorBank& bank, const RunOptions& options,
                    const PredictionSink& sink);
std::vector<Prediction> predict_all(const EmbeddingSet& images, const AnchorBank& bank, const RunOptions& options);

/// Combination index each row is conditioned on (conditioned mode only).
std::vector<std::size_t> conditioning_combos(const EmbeddingSet& images, const AttributeSchema& schema,
                                             ConditionSource source, std::uint64_t seed);

struct GroupKey {
  std::size_t class_id = 0;
  std::vector<std::string> values;  // one per group attribute, in report order

  auto operator<=>(const GroupKey&) const = default;
};

struct GroupStats {
  std::size_t size = 0;
  std::size_t correct = 0;
  double accuracy() const { return size == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(size); }
};

struct EvaluationReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  double top1_accuracy = 0.0;
  std::vector<std::string> group_attributes;
  std::map<GroupKey, GroupStats> groups;  // non-empty groups only
  std::optional<double> average_accuracy;
  std::optional<double> worst_group_accuracy;
  std::optional<double> gap;
  std::map<std::string, double> attribute_inference_accuracy;
  std::vector<std::string> warnings;
  nlohmann::ordered_json config;  // echo of mode, estimator, tau, schema hash, ...
};

EvaluationReport evaluate(const EmbeddingSet& images, const AnchorBank& bank, const RunOptions& options);

/// Fraction of rows whose inferred combination recovers each attribute's
/// ground-truth value.
std::map<std::string, double> evaluate_attribute_inference(const EmbeddingSet& images, const AnchorBank& bank,
                                                           Estimator estimator, int threads = 0);

using BankBuilder = std::function<AnchorBank(const AttributeSchema&)>;

struct AblationResult {
  EvaluationReport real;
  EvaluationReport randomized;
};

/// Evaluates with `schema` and with randomize_descriptions(schema, seed).
AblationResult run_ablation(const EmbeddingSet& images, const AttributeSchema& schema, const BankBuilder& build,
                            const RunOptions& options, std::uint64_t seed);

/// Rounds to 9 significant digits, the precision used in every JSON output.
double round_sig9(double value);
nlohmann::ordered_json to_json(const EvaluationReport& report);
std::string render_table(const EvaluationReport& report);

std::string_view to_string(ConditionSource source);
ConditionSource parse_condition(std::string_view text);

}  // namespace pclip
