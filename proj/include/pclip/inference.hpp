#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "pclip/scoring.hpp"

namespace pclip {

class InferenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// How p(z|x) is estimated: ClassAttr sums exponentiated class-aware scores
/// over classes; PureAttr uses class-agnostic placeholder scores CLIP(z; x).
enum class Estimator { class_attr, pure_attr };

enum class Mode { simple, ensemble, conditioned, one_step, two_step };

/// Where the step-1 temperature enters the ClassAttr estimate.
///   inside_class_sum: p(z|x) ∝ Σ_y exp(S(y,z)/τ)   (default)
///   after_class_sum:  p(z|x) ∝ (Σ_y exp(S(y,z)))^(1/τ)
enum class TemperaturePlacement { inside_class_sum, after_class_sum };

struct InferenceConfig {
  double temperature = 1.0;
  Estimator estimator = Estimator::class_attr;
  Mode mode = Mode::two_step;
  TemperaturePlacement placement = TemperaturePlacement::inside_class_sum;

  void validate() const;
};

enum class PosteriorKind { joint, class_given_attrs, attrs_given_image };

struct PosteriorTable {
  PosteriorKind kind = PosteriorKind::joint;
  std::optional<Estimator> estimator;  // set for attrs_given_image
  std::vector<double> values;          // joint: [class][combo]; others: 1-D
};

struct Prediction {
  std::size_t class_id = 0;
  std::vector<double> class_posterior;
  std::vector<double> attr_posterior;  // per combination; one-hot when conditioned
};

// Numerics. All use max-subtraction and double accumulation.
double log_sum_exp(std::span<const double> values);
std::vector<double> softmax(std::span<const double> logits);
/// Index of the largest element; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

PosteriorTable joint_posterior(const ScoreMatrix& scores);
PosteriorTable class_posterior(const ScoreMatrix& scores, std::size_t combo);
/// `agnostic` holds CLIP(z; x) per combination and is required for PureAttr.
PosteriorTable attr_posterior(const ScoreMatrix& scores, Estimator estimator, double temperature,
                              std::span<const double> agnostic = {},
                              TemperaturePlacement placement = TemperaturePlacement::inside_class_sum);

Prediction conditioned_predict(const ScoreMatrix& scores, std::size_t combo);
/// Most probable combination index under attr_posterior at τ = 1.
std::size_t infer_attributes(const ScoreMatrix& scores, Estimator estimator, std::span<const double> agnostic = {});
Prediction two_step_predict(const ScoreMatrix& scores, const InferenceConfig& config,
                            std::span<const double> agnostic = {});
Prediction one_step_predict(const ScoreMatrix& scores);

std::string_view to_string(Estimator estimator);
std::string_view to_string(Mode mode);
std::string_view to_string(TemperaturePlacement placement);
Estimator parse_estimator(std::string_view text);
Mode parse_mode(std::string_view text);
TemperaturePlacement parse_placement(std::string_view text);

}  // namespace pclip
