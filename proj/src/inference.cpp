#include "pclip/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace pclip {

namespace {

void require_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw InferenceError("non-finite score");
  }
}

void require_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InferenceError("temperature must be a positive finite number, got " + std::to_string(temperature));
  }
}

void require_combo(const ScoreMatrix& scores, std::size_t combo) {
  if (combo >= scores.combos()) {
    throw InferenceError("combination index " + std::to_string(combo) + " out of range (" +
                         std::to_string(scores.combos()) + " combinations)");
  }
}

std::vector<double> column(const ScoreMatrix& scores, std::size_t combo) {
  std::vector<double> out(scores.classes());
  for (std::size_t c = 0; c < scores.classes(); ++c) out[c] = scores.at(c, combo);
  return out;
}

// Per-combo step-1 logits for ClassAttr.
std::vector<double> class_attr_logits(const ScoreMatrix& scores, double temperature,
                                      TemperaturePlacement placement) {
  std::vector<double> logits(scores.combos());
  std::vector<double> col(scores.classes());
  for (std::size_t z = 0; z < scores.combos(); ++z) {
    for (std::size_t c = 0; c < scores.classes(); ++c) {
      col[c] = placement == TemperaturePlacement::inside_class_sum ? scores.at(c, z) / temperature
                                                                   : scores.at(c, z);
    }
    logits[z] = log_sum_exp(col);
    if (placement == TemperaturePlacement::after_class_sum) logits[z] /= temperature;
  }
  return logits;
}

}  // namespace

void InferenceConfig::validate() const { require_temperature(temperature); }

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw InferenceError("log-sum-exp of an empty set");
  require_finite(values);
  const double peak = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - peak);
  return peak + std::log(sum);
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw InferenceError("softmax of an empty set");
  require_finite(logits);
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw InferenceError("argmax of an empty set");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

PosteriorTable joint_posterior(const ScoreMatrix& scores) {
  return {PosteriorKind::joint, std::nullopt, softmax(scores.values())};
}

PosteriorTable class_posterior(const ScoreMatrix& scores, std::size_t combo) {
  require_combo(scores, combo);
  return {PosteriorKind::class_given_attrs, std::nullopt, softmax(column(scores, combo))};
}

PosteriorTable attr_posterior(const ScoreMatrix& scores, Estimator estimator, double temperature,
                              std::span<const double> agnostic, TemperaturePlacement placement) {
  require_temperature(temperature);
  require_finite(scores.values());
  if (estimator == Estimator::class_attr) {
    return {PosteriorKind::attrs_given_image, estimator, softmax(class_attr_logits(scores, temperature, placement))};
  }
  if (agnostic.size() != scores.combos()) {
    throw InferenceError("PureAttr needs one class-agnostic score per combination (got " +
                         std::to_string(agnostic.size()) + ", expected " + std::to_string(scores.combos()) + ")");
  }
  std::vector<double> logits(agnostic.begin(), agnostic.end());
  for (auto& v : logits) v /= temperature;
  return {PosteriorKind::attrs_given_image, estimator, softmax(logits)};
}

Prediction conditioned_predict(const ScoreMatrix& scores, std::size_t combo) {
  require_combo(scores, combo);
  const auto raw = column(scores, combo);
  Prediction out;
  out.class_id = argmax(raw);  // softmax is monotone, raw argmax is the posterior argmax
  out.class_posterior = softmax(raw);
  out.attr_posterior.assign(scores.combos(), 0.0);
  out.attr_posterior[combo] = 1.0;
  return out;
}

std::size_t infer_attributes(const ScoreMatrix& scores, Estimator estimator, std::span<const double> agnostic) {
  return argmax(attr_posterior(scores, estimator, 1.0, agnostic).values);
}

Prediction two_step_predict(const ScoreMatrix& scores, const InferenceConfig& config,
                            std::span<const double> agnostic) {
  config.validate();
  Prediction out;
  out.attr_posterior =
      attr_posterior(scores, config.estimator, config.temperature, agnostic, config.placement).values;
  out.class_posterior.assign(scores.classes(), 0.0);
  for (std::size_t z = 0; z < scores.combos(); ++z) {
    const auto given = softmax(column(scores, z));  // step 2 is temperature-free
    const double weight = out.attr_posterior[z];
    for (std::size_t c = 0; c < scores.classes(); ++c) out.class_posterior[c] += given[c] * weight;
  }
  out.class_id = argmax(out.class_posterior);
  return out;
}

Prediction one_step_predict(const ScoreMatrix& scores) {
  require_finite(scores.values());
  std::vector<double> aggregate(scores.classes());
  for (std::size_t c = 0; c < scores.classes(); ++c) {
    aggregate[c] = log_sum_exp(scores.values().subspan(c * scores.combos(), scores.combos()));
  }
  Prediction out;
  out.class_id = argmax(aggregate);
  out.class_posterior = softmax(aggregate);
  out.attr_posterior = softmax(class_attr_logits(scores, 1.0, TemperaturePlacement::inside_class_sum));
  return out;
}

std::string_view to_string(Estimator estimator) {
  return estimator == Estimator::class_attr ? "classattr" : "pureattr";
}

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::simple: return "simple";
    case Mode::ensemble: return "ensemble";
    case Mode::conditioned: return "conditioned";
    case Mode::one_step: return "one-step";
    case Mode::two_step: return "two-step";
  }
  return "unknown";
}

std::string_view to_string(TemperaturePlacement placement) {
  return placement == TemperaturePlacement::inside_class_sum ? "inside" : "after";
}

Estimator parse_estimator(std::string_view text) {
  if (text == "classattr") return Estimator::class_attr;
  if (text == "pureattr") return Estimator::pure_attr;
  throw InferenceError("unknown estimator '" + std::string(text) + "'");
}

Mode parse_mode(std::string_view text) {
  for (auto mode : {Mode::simple, Mode::ensemble, Mode::conditioned, Mode::one_step, Mode::two_step}) {
    if (text == to_string(mode)) return mode;
  }
  throw InferenceError("unknown mode '" + std::string(text) + "'");
}

TemperaturePlacement parse_placement(std::string_view text) {
  if (text == "inside") return TemperaturePlacement::inside_class_sum;
  if (text == "after") return TemperaturePlacement::after_class_sum;
  throw InferenceError("unknown temperature placement '" + std::string(text) + "'");
}

}  // namespace pclip
