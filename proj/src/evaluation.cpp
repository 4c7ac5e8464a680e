#include "pclip/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <random>
#include <set>
#include <sstream>

#include <omp.h>

#include "pclip/kernels.hpp"

namespace pclip {

namespace {

std::uint64_t row_seed(std::uint64_t seed, std::size_t row) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (row + 1));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const AnchorSet& require_anchors(const std::optional<AnchorSet>& anchors, const char* what, std::size_t dim) {
  if (!anchors) throw DataError(std::string("anchor bank has no ") + what + " anchors");
  if (anchors->dim() != dim) {
    throw DataError(std::string(what) + " anchors have dim " + std::to_string(anchors->dim()) +
                    ", images have dim " + std::to_string(dim));
  }
  return *anchors;
}

// Scores `images` against `anchors` (and optional placeholder anchors) in
// chunks, then calls fn(row, scores, agnostic) for every row of the chunk
// in parallel. after_chunk(first, count) runs serially after each chunk.
template <typename RowFn, typename ChunkFn>
void for_each_scored_row(const EmbeddingMatrix& images, const AnchorSet& anchors, const AnchorSet* placeholder,
                         int threads, std::size_t chunk_rows, RowFn&& fn, ChunkFn&& after_chunk) {
  const auto dim = images.dim;
  const auto per_image = anchors.size();
  const auto per_agnostic = placeholder ? placeholder->size() : 0;
  chunk_rows = std::max<std::size_t>(chunk_rows, 1);
  std::vector<double> scores(chunk_rows * per_image);
  std::vector<double> agnostic(chunk_rows * per_agnostic);

  for (std::size_t first = 0; first < images.rows(); first += chunk_rows) {
    const auto count = std::min(chunk_rows, images.rows() - first);
    const std::span<const float> block(images.data.data() + first * dim, count * dim);
    if (threads == 1) {
      kernels::score_batch_serial(block, anchors, scores);
      if (placeholder) kernels::score_batch_serial(block, *placeholder, agnostic);
    } else {
      kernels::score_batch_parallel(block, anchors, scores, threads);
      if (placeholder) kernels::score_batch_parallel(block, *placeholder, agnostic, threads);
    }

    std::exception_ptr failure;
    const auto n = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(static) num_threads(threads == 1 ? 1 : kernels::resolve_threads(threads))
    for (std::int64_t i = 0; i < n; ++i) {
      const auto local = static_cast<std::size_t>(i);
      try {
        ScoreMatrix row_scores(anchors.classes(), anchors.combos(),
                               std::vector<double>(scores.begin() + local * per_image,
                                                   scores.begin() + (local + 1) * per_image));
        const std::span<const double> row_agnostic(agnostic.data() + local * per_agnostic, per_agnostic);
        fn(first + local, row_scores, row_agnostic);
      } catch (...) {
#pragma omp critical(pclip_row_failure)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
    after_chunk(first, count);
  }
}

std::size_t value_index(const ContextualAttribute& attr, const std::string& value, const std::string& row_id) {
  for (std::size_t v = 0; v < attr.values.size(); ++v) {
    if (attr.values[v].name == value) return v;
  }
  throw DataError("row '" + row_id + "': value '" + value + "' is not a value of attribute '" + attr.name + "'");
}

const std::string& group_value(const EmbeddingSet& images, std::size_t row, const std::string& attribute) {
  const auto& id = images.matrix.ids[row];
  if (!images.meta.has_groups() || !images.meta.groups[row]) {
    throw DataError("row '" + id + "': no attribute metadata");
  }
  const auto& groups = *images.meta.groups[row];
  auto it = groups.find(attribute);
  if (it == groups.end()) throw DataError("row '" + id + "': attribute '" + attribute + "' absent from metadata");
  return it->second;
}

nlohmann::ordered_json config_echo(const AnchorBank& bank, const RunOptions& options) {
  const auto& inf = options.inference;
  nlohmann::ordered_json config;
  config["mode"] = to_string(inf.mode);
  config["estimator"] = to_string(inf.estimator);
  config["tau"] = inf.temperature;
  config["tau_placement"] = to_string(inf.placement);
  if (inf.mode == Mode::conditioned) {
    config["condition"] = to_string(options.condition);
    config["seed"] = options.seed;
  }
  config["schema_hash"] = schema_fingerprint(bank.schema);
  config["ablation"] = options.ablation;
  config["sampled_description_combinations"] = bank.sampled_combinations;
  return config;
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
  return buf;
}

}  // namespace

std::vector<std::size_t> conditioning_combos(const EmbeddingSet& images, const AttributeSchema& schema,
                                             ConditionSource source, std::uint64_t seed) {
  const auto rows = images.matrix.rows();
  std::vector<std::size_t> out(rows);
  const auto combos = schema.combination_count();
  for (std::size_t r = 0; r < rows; ++r) {
    if (source == ConditionSource::random) {
      std::mt19937_64 rng(row_seed(seed, r));
      out[r] = std::uniform_int_distribution<std::size_t>(0, combos - 1)(rng);
      continue;
    }
    AttributeCombination combo{std::vector<std::size_t>(schema.attributes.size())};
    for (std::size_t a = 0; a < schema.attributes.size(); ++a) {
      const auto& attr = schema.attributes[a];
      auto v = value_index(attr, group_value(images, r, attr.name), images.matrix.ids[r]);
      if (source == ConditionSource::wrong) v = (v + 1) % attr.values.size();
      combo.value_indices[a] = v;
    }
    out[r] = combination_index(schema, combo);
  }
  return out;
}

void predict_stream(const EmbeddingSet& images, const AnchorBank& bank, const RunOptions& options,
                    const PredictionSink& sink) {
  const auto& inf = options.inference;
  inf.validate();
  const auto dim = images.matrix.dim;
  std::vector<Prediction> chunk(std::max<std::size_t>(options.chunk_rows, 1));
  auto emit = [&](std::size_t first, std::size_t count) { sink(first, std::span<const Prediction>(chunk.data(), count)); };
  auto run = [&](const AnchorSet& anchors, const AnchorSet* placeholder, auto&& predict) {
    for_each_scored_row(
        images.matrix, anchors, placeholder, options.threads, options.chunk_rows,
        [&](std::size_t row, const ScoreMatrix& scores, std::span<const double> agnostic) {
          chunk[row % chunk.size()] = predict(row, scores, agnostic);
        },
        emit);
  };

  switch (inf.mode) {
    case Mode::simple:
      run(require_anchors(bank.base, "base", dim), nullptr,
          [](std::size_t, const ScoreMatrix& s, std::span<const double>) { return conditioned_predict(s, 0); });
      break;
    case Mode::ensemble:
      run(require_anchors(bank.ensemble, "ensemble", dim), nullptr,
          [](std::size_t, const ScoreMatrix& s, std::span<const double>) { return conditioned_predict(s, 0); });
      break;
    case Mode::conditioned: {
      const auto combos = conditioning_combos(images, bank.schema, options.condition, options.seed);
      run(require_anchors(bank.attribute, "attribute", dim), nullptr,
          [&](std::size_t row, const ScoreMatrix& s, std::span<const double>) {
            return conditioned_predict(s, combos[row]);
          });
      break;
    }
    case Mode::one_step:
      run(require_anchors(bank.attribute, "attribute", dim), nullptr,
          [](std::size_t, const ScoreMatrix& s, std::span<const double>) { return one_step_predict(s); });
      break;
    case Mode::two_step: {
      const AnchorSet* placeholder = nullptr;
      if (inf.estimator == Estimator::pure_attr) placeholder = &require_anchors(bank.placeholder, "placeholder", dim);
      run(require_anchors(bank.attribute, "attribute", dim), placeholder,
          [&](std::size_t, const ScoreMatrix& s, std::span<const double> agnostic) {
            return two_step_predict(s, inf, agnostic);
          });
      break;
    }
  }
}

std::vector<Prediction> predict_all(const EmbeddingSet& images, const AnchorBank& bank, const RunOptions& options) {
  std::vector<Prediction> out(images.matrix.rows());
  predict_stream(images, bank, options, [&](std::size_t first, std::span<const Prediction> chunk) {
    std::copy(chunk.begin(), chunk.end(), out.begin() + static_cast<std::ptrdiff_t>(first));
  });
  return out;
}

std::map<std::string, double> evaluate_attribute_inference(const EmbeddingSet& images, const AnchorBank& bank,
                                                           Estimator estimator, int threads) {
  const auto dim = images.matrix.dim;
  const auto& anchors = require_anchors(bank.attribute, "attribute", dim);
  const AnchorSet* placeholder = nullptr;
  if (estimator == Estimator::pure_attr) placeholder = &require_anchors(bank.placeholder, "placeholder", dim);
  const auto& schema = bank.schema;
  const auto rows = images.matrix.rows();

  // ground truth first, so a missing attribute fails before any scoring
  std::vector<std::vector<std::size_t>> truth(rows, std::vector<std::size_t>(schema.attributes.size()));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t a = 0; a < schema.attributes.size(); ++a) {
      const auto& attr = schema.attributes[a];
      truth[r][a] = value_index(attr, group_value(images, r, attr.name), images.matrix.ids[r]);
    }
  }

  std::vector<std::size_t> inferred(rows);
  for_each_scored_row(
      images.matrix, anchors, placeholder, threads, 256,
      [&](std::size_t row, const ScoreMatrix& scores, std::span<const double> agnostic) {
        inferred[row] = infer_attributes(scores, estimator, agnostic);
      },
      [](std::size_t, std::size_t) {});

  std::map<std::string, double> out;
  for (std::size_t a = 0; a < schema.attributes.size(); ++a) {
    std::size_t hits = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      if (combination_at(schema, inferred[r]).value_indices[a] == truth[r][a]) ++hits;
    }
    out[schema.attributes[a].name] = rows == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(rows);
  }
  return out;
}

EvaluationReport evaluate(const EmbeddingSet& images, const AnchorBank& bank, const RunOptions& options) {
  const auto rows = images.matrix.rows();
  const auto classes = bank.schema.classes.size();
  if (!images.meta.has_labels()) throw DataError("bundle has no labels; evaluation needs labels");
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& label = images.meta.labels[r];
    if (!label) throw DataError("row '" + images.matrix.ids[r] + "': missing label");
    if (*label >= classes) {
      throw DataError("row '" + images.matrix.ids[r] + "': label " + std::to_string(*label) +
                      " is not a class of the schema");
    }
  }

  EvaluationReport report;
  report.config = config_echo(bank, options);
  report.total = rows;

  std::vector<std::size_t> predicted(rows);
  predict_stream(images, bank, options, [&](std::size_t first, std::span<const Prediction> chunk) {
    for (std::size_t i = 0; i < chunk.size(); ++i) predicted[first + i] = chunk[i].class_id;
  });
  for (std::size_t r = 0; r < rows; ++r) {
    if (predicted[r] == *images.meta.labels[r]) ++report.correct;
  }
  report.top1_accuracy = rows == 0 ? 0.0 : static_cast<double>(report.correct) / static_cast<double>(rows);

  // Group robustness over (class x group attribute values).
  if (images.meta.has_groups()) {
    report.group_attributes = options.group_attributes;
    if (report.group_attributes.empty()) {
      for (const auto& g : images.meta.groups) {
        if (!g) continue;
        for (const auto& [name, value] : *g) report.group_attributes.push_back(name);
        break;
      }
    }
    std::vector<std::set<std::string>> value_sets(report.group_attributes.size());
    for (std::size_t a = 0; a < report.group_attributes.size(); ++a) {
      const auto& name = report.group_attributes[a];
      for (const auto& attr : bank.schema.attributes) {
        if (attr.name != name) continue;
        for (const auto& v : attr.values) value_sets[a].insert(v.name);
      }
    }

    std::size_t skipped = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      GroupKey key{*images.meta.labels[r], {}};
      const auto& g = images.meta.groups[r];
      for (const auto& name : report.group_attributes) {
        if (!g || !g->contains(name)) break;
        key.values.push_back(g->at(name));
      }
      if (key.values.size() != report.group_attributes.size()) {
        ++skipped;
        continue;
      }
      for (std::size_t a = 0; a < key.values.size(); ++a) value_sets[a].insert(key.values[a]);
      auto& stats = report.groups[key];
      ++stats.size;
      if (predicted[r] == key.class_id) ++stats.correct;
    }
    if (skipped > 0) {
      report.warnings.push_back(std::to_string(skipped) + " rows lack group metadata and are excluded from group metrics");
    }

    // enumerate the full (class x values) grid to report empty groups
    std::vector<GroupKey> grid;
    for (std::size_t c = 0; c < classes; ++c) grid.push_back({c, {}});
    for (const auto& values : value_sets) {
      std::vector<GroupKey> next;
      for (const auto& key : grid) {
        for (const auto& v : values) {
          auto extended = key;
          extended.values.push_back(v);
          next.push_back(std::move(extended));
        }
      }
      grid = std::move(next);
    }
    for (const auto& key : grid) {
      if (report.groups.contains(key)) continue;
      std::string label = "empty group excluded from worst-group: class " + std::to_string(key.class_id);
      for (std::size_t a = 0; a < key.values.size(); ++a) {
        label += ", " + report.group_attributes[a] + "=" + key.values[a];
      }
      report.warnings.push_back(std::move(label));
    }

    if (!report.groups.empty()) {
      double worst = 1.0;
      for (const auto& [key, stats] : report.groups) worst = std::min(worst, stats.accuracy());
      report.average_accuracy = report.top1_accuracy;
      report.worst_group_accuracy = worst;
      report.gap = report.top1_accuracy - worst;
    }
  }

  // Attribute inference, for the schema attributes every row carries.
  if (bank.attribute && images.meta.has_groups() && !bank.schema.attributes.empty() &&
      (options.inference.estimator == Estimator::class_attr || bank.placeholder)) {
    const bool complete = std::all_of(images.meta.groups.begin(), images.meta.groups.end(), [&](const auto& g) {
      return g && std::all_of(bank.schema.attributes.begin(), bank.schema.attributes.end(),
                              [&](const auto& attr) { return g->contains(attr.name); });
    });
    if (complete) {
      report.attribute_inference_accuracy =
          evaluate_attribute_inference(images, bank, options.inference.estimator, options.threads);
    }
  }
  return report;
}

AblationResult run_ablation(const EmbeddingSet& images, const AttributeSchema& schema, const BankBuilder& build,
                            const RunOptions& options, std::uint64_t seed) {
  AblationResult result;
  result.real = evaluate(images, build(schema), options);
  auto randomized_options = options;
  randomized_options.ablation = true;
  result.randomized = evaluate(images, build(randomize_descriptions(schema, seed)), randomized_options);
  result.randomized.config["ablation_seed"] = seed;
  return result;
}

double round_sig9(double value) {
  if (!std::isfinite(value) || value == 0.0) return value;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return std::strtod(buf, nullptr);
}

nlohmann::ordered_json to_json(const EvaluationReport& report) {
  nlohmann::ordered_json out;
  out["config"] = report.config;
  out["total"] = report.total;
  out["correct"] = report.correct;
  out["top1_accuracy"] = round_sig9(report.top1_accuracy);
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(round_sig9(*v)) : nlohmann::ordered_json(nullptr);
  };
  out["average_accuracy"] = opt(report.average_accuracy);
  out["worst_group_accuracy"] = opt(report.worst_group_accuracy);
  out["gap"] = opt(report.gap);
  out["group_attributes"] = report.group_attributes;
  auto groups = nlohmann::ordered_json::array();
  for (const auto& [key, stats] : report.groups) {
    nlohmann::ordered_json g;
    g["class_id"] = key.class_id;
    nlohmann::ordered_json values = nlohmann::ordered_json::object();
    for (std::size_t a = 0; a < key.values.size(); ++a) values[report.group_attributes[a]] = key.values[a];
    g["values"] = std::move(values);
    g["size"] = stats.size;
    g["correct"] = stats.correct;
    g["accuracy"] = round_sig9(stats.accuracy());
    groups.push_back(std::move(g));
  }
  out["groups"] = std::move(groups);
  nlohmann::ordered_json inference = nlohmann::ordered_json::object();
  for (const auto& [name, acc] : report.attribute_inference_accuracy) inference[name] = round_sig9(acc);
  out["attribute_inference_accuracy"] = std::move(inference);
  out["warnings"] = report.warnings;
  return out;
}

std::string render_table(const EvaluationReport& report) {
  std::ostringstream out;
  const auto mode = report.config.value("mode", std::string("?"));
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %8s %8s %8s %8s\n", "", "Top-1", "Avg", "Worst", "Gap");
  out << line;
  auto cell = [](const std::optional<double>& v) { return v ? percent(*v) : std::string("-"); };
  std::snprintf(line, sizeof line, "%-14s %8s %8s %8s %8s\n", mode.c_str(), percent(report.top1_accuracy).c_str(),
                cell(report.average_accuracy).c_str(), cell(report.worst_group_accuracy).c_str(),
                cell(report.gap).c_str());
  out << line;
  if (!report.groups.empty()) {
    out << "\ngroup (class";
    for (const auto& name : report.group_attributes) out << ", " << name;
    out << ")\n";
    for (const auto& [key, stats] : report.groups) {
      std::string label = std::to_string(key.class_id);
      for (const auto& v : key.values) label += ", " + v;
      std::snprintf(line, sizeof line, "  %-30s %6zu %8s\n", label.c_str(), stats.size, percent(stats.accuracy()).c_str());
      out << line;
    }
  }
  if (!report.attribute_inference_accuracy.empty()) {
    out << "\nattribute inference\n";
    for (const auto& [name, acc] : report.attribute_inference_accuracy) {
      std::snprintf(line, sizeof line, "  %-30s %8s\n", name.c_str(), percent(acc).c_str());
      out << line;
    }
  }
  for (const auto& w : report.warnings) out << "warning: " << w << '\n';
  return out.str();
}

std::string_view to_string(ConditionSource source) {
  switch (source) {
    case ConditionSource::correct: return "correct";
    case ConditionSource::wrong: return "wrong";
    case ConditionSource::random: return "random";
  }
  return "unknown";
}

ConditionSource parse_condition(std::string_view text) {
  if (text == "correct") return ConditionSource::correct;
  if (text == "wrong") return ConditionSource::wrong;
  if (text == "random") return ConditionSource::random;
  throw InferenceError("unknown condition source '" + std::string(text) + "'");
}

}  // namespace pclip
