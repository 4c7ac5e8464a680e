// pclip: attribute-conditioned zero-shot classification over precomputed embeddings.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pclip/anchor_bank.hpp"
#include "pclip/embedding_store.hpp"
#include "pclip/evaluation.hpp"
#include "pclip/inference.hpp"
#include "pclip/schema.hpp"
#include "pclip/synthetic.hpp"
#include "pclip/text_hash_encoder.hpp"

namespace {

using namespace pclip;

constexpr int kUsageError = 1;
constexpr int kDataError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string schema_path;
  std::string bundle_dir;
  std::string text_bundle_dir;
  std::string out_path;
  std::string mode = "two-step";
  std::string estimator = "classattr";
  std::string placement = "inside";
  std::string condition;
  std::string format = "json";
  double tau = 1.0;
  bool true_attrs = false;
  std::uint64_t seed = 0;
  int threads = 0;
  std::vector<std::string> attrs;
  std::string classes_path;
  std::vector<std::string> group_attrs;
  std::size_t hash_encoder_dim = 0;
  std::uint64_t encoder_seed = 0;
};

void add_run_flags(CLI::App* cmd, Options& o, bool with_mode) {
  cmd->add_option("--schema", o.schema_path, "Attribute schema JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--bundle", o.bundle_dir, "Image embedding bundle directory")->required()->check(CLI::ExistingDirectory);
  cmd->add_option("--text-bundle", o.text_bundle_dir, "Text embedding bundle keyed by prompt id")
      ->check(CLI::ExistingDirectory);
  cmd->add_option("--hash-encoder", o.hash_encoder_dim, "Encode prompts with the toy hash encoder of this dim");
  cmd->add_option("--encoder-seed", o.encoder_seed, "Seed of the hash encoder");
  cmd->add_option("--threads", o.threads, "Worker threads (0 = default, 1 = serial)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--attrs", o.attrs, "Use only these attributes (comma separated)")->delimiter(',');
  cmd->add_option("--classes", o.classes_path, "Class names, one per line, replacing the schema's")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out_path, "Output path (default stdout)");
  cmd->add_option("--estimator", o.estimator, "Attribute estimator")->check(CLI::IsMember({"classattr", "pureattr"}));
  if (with_mode) {
    cmd->add_option("--mode", o.mode, "Inference mode")
        ->check(CLI::IsMember({"simple", "ensemble", "conditioned", "one-step", "two-step"}));
    cmd->add_option("--tau", o.tau, "Step-1 temperature");
    cmd->add_option("--tau-placement", o.placement, "Where tau enters ClassAttr")
        ->check(CLI::IsMember({"inside", "after"}));
    cmd->add_flag("--true-attrs", o.true_attrs, "Condition on ground-truth attributes (conditioned mode)");
    cmd->add_option("--condition", o.condition, "Conditioning source for conditioned mode")
        ->check(CLI::IsMember({"correct", "wrong", "random"}));
    cmd->add_option("--seed", o.seed, "Seed for random conditioning");
  }
}

RunOptions run_options(const Options& o) {
  RunOptions run;
  run.inference.mode = parse_mode(o.mode);
  run.inference.estimator = parse_estimator(o.estimator);
  run.inference.placement = parse_placement(o.placement);
  run.inference.temperature = o.tau;
  try {
    run.inference.validate();
  } catch (const InferenceError& e) {
    throw UsageError(std::string("--tau: ") + e.what());
  }
  if ((o.true_attrs || !o.condition.empty()) && run.inference.mode != Mode::conditioned) {
    throw UsageError("--true-attrs and --condition require --mode conditioned");
  }
  if (o.true_attrs && !o.condition.empty() && o.condition != "correct") {
    throw UsageError("--true-attrs conflicts with --condition " + o.condition);
  }
  if (!o.condition.empty()) run.condition = parse_condition(o.condition);
  run.seed = o.seed;
  run.threads = o.threads;
  run.group_attributes = o.group_attrs;
  return run;
}

std::vector<std::string> read_class_names(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) names.push_back(line);
  }
  return names;
}

AttributeSchema load_selected_schema(const Options& o) {
  auto schema = load_schema(o.schema_path);
  if (!o.classes_path.empty()) schema = with_classes(schema, read_class_names(o.classes_path));
  if (!o.attrs.empty()) schema = select_attributes(schema, o.attrs);
  return schema;
}

BankOptions bank_options(const RunOptions& run) {
  BankOptions b;
  b.attribute = run.inference.mode == Mode::conditioned || run.inference.mode == Mode::one_step ||
                run.inference.mode == Mode::two_step;
  b.base = run.inference.mode == Mode::simple;
  b.ensemble = run.inference.mode == Mode::ensemble;
  b.placeholder = run.inference.estimator == Estimator::pure_attr && b.attribute;
  b.anchors.threads = run.threads;
  return b;
}

// Text rows come from a text bundle or, with --hash-encoder, are encoded on demand.
struct TextSource {
  std::optional<EmbeddingMatrix> texts;
  std::optional<HashTextEncoder> encoder;

  AnchorBank bank(const AttributeSchema& schema, const BankOptions& options) const {
    if (encoder) return build_bank(encoder->encode_manifest(bank_manifest(schema, options)), schema, options);
    return build_bank(*texts, schema, options);
  }
};

TextSource text_source(const Options& o) {
  TextSource src;
  if (o.hash_encoder_dim > 0) {
    if (!o.text_bundle_dir.empty()) throw UsageError("--text-bundle and --hash-encoder are mutually exclusive");
    src.encoder.emplace(o.hash_encoder_dim, o.encoder_seed);
  } else {
    if (o.text_bundle_dir.empty()) throw UsageError("one of --text-bundle or --hash-encoder is required");
    src.texts = load_normalized(o.text_bundle_dir).matrix;
  }
  return src;
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty()) return;
    file_.open(path, std::ios::binary | std::ios::trunc);
    if (!file_) throw DataError(path + ": cannot open for writing");
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }
  void finish(const std::string& path) {
    stream().flush();
    if (!stream()) throw DataError((path.empty() ? std::string("stdout") : path) + ": write failed");
  }

 private:
  std::ofstream file_;
};

nlohmann::ordered_json rounded(const std::vector<double>& values) {
  auto out = nlohmann::ordered_json::array();
  for (double v : values) out.push_back(round_sig9(v));
  return out;
}

int cmd_render(const Options& o, bool with_base, bool with_placeholder, std::optional<std::uint64_t> randomize_seed) {
  auto schema = load_selected_schema(o);
  if (randomize_seed) schema = randomize_descriptions(schema, *randomize_seed);
  BankOptions b;
  b.base = with_base;
  b.placeholder = with_placeholder;
  Output out(o.out_path);
  write_manifest(out.stream(), bank_manifest(schema, b));
  out.finish(o.out_path);
  return 0;
}

int cmd_classify(const Options& o) {
  const auto run = run_options(o);
  const auto schema = load_selected_schema(o);
  const auto images = load_normalized(o.bundle_dir);
  const auto bank = text_source(o).bank(schema, bank_options(run));
  Output out(o.out_path);
  auto& os = out.stream();
  predict_stream(images, bank, run, [&](std::size_t first, std::span<const Prediction> chunk) {
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto& p = chunk[i];
      nlohmann::ordered_json line;
      line["id"] = images.matrix.ids[first + i];
      line["class_id"] = p.class_id;
      line["class"] = schema.classes.name(p.class_id);
      line["class_posterior"] = rounded(p.class_posterior);
      line["attr_posterior"] = rounded(p.attr_posterior);
      os << line.dump() << '\n';
    }
  });
  out.finish(o.out_path);
  return 0;
}

void write_report(const Options& o, const EvaluationReport& report) {
  Output out(o.out_path);
  if (o.format == "table") {
    out.stream() << render_table(report);
  } else {
    out.stream() << to_json(report).dump(2) << '\n';
  }
  out.finish(o.out_path);
}

int cmd_eval(const Options& o) {
  const auto run = run_options(o);
  const auto schema = load_selected_schema(o);
  const auto images = load_normalized(o.bundle_dir);
  const auto bank = text_source(o).bank(schema, bank_options(run));
  write_report(o, evaluate(images, bank, run));
  return 0;
}

int cmd_infer_attrs(const Options& o) {
  const auto estimator = parse_estimator(o.estimator);
  const auto schema = load_selected_schema(o);
  const auto images = load_normalized(o.bundle_dir);
  BankOptions b;
  b.placeholder = estimator == Estimator::pure_attr;
  b.anchors.threads = o.threads;
  const auto bank = text_source(o).bank(schema, b);
  nlohmann::ordered_json doc;
  doc["estimator"] = to_string(estimator);
  doc["schema_hash"] = schema_fingerprint(schema);
  doc["total"] = images.matrix.rows();
  nlohmann::ordered_json acc = nlohmann::ordered_json::object();
  for (const auto& [name, value] : evaluate_attribute_inference(images, bank, estimator, o.threads)) {
    acc[name] = round_sig9(value);
  }
  doc["accuracy"] = std::move(acc);
  Output out(o.out_path);
  out.stream() << doc.dump(2) << '\n';
  out.finish(o.out_path);
  return 0;
}

int cmd_ablate(const Options& o, std::uint64_t randomize_seed) {
  const auto run = run_options(o);
  const auto schema = load_selected_schema(o);
  const auto images = load_normalized(o.bundle_dir);
  const auto source = text_source(o);
  const auto options = bank_options(run);
  const auto result =
      run_ablation(images, schema, [&](const AttributeSchema& s) {
        try {
          return source.bank(s, options);
        } catch (const DataError& e) {
          if (o.hash_encoder_dim > 0 || &s == &schema) throw;
          throw DataError(std::string(e.what()) + " (the text bundle must also hold the prompts of render-prompts "
                          "--randomize-seed " + std::to_string(randomize_seed) + ")");
        }
      }, run, randomize_seed);
  Output out(o.out_path);
  if (o.format == "table") {
    out.stream() << "real descriptions\n" << render_table(result.real) << "\nrandomized descriptions\n"
                 << render_table(result.randomized);
  } else {
    nlohmann::ordered_json doc;
    doc["real"] = to_json(result.real);
    doc["randomized"] = to_json(result.randomized);
    out.stream() << doc.dump(2) << '\n';
  }
  out.finish(o.out_path);
  return 0;
}

int cmd_sweep_tau(const Options& o, const std::vector<double>& grid) {
  auto run = run_options(o);
  if (run.inference.mode != Mode::two_step) throw UsageError("sweep-tau runs --mode two-step only");
  const auto schema = load_selected_schema(o);
  const auto images = load_normalized(o.bundle_dir);
  const auto bank = text_source(o).bank(schema, bank_options(run));
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::ostringstream table;
  table << "tau        Top-1     Worst       Gap\n";
  for (double tau : grid) {
    run.inference.temperature = tau;
    try {
      run.inference.validate();
    } catch (const InferenceError& e) {
      throw UsageError(std::string("--grid: ") + e.what());
    }
    const auto report = evaluate(images, bank, run);
    nlohmann::ordered_json row;
    row["tau"] = tau;
    row["top1_accuracy"] = round_sig9(report.top1_accuracy);
    row["worst_group_accuracy"] =
        report.worst_group_accuracy ? nlohmann::ordered_json(round_sig9(*report.worst_group_accuracy)) : nullptr;
    row["gap"] = report.gap ? nlohmann::ordered_json(round_sig9(*report.gap)) : nullptr;
    rows.push_back(std::move(row));
    auto cell = [](const std::optional<double>& v) {
      char buf[16];
      if (!v) return std::string("-");
      std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
      return std::string(buf);
    };
    char line[96];
    std::snprintf(line, sizeof line, "%-6g %9.2f %9s %9s\n", tau, 100.0 * report.top1_accuracy,
                  cell(report.worst_group_accuracy).c_str(), cell(report.gap).c_str());
    table << line;
  }
  Output out(o.out_path);
  if (o.format == "table") {
    out.stream() << table.str();
  } else {
    nlohmann::ordered_json doc;
    doc["estimator"] = to_string(run.inference.estimator);
    doc["tau_placement"] = to_string(run.inference.placement);
    doc["schema_hash"] = schema_fingerprint(schema);
    doc["results"] = std::move(rows);
    out.stream() << doc.dump(2) << '\n';
  }
  out.finish(o.out_path);
  return 0;
}

struct SynthFlags {
  std::string out_dir;
  std::size_t images = 2000;
  bool text_pipeline = false;
  std::string schema_path;
  GenerativeSpec spec;
  TextPipelineSpec text;
};

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw DataError(path.string() + ": write failed");
}

int cmd_synth(SynthFlags& f, int threads) {
  const std::filesystem::path dir(f.out_dir);
  if (!f.text_pipeline) {
    const auto data = generate(f.spec, f.images, threads);
    save_bundle(data.images, dir / "images");
    save_bundle(EmbeddingSet{data.texts, {}}, dir / "texts");
    write_text_file(dir / "schema.json", to_json(data.schema).dump(2) + "\n");
    write_text_file(dir / "ground_truth.json", ground_truth_json(f.spec, data).dump(1) + "\n");
    return 0;
  }
  if (!f.schema_path.empty()) f.text.schema = load_schema(f.schema_path);
  f.text.noise = f.spec.noise;
  f.text.seed = f.spec.seed;
  const auto images = generate_text_images(f.text, f.images, threads);
  const HashTextEncoder encoder(f.text.encoder_dim, f.text.encoder_seed);
  BankOptions all;
  all.base = all.placeholder = all.ensemble = true;
  save_bundle(images, dir / "images");
  save_bundle(EmbeddingSet{encoder.encode_manifest(bank_manifest(f.text.schema, all)), {}}, dir / "texts");
  write_text_file(dir / "schema.json", to_json(f.text.schema).dump(2) + "\n");
  nlohmann::ordered_json truth;
  truth["encoder"] = {{"kind", "hash"}, {"dim", f.text.encoder_dim}, {"seed", f.text.encoder_seed}};
  truth["noise"] = f.text.noise;
  truth["seed"] = f.text.seed;
  truth["schema_hash"] = schema_fingerprint(f.text.schema);
  write_text_file(dir / "ground_truth.json", truth.dump(1) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribute-conditioned zero-shot classification over precomputed embeddings"};
  app.require_subcommand(1);
  Options o;

  auto* render = app.add_subcommand("render-prompts", "Schema to prompt manifest (JSONL)");
  bool with_base = false, with_placeholder = false;
  std::optional<std::uint64_t> randomize_seed;
  render->add_option("--schema", o.schema_path, "Attribute schema JSON")->required()->check(CLI::ExistingFile);
  render->add_option("--out", o.out_path, "Output path (default stdout)");
  render->add_option("--attrs", o.attrs, "Use only these attributes")->delimiter(',');
  render->add_option("--classes", o.classes_path, "Class names, one per line")->check(CLI::ExistingFile);
  render->add_flag("--with-base", with_base, "Also emit attribute-free prompts");
  render->add_flag("--with-placeholder", with_placeholder, "Also emit placeholder-class prompts");
  render->add_option("--randomize-seed", randomize_seed, "Replace descriptions by random strings");

  auto* classify = app.add_subcommand("classify", "Per-image predictions as JSONL");
  add_run_flags(classify, o, true);

  auto* eval = app.add_subcommand("eval", "Accuracy and group-robustness report");
  add_run_flags(eval, o, true);
  eval->add_option("--format", o.format, "json or table")->check(CLI::IsMember({"json", "table"}));
  eval->add_option("--group-attrs", o.group_attrs, "Group attributes for worst-group metrics")->delimiter(',');

  auto* infer = app.add_subcommand("infer-attrs", "Attribute-inference accuracy");
  add_run_flags(infer, o, false);

  auto* ablate = app.add_subcommand("ablate", "Real vs randomized descriptions");
  add_run_flags(ablate, o, true);
  std::uint64_t ablation_seed = 0;
  ablate->add_option("--randomize-seed", ablation_seed, "Seed of the randomized descriptions");
  ablate->add_option("--format", o.format, "json or table")->check(CLI::IsMember({"json", "table"}));

  auto* sweep = app.add_subcommand("sweep-tau", "Two-step accuracy over a temperature grid");
  add_run_flags(sweep, o, true);
  std::vector<double> grid = {1, 3, 5, 10};
  sweep->add_option("--grid", grid, "Temperatures")->delimiter(',');
  sweep->add_option("--format", o.format, "json or table")->check(CLI::IsMember({"json", "table"}));
  sweep->add_option("--group-attrs", o.group_attrs, "Group attributes for worst-group metrics")->delimiter(',');

  auto* synth = app.add_subcommand("synth", "Synthetic bundle with ground truth");
  SynthFlags sf;
  synth->add_option("--out", sf.out_dir, "Output directory")->required();
  synth->add_option("--images", sf.images, "Number of images");
  synth->add_option("--dim", sf.spec.dim, "Embedding dimension");
  synth->add_option("--classes", sf.spec.classes, "Number of classes");
  synth->add_option("--attribute-sizes", sf.spec.attribute_sizes, "Values per attribute")->delimiter(',');
  synth->add_option("--class-similarity", sf.spec.class_similarity, "Pairwise prototype cosine");
  synth->add_option("--gamma", sf.spec.attribute_strength, "Attribute offset magnitude");
  synth->add_option("--noise", sf.spec.noise, "Noise scale sigma");
  synth->add_option("--rho", sf.spec.spurious_correlation, "Spurious correlation strength");
  synth->add_option("--spurious-attribute", sf.spec.spurious_attribute, "Designated spurious attribute");
  synth->add_option("--spurious-alignment", sf.spec.spurious_alignment, "Offset lean towards the class at rho = 1");
  synth->add_option("--text-attribute-scale", sf.spec.text_attribute_scale, "Attribute weight in the anchors");
  synth->add_option("--anchor-leak", sf.spec.anchor_leak, "Leak of attr_0=v0 anchors towards the next class");
  synth->add_option("--seed", sf.spec.seed, "Seed");
  synth->add_flag("--text-pipeline", sf.text_pipeline, "Images from rendered prompts through the hash encoder");
  synth->add_option("--schema", sf.schema_path, "Schema for --text-pipeline")->check(CLI::ExistingFile);
  synth->add_option("--encoder-dim", sf.text.encoder_dim, "Hash encoder dim for --text-pipeline");
  synth->add_option("--encoder-seed", sf.text.encoder_seed, "Hash encoder seed for --text-pipeline");
  int synth_threads = 0;
  synth->add_option("--threads", synth_threads, "Worker threads")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*render) return cmd_render(o, with_base, with_placeholder, randomize_seed);
    if (*classify) return cmd_classify(o);
    if (*eval) return cmd_eval(o);
    if (*infer) return cmd_infer_attrs(o);
    if (*ablate) return cmd_ablate(o, ablation_seed);
    if (*sweep) return cmd_sweep_tau(o, grid);
    if (*synth) return cmd_synth(sf, synth_threads);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kDataError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const InferenceError& e) {
    std::cerr << "inference error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsageError;
}
