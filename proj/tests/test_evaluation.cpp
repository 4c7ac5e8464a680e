#include <doctest.h>

#include "pclip/evaluation.hpp"
#include "pclip/synthetic.hpp"
#include "support.hpp"

using namespace pclip;

namespace {

AttributeSchema background_schema() {
  AttributeSchema s;
  s.base_template = "a photo of a {class}.";
  s.classes.names = {"landbird", "waterbird"};
  s.attributes = {{"background", {{"land", {"on land"}}, {"water", {"on water"}}}}};
  validate(s);
  return s;
}

// Class anchors e0 and e1; image rows point at whichever class should be
// predicted.
AnchorBank axis_bank(const AttributeSchema& schema) {
  AnchorBank bank;
  bank.schema = schema;
  AnchorSet base(2, 1, 2);
  base.anchor(0, 0)[0] = 1.0f;
  base.anchor(1, 0)[1] = 1.0f;
  bank.base = base;
  AnchorSet attr(2, 2, 2);
  for (std::size_t z = 0; z < 2; ++z) {
    attr.anchor(0, z)[0] = 1.0f;
    attr.anchor(1, z)[1] = 1.0f;
  }
  bank.attribute = attr;
  return bank;
}

struct Cell {
  std::size_t label;
  std::string background;
  std::size_t size;
  std::size_t correct;
};

EmbeddingSet controlled_images(const std::vector<Cell>& cells) {
  EmbeddingSet set;
  set.matrix.dim = 2;
  for (const auto& cell : cells) {
    for (std::size_t i = 0; i < cell.size; ++i) {
      const auto predicted = i < cell.correct ? cell.label : 1 - cell.label;
      set.matrix.data.push_back(predicted == 0 ? 1.0f : 0.0f);
      set.matrix.data.push_back(predicted == 1 ? 1.0f : 0.0f);
      set.matrix.ids.push_back("img" + std::to_string(set.matrix.ids.size()));
      set.meta.labels.push_back(cell.label);
      set.meta.groups.push_back(GroupValues{{"background", cell.background}});
    }
  }
  return set;
}

RunOptions simple_options(int threads = 1) {
  RunOptions o;
  o.inference.mode = Mode::simple;
  o.threads = threads;
  return o;
}

nlohmann::ordered_json without_config(nlohmann::ordered_json j) {
  j.erase("config");
  return j;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("group arithmetic on four equal groups") {
  const auto images = controlled_images(
      {{0, "land", 10, 9}, {0, "water", 10, 8}, {1, "land", 10, 2}, {1, "water", 10, 7}});
  const auto report = evaluate(images, axis_bank(background_schema()), simple_options());
  CHECK(report.total == 40);
  CHECK(report.correct == 26);
  REQUIRE(report.average_accuracy.has_value());
  CHECK(*report.average_accuracy == doctest::Approx(0.65));
  CHECK(*report.worst_group_accuracy == doctest::Approx(0.2));
  CHECK(*report.gap == doctest::Approx(0.45));
  CHECK(report.groups.size() == 4);
  CHECK(report.warnings.empty());
}

TEST_CASE("property: group sizes and hits add up to the totals") {
  test::Rng rng(61);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Cell> cells;
    for (std::size_t label : {0u, 1u}) {
      for (const char* bg : {"land", "water"}) {
        const auto size = test::uniform(rng, 1, 25);
        cells.push_back({label, bg, size, test::uniform(rng, 0, size)});
      }
    }
    const auto report = evaluate(controlled_images(cells), axis_bank(background_schema()), simple_options());
    std::size_t size = 0, correct = 0;
    double worst = 1.0;
    for (const auto& [key, stats] : report.groups) {
      size += stats.size;
      correct += stats.correct;
      worst = std::min(worst, stats.accuracy());
    }
    CHECK(size == report.total);
    CHECK(correct == report.correct);
    CHECK(*report.worst_group_accuracy == worst);
    CHECK(*report.worst_group_accuracy <= report.top1_accuracy);
    CHECK(*report.gap >= 0.0);
  }
}

TEST_CASE("empty groups are reported and excluded") {
  const auto images = controlled_images({{0, "land", 5, 5}, {1, "land", 5, 4}, {1, "water", 5, 1}});
  const auto report = evaluate(images, axis_bank(background_schema()), simple_options());
  CHECK(report.groups.size() == 3);
  REQUIRE(report.warnings.size() == 1);
  CHECK(report.warnings[0].find("class 0, background=water") != std::string::npos);
  CHECK(*report.worst_group_accuracy == doctest::Approx(0.2));
}

TEST_CASE("label errors") {
  auto images = controlled_images({{0, "land", 3, 3}});
  SUBCASE("no labels") {
    images.meta.labels.clear();
    CHECK_THROWS_WITH_AS(evaluate(images, axis_bank(background_schema()), simple_options()),
                         doctest::Contains("labels"), DataError);
  }
  SUBCASE("label outside the schema") {
    images.meta.labels[1] = 7;
    CHECK_THROWS_WITH_AS(evaluate(images, axis_bank(background_schema()), simple_options()),
                         doctest::Contains("img1"), DataError);
  }
  SUBCASE("missing label") {
    images.meta.labels[2].reset();
    CHECK_THROWS_AS(evaluate(images, axis_bank(background_schema()), simple_options()), DataError);
  }
}

TEST_CASE("missing anchors and dimension mismatches") {
  const auto images = controlled_images({{0, "land", 3, 3}});
  auto bank = axis_bank(background_schema());
  auto opts = simple_options();
  opts.inference.mode = Mode::ensemble;
  CHECK_THROWS_AS(evaluate(images, bank, opts), DataError);
  bank.base = AnchorSet(2, 1, 3);
  CHECK_THROWS_WITH_AS(evaluate(images, bank, simple_options()), doctest::Contains("dim"), DataError);
}

TEST_CASE("conditioning combinations") {
  const auto s = background_schema();
  const auto images = controlled_images({{0, "land", 2, 2}, {1, "water", 2, 2}});
  CHECK(conditioning_combos(images, s, ConditionSource::correct, 0) == std::vector<std::size_t>{0, 0, 1, 1});
  CHECK(conditioning_combos(images, s, ConditionSource::wrong, 0) == std::vector<std::size_t>{1, 1, 0, 0});
  const auto a = conditioning_combos(images, s, ConditionSource::random, 9);
  CHECK(a == conditioning_combos(images, s, ConditionSource::random, 9));
  for (auto z : a) CHECK(z < 2);
  auto bad = images;
  bad.meta.groups[0] = GroupValues{{"background", "sky"}};
  CHECK_THROWS_WITH_AS(conditioning_combos(bad, s, ConditionSource::correct, 0), doctest::Contains("sky"),
                       DataError);
  CHECK(parse_condition(to_string(ConditionSource::wrong)) == ConditionSource::wrong);
}

TEST_CASE("property: reports do not depend on threads or chunk size") {
  GenerativeSpec spec;
  spec.noise = 0.2;
  const auto data = generate(spec, 700, 1);
  BankOptions bo;
  bo.base = bo.ensemble = bo.placeholder = true;
  const auto bank = build_bank(data.texts, data.schema, bo);
  for (auto mode : {Mode::simple, Mode::ensemble, Mode::conditioned, Mode::one_step, Mode::two_step}) {
    for (auto estimator : {Estimator::class_attr, Estimator::pure_attr}) {
      RunOptions o;
      o.inference.mode = mode;
      o.inference.estimator = estimator;
      o.inference.temperature = 3.0;
      o.threads = 1;
      const auto reference = to_json(evaluate(data.images, bank, o)).dump();
      for (int threads : {2, 4}) {
        for (std::size_t chunk : {1u, 97u, 1024u}) {
          o.threads = threads;
          o.chunk_rows = chunk;
          CHECK(to_json(evaluate(data.images, bank, o)).dump() == reference);
        }
      }
    }
  }
}

TEST_CASE("zero-attribute schema: every mode collapses to the base classifier") {
  GenerativeSpec spec;
  spec.attribute_sizes = {};
  spec.noise = 0.3;
  const auto data = generate(spec, 300, 1);
  BankOptions bo;
  bo.base = bo.ensemble = true;
  const auto bank = build_bank(data.texts, data.schema, bo);
  RunOptions o;
  o.inference.mode = Mode::simple;
  const auto simple = evaluate(data.images, bank, o);
  for (auto mode : {Mode::conditioned, Mode::one_step, Mode::two_step, Mode::ensemble}) {
    o.inference.mode = mode;
    CHECK(evaluate(data.images, bank, o).correct == simple.correct);
  }
  const auto preds = predict_all(data.images, bank, o);
  for (std::size_t r = 0; r < preds.size(); ++r) {
    const auto s = score_tensor(data.images.matrix.row(r), *bank.base);
    std::vector<double> col(s.values().begin(), s.values().end());
    CHECK(preds[r].class_id == argmax(col));
  }
}

TEST_CASE("ablation on a zero-attribute schema gives identical reports") {
  GenerativeSpec spec;
  spec.attribute_sizes = {};
  const auto data = generate(spec, 200, 1);
  RunOptions o;
  o.inference.mode = Mode::two_step;
  const auto texts = data.texts;
  const auto result = run_ablation(
      data.images, data.schema, [&](const AttributeSchema& s) { return build_bank(texts, s, BankOptions{}); }, o, 5);
  CHECK(without_config(to_json(result.real)) == without_config(to_json(result.randomized)));
  CHECK(result.randomized.config["ablation"] == true);
  CHECK(result.randomized.config["ablation_seed"] == 5);
  CHECK(result.real.config["ablation"] == false);
}

TEST_CASE("attribute inference accuracy is reported per attribute") {
  GenerativeSpec spec;
  spec.noise = 0.0;
  const auto data = generate(spec, 200, 1);
  BankOptions bo;
  bo.placeholder = true;
  const auto bank = build_bank(data.texts, data.schema, bo);
  for (auto estimator : {Estimator::class_attr, Estimator::pure_attr}) {
    const auto acc = evaluate_attribute_inference(data.images, bank, estimator, 1);
    REQUIRE(acc.size() == 2);
    CHECK(acc.at("attr_0") == 1.0);
    CHECK(acc.at("attr_1") == 1.0);
  }
  auto partial = data.images;
  partial.meta.groups[3]->erase("attr_1");
  CHECK_THROWS_AS(evaluate_attribute_inference(partial, bank, Estimator::class_attr, 1), DataError);
  RunOptions o;
  CHECK(evaluate(partial, bank, o).attribute_inference_accuracy.empty());
}

TEST_CASE("JSON and table output") {
  const auto images = controlled_images({{0, "land", 3, 2}, {1, "water", 3, 3}});
  const auto report = evaluate(images, axis_bank(background_schema()), simple_options());
  const auto j = to_json(report);
  CHECK(j["config"]["mode"] == "simple");
  CHECK(j["top1_accuracy"] == round_sig9(5.0 / 6.0));
  CHECK(j["groups"].size() == 2);
  CHECK(j["groups"][0]["values"]["background"] == "land");
  const auto table = render_table(report);
  CHECK(table.find("83.33") != std::string::npos);
  CHECK(round_sig9(1.0 / 3.0) == 0.333333333);
  CHECK(round_sig9(0.0) == 0.0);
}

TEST_CASE("no group metadata means no group metrics") {
  auto images = controlled_images({{0, "land", 4, 3}});
  images.meta.groups.clear();
  const auto report = evaluate(images, axis_bank(background_schema()), simple_options());
  CHECK_FALSE(report.average_accuracy.has_value());
  CHECK(to_json(report)["gap"].is_null());
}

}  // TEST_SUITE
