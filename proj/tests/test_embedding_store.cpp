#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "pclip/embedding_store.hpp"
#include "support.hpp"

using namespace pclip;

namespace {

EmbeddingSet small_set() {
  EmbeddingSet s;
  s.matrix = test::matrix_from_rows({{1.0f, 0.0f, 0.0f}, {0.0f, 3.0f, 4.0f}}, {"a", "b"});
  s.meta.labels = {1, std::nullopt};
  s.meta.groups = {GroupValues{{"background", "water"}}, std::nullopt};
  return s;
}

nlohmann::json read_manifest_json(const std::filesystem::path& dir) {
  return nlohmann::json::parse(test::read_file(dir / "manifest.json"));
}

}  // namespace

TEST_SUITE("embedding_store") {

TEST_CASE("save then load is bit-exact, metadata included") {
  test::TempDir dir;
  const auto s = small_set();
  save_bundle(s, dir.path());
  const auto back = load_raw(dir.path());
  CHECK(back.matrix.dim == 3);
  CHECK(back.matrix.ids == s.matrix.ids);
  REQUIRE(back.matrix.data.size() == s.matrix.data.size());
  CHECK(std::memcmp(back.matrix.data.data(), s.matrix.data.data(), s.matrix.data.size() * sizeof(float)) == 0);
  CHECK(back.meta.labels == s.meta.labels);
  CHECK(back.meta.groups == s.meta.groups);
}

TEST_CASE("binary layout is little-endian float32, row-major, no header") {
  test::TempDir dir;
  save_bundle(small_set(), dir.path());
  const auto bytes = test::read_file(dir / "embeddings.bin");
  REQUIRE(bytes.size() == 6 * 4);
  const unsigned char one[4] = {0x00, 0x00, 0x80, 0x3f};
  CHECK(std::memcmp(bytes.data(), one, 4) == 0);
  const unsigned char four[4] = {0x00, 0x00, 0x80, 0x40};
  CHECK(std::memcmp(bytes.data() + 20, four, 4) == 0);
  const auto manifest = read_manifest_json(dir.path());
  CHECK(manifest["dtype"] == "f32");
  CHECK(manifest["count"] == 2);
}

TEST_CASE("two saves are byte-identical") {
  test::TempDir a, b;
  save_bundle(small_set(), a.path());
  save_bundle(small_set(), b.path());
  CHECK(test::read_file(a / "manifest.json") == test::read_file(b / "manifest.json"));
  CHECK(test::read_file(a / "embeddings.bin") == test::read_file(b / "embeddings.bin"));
}

TEST_CASE("property: random bundles round trip exactly") {
  test::Rng rng(21);
  test::TempDir dir;
  for (int trial = 0; trial < 20; ++trial) {
    EmbeddingSet s;
    s.matrix.dim = test::uniform(rng, 1, 17);
    const auto rows = test::uniform(rng, 0, 30);
    for (std::size_t r = 0; r < rows; ++r) {
      s.matrix.ids.push_back("row" + std::to_string(r));
      for (std::size_t k = 0; k < s.matrix.dim; ++k) {
        std::uint32_t bits = static_cast<std::uint32_t>(rng());
        float f;
        std::memcpy(&f, &bits, 4);
        if (!std::isfinite(f)) f = 1.5f;
        s.matrix.data.push_back(f);
      }
    }
    const auto path = dir / ("b" + std::to_string(trial));
    save_bundle(s, path);
    const auto back = load_raw(path);
    CHECK(back.matrix.ids == s.matrix.ids);
    CHECK(std::memcmp(back.matrix.data.data(), s.matrix.data.data(), s.matrix.data.size() * 4) == 0);
  }
}

TEST_CASE("load errors") {
  test::TempDir dir;
  save_bundle(small_set(), dir.path());
  auto manifest = read_manifest_json(dir.path());

  SUBCASE("missing directory") { CHECK_THROWS_AS(load_raw(dir / "nope"), DataError); }
  SUBCASE("truncated data file") {
    auto bytes = test::read_file(dir / "embeddings.bin");
    test::write_file(dir / "embeddings.bin", bytes.substr(0, bytes.size() - 4));
    CHECK_THROWS_WITH_AS(load_raw(dir.path()), doctest::Contains("expected"), DataError);
  }
  SUBCASE("unsupported dtype") {
    manifest["dtype"] = "f16";
    test::write_file(dir / "manifest.json", manifest.dump());
    CHECK_THROWS_WITH_AS(load_raw(dir.path()), doctest::Contains("dtype"), DataError);
  }
  SUBCASE("ids length mismatch") {
    manifest["ids"] = {"a"};
    test::write_file(dir / "manifest.json", manifest.dump());
    CHECK_THROWS_WITH_AS(load_raw(dir.path()), doctest::Contains("ids length"), DataError);
  }
  SUBCASE("labels length mismatch") {
    manifest["labels"] = {0};
    test::write_file(dir / "manifest.json", manifest.dump());
    CHECK_THROWS_AS(load_raw(dir.path()), DataError);
  }
  SUBCASE("duplicate ids") {
    manifest["ids"] = {"a", "a"};
    test::write_file(dir / "manifest.json", manifest.dump());
    CHECK_THROWS_WITH_AS(load_raw(dir.path()), doctest::Contains("duplicate"), DataError);
  }
  SUBCASE("broken JSON") {
    test::write_file(dir / "manifest.json", "{");
    CHECK_THROWS_AS(load_raw(dir.path()), DataError);
  }
}

TEST_CASE("normalize_rows") {
  auto s = small_set();
  normalize_rows(s.matrix);
  CHECK(s.matrix.row(1)[1] == doctest::Approx(0.6));
  CHECK(s.matrix.row(1)[2] == doctest::Approx(0.8));

  auto zero = test::matrix_from_rows({{1.0f, 0.0f}, {0.0f, 0.0f}}, {"ok", "dead"});
  CHECK_THROWS_WITH_AS(normalize_rows(zero), doctest::Contains("'dead'"), DataError);
  auto nan = test::matrix_from_rows({{std::numeric_limits<float>::quiet_NaN(), 1.0f}}, {"bad"});
  CHECK_THROWS_WITH_AS(normalize_rows(nan), doctest::Contains("'bad'"), DataError);
}

TEST_CASE("property: load_normalized rows have unit norm") {
  test::Rng rng(22);
  test::TempDir dir;
  EmbeddingSet s;
  s.matrix.dim = 33;
  for (std::size_t r = 0; r < 200; ++r) {
    s.matrix.ids.push_back(std::to_string(r));
    const double scale = std::pow(10.0, test::uniform_real(rng, -3, 3));
    for (std::size_t k = 0; k < 33; ++k) s.matrix.data.push_back(static_cast<float>(scale * test::uniform_real(rng, -1, 1)));
  }
  save_bundle(s, dir.path());
  const auto back = load_normalized(dir.path());
  for (std::size_t r = 0; r < back.matrix.rows(); ++r) {
    double sq = 0.0;
    for (float v : back.matrix.row(r)) sq += static_cast<double>(v) * v;
    CHECK(std::fabs(std::sqrt(sq) - 1.0) < 1e-5);
  }
}

TEST_CASE("make_bundle rejects mismatched dims") {
  auto images = small_set();
  auto texts = test::matrix_from_rows({{1.0f, 0.0f}}, {"t"});
  CHECK_THROWS_AS(make_bundle(images, texts), DataError);
  texts = test::matrix_from_rows({{1.0f, 0.0f, 0.0f}}, {"t"});
  CHECK(make_bundle(images, texts).texts.rows() == 1);
}

TEST_CASE("find and check_shape") {
  const auto s = small_set();
  CHECK(s.matrix.find("b") == std::optional<std::size_t>(1));
  CHECK_FALSE(s.matrix.find("z").has_value());
  auto broken = s.matrix;
  broken.data.pop_back();
  CHECK_THROWS_AS(broken.check_shape(), DataError);
}

}  // TEST_SUITE
