#include <doctest.h>

#include <cstring>

#include "pclip/kernels.hpp"
#include "support.hpp"

using namespace pclip;

namespace {

AnchorSet random_anchors(test::Rng& rng, std::size_t classes, std::size_t combos, std::size_t dim) {
  AnchorSet a(classes, combos, dim);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t z = 0; z < combos; ++z) {
      const auto v = test::random_unit(rng, dim);
      std::copy(v.begin(), v.end(), a.anchor(c, z).begin());
    }
  }
  return a;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("property: parallel scoring is bit-identical to serial for any thread count") {
  test::Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const auto classes = test::uniform(rng, 1, 7), combos = test::uniform(rng, 1, 9), dim = test::uniform(rng, 1, 70);
    const auto rows = test::uniform(rng, 0, 60);
    const auto anchors = random_anchors(rng, classes, combos, dim);
    std::vector<float> images;
    for (std::size_t r = 0; r < rows; ++r) {
      const auto v = test::random_unit(rng, dim);
      images.insert(images.end(), v.begin(), v.end());
    }
    std::vector<double> serial(rows * classes * combos);
    kernels::score_batch_serial(images, anchors, serial);
    for (int threads : {1, 2, 3, 4, 7}) {
      std::vector<double> parallel(serial.size(), -9.0);
      kernels::score_batch_parallel(images, anchors, parallel, threads);
      CHECK(std::memcmp(serial.data(), parallel.data(), serial.size() * sizeof(double)) == 0);
    }
  }
}

TEST_CASE("score_batch matches score_tensor") {
  test::Rng rng(42);
  const auto anchors = random_anchors(rng, 3, 4, 16);
  std::vector<float> images;
  for (int r = 0; r < 5; ++r) {
    const auto v = test::random_unit(rng, 16);
    images.insert(images.end(), v.begin(), v.end());
  }
  std::vector<double> out(5 * 12);
  kernels::score_batch_serial(images, anchors, out);
  for (std::size_t r = 0; r < 5; ++r) {
    const auto s = score_tensor(std::span<const float>(images).subspan(r * 16, 16), anchors);
    for (std::size_t k = 0; k < 12; ++k) CHECK(out[r * 12 + k] == s.values()[k]);
  }
}

TEST_CASE("property: parallel mean_normalize is bit-identical to serial") {
  test::Rng rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    const auto dim = test::uniform(rng, 1, 40), rows = test::uniform(rng, 1, 50);
    EmbeddingMatrix texts;
    texts.dim = dim;
    for (std::size_t r = 0; r < rows; ++r) {
      const auto v = test::random_unit(rng, dim);
      texts.data.insert(texts.data.end(), v.begin(), v.end());
      texts.ids.push_back(std::to_string(r));
    }
    kernels::RowGroups groups(test::uniform(rng, 1, 20));
    for (auto& g : groups) {
      const auto n = test::uniform(rng, 1, 6);
      for (std::size_t k = 0; k < n; ++k) g.push_back(test::uniform(rng, 0, rows - 1));
    }
    std::vector<float> serial(groups.size() * dim);
    const auto bad_serial = kernels::mean_normalize_serial(texts, groups, serial);
    for (int threads : {1, 2, 5}) {
      std::vector<float> parallel(serial.size(), 7.0f);
      const auto bad = kernels::mean_normalize_parallel(texts, groups, parallel, threads);
      CHECK(bad == bad_serial);
      CHECK(std::memcmp(serial.data(), parallel.data(), serial.size() * sizeof(float)) == 0);
    }
  }
}

TEST_CASE("mean_normalize reports cancelling slots") {
  const auto texts = test::matrix_from_rows({{1, 0}, {-1, 0}, {0, 2}}, {"a", "b", "c"});
  const kernels::RowGroups groups = {{0, 1}, {2}, {0, 2}};
  std::vector<float> out(6);
  const auto bad = kernels::mean_normalize_parallel(texts, groups, out, 2);
  CHECK(bad == std::vector<std::size_t>{0});
  CHECK(out[2] == 0.0f);
  CHECK(out[3] == 1.0f);
  CHECK(out[4] == doctest::Approx(std::sqrt(0.2)));
  CHECK(out[5] == doctest::Approx(std::sqrt(0.8)));
}

}  // TEST_SUITE
