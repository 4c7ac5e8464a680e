#pragma once

// Hand-rolled generators and helpers shared by the unit tests.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pclip/embedding_store.hpp"
#include "pclip/schema.hpp"
#include "pclip/scoring.hpp"

namespace pclip::test {

using Rng = std::mt19937_64;

inline std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline ScoreMatrix random_scores(Rng& rng, std::size_t classes, std::size_t combos, double lo = -1.0,
                                 double hi = 1.0) {
  ScoreMatrix s(classes, combos);
  for (auto& v : s.values()) v = uniform_real(rng, lo, hi);
  return s;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> out(n);
  for (auto& v : out) v = uniform_real(rng, lo, hi);
  return out;
}

inline std::vector<float> random_unit(Rng& rng, std::size_t dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(dim);
  double sq = 0.0;
  for (auto& x : v) {
    x = n(rng);
    sq += x * x;
  }
  std::vector<float> out(dim);
  for (std::size_t k = 0; k < dim; ++k) out[k] = static_cast<float>(v[k] / std::sqrt(sq));
  return out;
}

inline std::string random_word(Rng& rng, std::size_t min_len = 1, std::size_t max_len = 8) {
  static constexpr std::string_view letters = "abcdefghijklmnopqrstuvwxyz";
  std::string out(uniform(rng, min_len, max_len), 'a');
  for (auto& c : out) c = letters[uniform(rng, 0, letters.size() - 1)];
  return out;
}

// Concat schema with 1..4 classes, 0..3 attributes of 1..4 values and
// 1..3 descriptions (some empty, some multi-word).
inline AttributeSchema random_schema(Rng& rng) {
  AttributeSchema s;
  s.base_template = uniform(rng, 0, 1) ? "a photo of a {class}." : "an image of {class}";
  const auto classes = uniform(rng, 1, 4);
  for (std::size_t c = 0; c < classes; ++c) s.classes.names.push_back("cls" + std::to_string(c) + random_word(rng));
  const auto attrs = uniform(rng, 0, 3);
  for (std::size_t a = 0; a < attrs; ++a) {
    ContextualAttribute attr{"attr" + std::to_string(a), {}};
    const auto values = uniform(rng, 1, 4);
    for (std::size_t v = 0; v < values; ++v) {
      AttributeValue value{"v" + std::to_string(v), {}};
      const auto descs = uniform(rng, 1, 3);
      for (std::size_t d = 0; d < descs; ++d) {
        if (d == 0 && uniform(rng, 0, 3) == 0) {
          value.descriptions.push_back("");
          continue;
        }
        std::string text = random_word(rng);
        const auto words = uniform(rng, 0, 3);
        for (std::size_t w = 0; w < words; ++w) text += " " + random_word(rng);
        text += std::to_string(d);  // keeps descriptions distinct
        value.descriptions.push_back(text);
      }
      attr.values.push_back(std::move(value));
    }
    s.attributes.push_back(std::move(attr));
  }
  validate(s);
  return s;
}

inline double rel_err(long double expected, double actual) {
  const long double diff = std::fabs(static_cast<long double>(actual) - expected);
  const long double scale = std::max<long double>(std::fabs(expected), 1e-300L);
  return static_cast<double>(diff / scale);
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("pclip_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline EmbeddingMatrix matrix_from_rows(const std::vector<std::vector<float>>& rows, std::vector<std::string> ids) {
  EmbeddingMatrix m;
  m.dim = rows.empty() ? 0 : rows.front().size();
  for (const auto& r : rows) m.data.insert(m.data.end(), r.begin(), r.end());
  m.ids = std::move(ids);
  return m;
}

}  // namespace pclip::test
