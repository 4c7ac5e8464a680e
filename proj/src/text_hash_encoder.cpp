#include "pclip/text_hash_encoder.hpp"

#include <cctype>
#include <cmath>
#include <random>

namespace pclip {

namespace {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool token_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
}

}  // namespace

HashTextEncoder::HashTextEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw DataError("encoder dim must be positive");
}

std::vector<std::string> HashTextEncoder::tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char raw : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (token_char(c)) {
      current += c;
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

void HashTextEncoder::add_token(std::string_view token, std::vector<double>& acc) const {
  std::mt19937_64 rng(fnv1a(token) ^ (seed_ * 0x9e3779b97f4a7c15ULL));
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(dim_)));
  for (auto& v : acc) v += gauss(rng);
}

std::vector<float> HashTextEncoder::encode(std::string_view text) const {
  const auto words = tokens(text);
  if (words.empty()) throw DataError("text '" + std::string(text) + "' has no tokens");
  std::vector<double> acc(dim_, 0.0);
  for (std::size_t i = 0; i < words.size(); ++i) {
    add_token(words[i], acc);
    if (i + 1 < words.size()) add_token(words[i] + " " + words[i + 1], acc);
  }
  double sq = 0.0;
  for (double v : acc) sq += v * v;
  const double norm = std::sqrt(sq);
  std::vector<float> out(dim_);
  for (std::size_t k = 0; k < dim_; ++k) out[k] = static_cast<float>(acc[k] / norm);
  return out;
}

EmbeddingMatrix HashTextEncoder::encode_manifest(const PromptManifest& manifest) const {
  EmbeddingMatrix out;
  out.dim = dim_;
  out.data.reserve(manifest.size() * dim_);
  out.ids.reserve(manifest.size());
  for (const auto& entry : manifest) {
    const auto row = encode(entry.text);
    out.data.insert(out.data.end(), row.begin(), row.end());
    out.ids.push_back(entry.id);
  }
  return out;
}

}  // namespace pclip
