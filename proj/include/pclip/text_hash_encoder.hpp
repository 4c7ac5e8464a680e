#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pclip/embedding_store.hpp"
#include "pclip/schema.hpp"

namespace pclip {

/// Toy deterministic text encoder. Lowercases, splits into [a-z0-9-]+
/// tokens, maps every unigram and adjacent bigram to a seeded Gaussian
/// vector and returns the normalized sum. Word order inside a bigram
/// matters, so "red car" and "car red" differ.
class HashTextEncoder {
 public:
  explicit HashTextEncoder(std::size_t dim = 128, std::uint64_t seed = 0);

  std::size_t dim() const { return dim_; }
  std::vector<float> encode(std::string_view text) const;
  /// One row per manifest entry, ids copied from the manifest.
  EmbeddingMatrix encode_manifest(const PromptManifest& manifest) const;

  static std::vector<std::string> tokens(std::string_view text);

 private:
  void add_token(std::string_view token, std::vector<double>& acc) const;

  std::size_t dim_;
  std::uint64_t seed_;
};

}  // namespace pclip
