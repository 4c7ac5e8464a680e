#pragma once

// Data-parallel inner loops. Each kernel has a plain serial version kept as
// the reference implementation; the OpenMP versions must produce
// bit-identical output for any thread count (every output element is
// computed by exactly one thread in a fixed summation order).

#include <cstddef>
#include <span>
#include <vector>

#include "pclip/embedding_store.hpp"
#include "pclip/scoring.hpp"

namespace pclip::kernels {

/// Rows of `texts` averaged into output slot i.
using RowGroups = std::vector<std::vector<std::size_t>>;

/// out[i] = normalize(mean(texts.row(g) for g in groups[i])). Returns the
/// slots whose mean had norm below kMinRowNorm (left zero).
std::vector<std::size_t> mean_normalize_serial(const EmbeddingMatrix& texts, const RowGroups& groups,
                                               std::span<float> out);
std::vector<std::size_t> mean_normalize_parallel(const EmbeddingMatrix& texts, const RowGroups& groups,
                                                 std::span<float> out, int threads = 0);

/// `images` is row-major with anchors.dim() columns.
/// out[(i * classes + c) * combos + z] = <image i, anchor(c, z)>.
void score_batch_serial(std::span<const float> images, const AnchorSet& anchors, std::span<double> out);
void score_batch_parallel(std::span<const float> images, const AnchorSet& anchors, std::span<double> out,
                          int threads = 0);

/// Applies OpenMP thread settings: 0 keeps the runtime default.
int resolve_threads(int threads);

}  // namespace pclip::kernels
