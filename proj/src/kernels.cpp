#include "pclip/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <omp.h>

namespace pclip::kernels {

namespace {

// Returns false when the mean is degenerate.
bool mean_normalize_one(const EmbeddingMatrix& texts, const std::vector<std::size_t>& rows,
                        std::span<float> out, std::vector<double>& acc) {
  std::fill(acc.begin(), acc.end(), 0.0);
  for (auto r : rows) {
    const auto row = texts.row(r);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += row[k];
  }
  double sq = 0.0;
  for (auto& v : acc) {
    v /= static_cast<double>(rows.size());
    sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (rows.empty() || norm < kMinRowNorm) {
    std::fill(out.begin(), out.end(), 0.0f);
    return false;
  }
  for (std::size_t k = 0; k < acc.size(); ++k) out[k] = static_cast<float>(acc[k] / norm);
  return true;
}

inline double dot_rows(const float* a, const float* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t k = 0; k < dim; ++k) s += static_cast<double>(a[k]) * b[k];
  return s;
}

}  // namespace

int resolve_threads(int threads) { return threads > 0 ? threads : omp_get_max_threads(); }

std::vector<std::size_t> mean_normalize_serial(const EmbeddingMatrix& texts, const RowGroups& groups,
                                               std::span<float> out) {
  const auto dim = texts.dim;
  std::vector<double> acc(dim);
  std::vector<std::size_t> degenerate;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (!mean_normalize_one(texts, groups[i], out.subspan(i * dim, dim), acc)) degenerate.push_back(i);
  }
  return degenerate;
}

std::vector<std::size_t> mean_normalize_parallel(const EmbeddingMatrix& texts, const RowGroups& groups,
                                                 std::span<float> out, int threads) {
  const auto dim = texts.dim;
  const auto n = static_cast<std::int64_t>(groups.size());
  std::vector<char> ok(groups.size(), 1);
#pragma omp parallel num_threads(resolve_threads(threads))
  {
    std::vector<double> acc(dim);
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      const auto slot = static_cast<std::size_t>(i);
      ok[slot] = mean_normalize_one(texts, groups[slot], out.subspan(slot * dim, dim), acc) ? 1 : 0;
    }
  }
  std::vector<std::size_t> degenerate;
  for (std::size_t i = 0; i < ok.size(); ++i) {
    if (!ok[i]) degenerate.push_back(i);
  }
  return degenerate;
}

void score_batch_serial(std::span<const float> images, const AnchorSet& anchors, std::span<double> out) {
  const auto dim = anchors.dim();
  const auto per_image = anchors.size();
  const auto* a = anchors.data().data();
  const auto rows = images.size() / dim;
  for (std::size_t i = 0; i < rows; ++i) {
    const auto* x = images.data() + i * dim;
    for (std::size_t j = 0; j < per_image; ++j) out[i * per_image + j] = dot_rows(x, a + j * dim, dim);
  }
}

void score_batch_parallel(std::span<const float> images, const AnchorSet& anchors, std::span<double> out,
                          int threads) {
  const auto dim = anchors.dim();
  const auto per_image = anchors.size();
  const auto* a = anchors.data().data();
  const auto n = static_cast<std::int64_t>(images.size() / dim);
#pragma omp parallel for schedule(static) num_threads(resolve_threads(threads))
  for (std::int64_t i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    const auto* x = images.data() + row * dim;
    double* dst = out.data() + row * per_image;
    for (std::size_t j = 0; j < per_image; ++j) dst[j] = dot_rows(x, a + j * dim, dim);
  }
}

}  // namespace pclip::kernels
