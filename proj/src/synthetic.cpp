#include "pclip/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <random>
#include <string>

#include <omp.h>

#include "pclip/kernels.hpp"

namespace pclip {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t row_seed(std::uint64_t seed, std::size_t row) { return splitmix64(seed ^ splitmix64(row + 1)); }

std::vector<double> gaussian(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> out(dim);
  for (auto& v : out) v = n(rng);
  return out;
}

void normalize(std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm < kMinRowNorm) throw DataError("degenerate spec: zero-length direction");
  for (auto& x : v) x /= norm;
}

std::string row_id(std::size_t row) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%06zu", row);
  return buf;
}

template <typename Fn>
void parallel_rows(std::size_t n, int threads, Fn&& fn) {
  std::exception_ptr failure;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) num_threads(kernels::resolve_threads(threads))
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(pclip_synth_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

GroupValues group_values(const AttributeSchema& schema, std::size_t combo) {
  GroupValues out;
  const auto values = combination_at(schema, combo).value_indices;
  for (std::size_t a = 0; a < schema.attributes.size(); ++a) {
    out[schema.attributes[a].name] = schema.attributes[a].values[values[a]].name;
  }
  return out;
}

}  // namespace

void GenerativeSpec::validate() const {
  if (dim < 2) throw DataError("spec: dim must be at least 2");
  if (classes == 0) throw DataError("spec: at least one class is required");
  for (std::size_t a = 0; a < attribute_sizes.size(); ++a) {
    if (attribute_sizes[a] == 0) throw DataError("spec: attribute " + std::to_string(a) + " has no values");
  }
  if (!(class_similarity >= 0.0 && class_similarity < 1.0)) {
    throw DataError("degenerate spec: class_similarity must be in [0, 1) or prototypes coincide");
  }
  if (!(attribute_strength > 0.0) || !std::isfinite(attribute_strength)) {
    throw DataError("spec: attribute_strength must be positive");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw DataError("spec: noise must be non-negative");
  if (!(spurious_correlation >= 0.0 && spurious_correlation <= 1.0)) {
    throw DataError("spec: spurious_correlation must be in [0, 1]");
  }
  if (spurious_correlation > 0.0 && spurious_attribute >= attribute_sizes.size()) {
    throw DataError("spec: spurious_attribute " + std::to_string(spurious_attribute) + " does not exist");
  }
  if (!(spurious_alignment >= 0.0 && spurious_alignment <= 1.0)) {
    throw DataError("spec: spurious_alignment must be in [0, 1]");
  }
  if (!(text_attribute_scale >= 0.0) || !std::isfinite(text_attribute_scale)) {
    throw DataError("spec: text_attribute_scale must be non-negative");
  }
  if (!(anchor_leak >= 0.0) || !std::isfinite(anchor_leak)) throw DataError("spec: anchor_leak must be non-negative");
  if (anchor_leak > 0.0 && attribute_sizes.empty()) throw DataError("spec: anchor_leak needs an attribute");
}

nlohmann::ordered_json GenerativeSpec::to_json() const {
  nlohmann::ordered_json out;
  out["dim"] = dim;
  out["classes"] = classes;
  out["attribute_sizes"] = attribute_sizes;
  out["class_similarity"] = class_similarity;
  out["attribute_strength"] = attribute_strength;
  out["noise"] = noise;
  out["spurious_correlation"] = spurious_correlation;
  out["spurious_attribute"] = spurious_attribute;
  out["spurious_alignment"] = spurious_alignment;
  out["text_attribute_scale"] = text_attribute_scale;
  out["anchor_leak"] = anchor_leak;
  out["seed"] = seed;
  return out;
}

SyntheticModel::SyntheticModel(const GenerativeSpec& spec) : spec_(spec) {
  spec_.validate();
  const auto dim = spec_.dim;

  schema_.base_template = "a photo of a {class}.";
  for (std::size_t c = 0; c < spec_.classes; ++c) schema_.classes.names.push_back("class_" + std::to_string(c));
  for (std::size_t a = 0; a < spec_.attribute_sizes.size(); ++a) {
    ContextualAttribute attr{"attr_" + std::to_string(a), {}};
    for (std::size_t v = 0; v < spec_.attribute_sizes[a]; ++v) {
      attr.values.push_back({"v" + std::to_string(v), {attr.name + " v" + std::to_string(v)}});
    }
    schema_.attributes.push_back(std::move(attr));
  }
  validate(schema_);

  std::mt19937_64 rng(splitmix64(spec_.seed));
  auto shared = gaussian(rng, dim);
  normalize(shared);
  const double s = spec_.class_similarity;
  prototypes_.resize(spec_.classes * dim);
  placeholder_.assign(dim, 0.0);
  for (std::size_t c = 0; c < spec_.classes; ++c) {
    auto r = gaussian(rng, dim);
    normalize(r);
    std::vector<double> u(dim);
    for (std::size_t k = 0; k < dim; ++k) u[k] = std::sqrt(s) * shared[k] + std::sqrt(1.0 - s) * r[k];
    normalize(u);
    std::copy(u.begin(), u.end(), prototypes_.begin() + static_cast<std::ptrdiff_t>(c * dim));
    for (std::size_t k = 0; k < dim; ++k) placeholder_[k] += u[k];
  }
  normalize(placeholder_);
  for (std::size_t i = 0; i < spec_.classes; ++i) {
    for (std::size_t j = i + 1; j < spec_.classes; ++j) {
      double cos = 0.0;
      for (std::size_t k = 0; k < dim; ++k) cos += prototypes_[i * dim + k] * prototypes_[j * dim + k];
      if (cos > 1.0 - 1e-9) {
        throw DataError("degenerate spec: prototypes " + std::to_string(i) + " and " + std::to_string(j) +
                        " are identical");
      }
    }
  }

  const double lean = spec_.spurious_alignment * spec_.spurious_correlation;
  for (std::size_t a = 0; a < spec_.attribute_sizes.size(); ++a) {
    const bool spurious = lean > 0.0 && a == spec_.spurious_attribute;
    std::vector<double> values(spec_.attribute_sizes[a] * dim);
    for (std::size_t v = 0; v < spec_.attribute_sizes[a]; ++v) {
      auto r = gaussian(rng, dim);
      normalize(r);
      if (spurious) {
        const auto u = prototype(v % spec_.classes);
        for (std::size_t k = 0; k < dim; ++k) r[k] = lean * u[k] + std::sqrt(1.0 - lean * lean) * r[k];
        normalize(r);
      }
      for (std::size_t k = 0; k < dim; ++k) values[v * dim + k] = spec_.attribute_strength * r[k];
    }
    offsets_.push_back(std::move(values));
  }
}

std::span<const double> SyntheticModel::prototype(std::size_t class_id) const {
  return {prototypes_.data() + class_id * spec_.dim, spec_.dim};
}

std::span<const double> SyntheticModel::offset(std::size_t attribute, std::size_t value) const {
  return {offsets_[attribute].data() + value * spec_.dim, spec_.dim};
}

std::vector<float> SyntheticModel::direction(std::span<const double> base, std::size_t combo, double scale) const {
  std::vector<double> acc(base.begin(), base.end());
  const auto values = combination_at(schema_, combo).value_indices;
  for (std::size_t a = 0; a < values.size(); ++a) {
    const auto v = offset(a, values[a]);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += scale * v[k];
  }
  normalize(acc);
  return {acc.begin(), acc.end()};
}

std::vector<float> SyntheticModel::anchor(std::size_t class_id, std::size_t combo) const {
  if (spec_.anchor_leak > 0.0 && combination_at(schema_, combo).value_indices[0] == 0) {
    const auto u = prototype(class_id);
    const auto next = prototype((class_id + 1) % spec_.classes);
    std::vector<double> base(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) base[k] = u[k] + spec_.anchor_leak * next[k];
    return direction(base, combo, spec_.text_attribute_scale);
  }
  return direction(prototype(class_id), combo, spec_.text_attribute_scale);
}

std::vector<float> SyntheticModel::base_anchor(std::size_t class_id) const {
  const auto u = prototype(class_id);
  return {u.begin(), u.end()};
}

std::vector<float> SyntheticModel::placeholder_anchor(std::size_t combo) const {
  return direction(placeholder_, combo, spec_.text_attribute_scale);
}

EmbeddingMatrix SyntheticModel::texts() const {
  EmbeddingMatrix out;
  out.dim = spec_.dim;
  auto append = [&](const std::string& id, const std::vector<float>& row) {
    out.ids.push_back(id);
    out.data.insert(out.data.end(), row.begin(), row.end());
  };
  for (const auto& e : render_manifest(schema_)) append(e.id, anchor(e.class_id, e.combo_index));
  for (const auto& e : render_manifest(without_attributes(schema_))) append(e.id, base_anchor(e.class_id));
  for (const auto& e : render_manifest(with_placeholder_class(schema_))) append(e.id, placeholder_anchor(e.combo_index));
  return out;
}

void SyntheticModel::sample(std::size_t row, std::size_t& class_id, std::size_t& combo, std::span<float> out) const {
  std::mt19937_64 rng(row_seed(spec_.seed, row));
  class_id = std::uniform_int_distribution<std::size_t>(0, spec_.classes - 1)(rng);
  AttributeCombination values{std::vector<std::size_t>(spec_.attribute_sizes.size())};
  for (std::size_t a = 0; a < values.value_indices.size(); ++a) {
    const auto size = spec_.attribute_sizes[a];
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto uniform = std::uniform_int_distribution<std::size_t>(0, size - 1)(rng);
    const bool tied = a == spec_.spurious_attribute && u < spec_.spurious_correlation;
    values.value_indices[a] = tied ? class_id % size : uniform;
  }
  combo = combination_index(schema_, values);

  std::vector<double> x(prototype(class_id).begin(), prototype(class_id).end());
  for (std::size_t a = 0; a < values.value_indices.size(); ++a) {
    const auto v = offset(a, values.value_indices[a]);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += v[k];
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& xk : x) xk += spec_.noise * gauss(rng);
  normalize(x);
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = static_cast<float>(x[k]);
}

SyntheticData generate(const GenerativeSpec& spec, std::size_t n_images, int threads) {
  const SyntheticModel model(spec);
  SyntheticData out;
  out.schema = model.schema();
  out.texts = model.texts();
  auto& m = out.images.matrix;
  m.dim = spec.dim;
  m.data.resize(n_images * spec.dim);
  m.ids.resize(n_images);
  out.images.meta.labels.resize(n_images);
  out.images.meta.groups.resize(n_images);
  out.combos.resize(n_images);
  parallel_rows(n_images, threads, [&](std::size_t i) {
    std::size_t class_id = 0;
    model.sample(i, class_id, out.combos[i], m.row(i));
    m.ids[i] = row_id(i);
    out.images.meta.labels[i] = class_id;
    out.images.meta.groups[i] = group_values(out.schema, out.combos[i]);
  });
  return out;
}

nlohmann::ordered_json ground_truth_json(const GenerativeSpec& spec, const SyntheticData& data) {
  nlohmann::ordered_json out;
  out["spec"] = spec.to_json();
  out["schema_hash"] = schema_fingerprint(data.schema);
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < data.images.matrix.rows(); ++i) {
    nlohmann::ordered_json row;
    row["id"] = data.images.matrix.ids[i];
    row["class_id"] = *data.images.meta.labels[i];
    row["combo"] = data.combos[i];
    rows.push_back(std::move(row));
  }
  out["rows"] = std::move(rows);
  return out;
}

EmbeddingMatrix random_texts(const EmbeddingMatrix& like, std::uint64_t seed) {
  EmbeddingMatrix out;
  out.dim = like.dim;
  out.ids = like.ids;
  out.data.resize(like.data.size());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    std::mt19937_64 rng(row_seed(seed, r));
    auto v = gaussian(rng, out.dim);
    normalize(v);
    for (std::size_t k = 0; k < out.dim; ++k) out.data[r * out.dim + k] = static_cast<float>(v[k]);
  }
  return out;
}

AttributeSchema demo_text_schema() {
  AttributeSchema s;
  s.base_template = "a photo of a {class}.";
  s.classes.names = {"sparrow", "heron", "falcon", "pelican", "owl"};
  s.attributes = {
      {"orientation",
       {{"upright", {"", "upright"}}, {"upside-down", {"upside-down", "the photo is upside-down"}}}},
      {"appearance",
       {{"bright", {"bright", "the photo is bright"}},
        {"dark", {"dark", "the photo is dark"}},
        {"blurred", {"blurred", "the photo is blurred"}}}},
  };
  validate(s);
  return s;
}

EmbeddingSet generate_text_images(const TextPipelineSpec& spec, std::size_t n_images, int threads) {
  validate(spec.schema);
  if (!(spec.noise >= 0.0)) throw DataError("text pipeline: noise must be non-negative");
  const HashTextEncoder encoder(spec.encoder_dim, spec.encoder_seed);
  const auto dim = spec.encoder_dim;
  const auto combos = spec.schema.combination_count();
  const auto classes = spec.schema.classes.size();
  EmbeddingSet out;
  out.matrix.dim = dim;
  out.matrix.data.resize(n_images * dim);
  out.matrix.ids.resize(n_images);
  out.meta.labels.resize(n_images);
  out.meta.groups.resize(n_images);
  parallel_rows(n_images, threads, [&](std::size_t i) {
    std::mt19937_64 rng(row_seed(spec.seed, i));
    const auto y = std::uniform_int_distribution<std::size_t>(0, classes - 1)(rng);
    const auto z = std::uniform_int_distribution<std::size_t>(0, combos - 1)(rng);
    const auto prompts = render_prompts(spec.schema, y, combination_at(spec.schema, z));
    const auto pick = std::uniform_int_distribution<std::size_t>(0, prompts.size() - 1)(rng);
    const auto clean = encoder.encode(prompts[pick]);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> x(dim);
    for (std::size_t k = 0; k < dim; ++k) x[k] = clean[k] + spec.noise * gauss(rng);
    normalize(x);
    auto row = out.matrix.row(i);
    for (std::size_t k = 0; k < dim; ++k) row[k] = static_cast<float>(x[k]);
    out.matrix.ids[i] = row_id(i);
    out.meta.labels[i] = y;
    out.meta.groups[i] = group_values(spec.schema, z);
  });
  return out;
}

OracleResult brute_force_posteriors(const ScoreMatrix& scores, double temperature, std::span<const double> agnostic) {
  const auto C = scores.classes();
  const auto Z = scores.combos();
  if (C == 0 || Z == 0) throw DataError("oracle: empty score table");
  if (!(temperature > 0.0)) throw DataError("oracle: temperature must be positive");
  for (double v : scores.values()) {
    if (!std::isfinite(v)) throw DataError("oracle: non-finite score");
  }
  if (!agnostic.empty() && agnostic.size() != Z) throw DataError("oracle: agnostic scores must have one per combination");

  auto checked = [](long double v) {
    if (!std::isfinite(v) || v == 0.0L) {
      throw OracleOverflow("oracle: exponent overflow or underflow in extended precision; rescale the scores");
    }
    return v;
  };
  const long double tau = temperature;

  OracleResult r;
  r.classes = C;
  r.combos = Z;
  std::vector<long double> e(C * Z), e_tau(C * Z);
  long double total = 0.0L;
  for (std::size_t i = 0; i < C * Z; ++i) {
    const long double s = scores.values()[i];
    e[i] = checked(std::exp(s));
    e_tau[i] = checked(std::exp(s / tau));
    total += e[i];
  }
  checked(total);

  r.joint.resize(C * Z);
  for (std::size_t i = 0; i < C * Z; ++i) r.joint[i] = e[i] / total;

  r.class_given_combo.resize(C * Z);
  std::vector<long double> col_sum(Z, 0.0L), col_sum_tau(Z, 0.0L);
  for (std::size_t z = 0; z < Z; ++z) {
    for (std::size_t c = 0; c < C; ++c) {
      col_sum[z] += e[c * Z + z];
      col_sum_tau[z] += e_tau[c * Z + z];
    }
    for (std::size_t c = 0; c < C; ++c) r.class_given_combo[c * Z + z] = e[c * Z + z] / col_sum[z];
  }

  auto normalized = [&](std::vector<long double> w) {
    long double sum = 0.0L;
    for (auto v : w) sum += checked(v);
    checked(sum);
    for (auto& v : w) v /= sum;
    return w;
  };
  r.class_attr = normalized(col_sum_tau);
  std::vector<long double> after(Z);
  for (std::size_t z = 0; z < Z; ++z) after[z] = std::pow(col_sum[z], 1.0L / tau);
  r.class_attr_after = normalized(after);
  if (!agnostic.empty()) {
    std::vector<long double> w(Z);
    for (std::size_t z = 0; z < Z; ++z) w[z] = std::exp(static_cast<long double>(agnostic[z]) / tau);
    r.pure_attr = normalized(w);
  }

  auto marginal = [&](const std::vector<long double>& attr) {
    std::vector<long double> out(C, 0.0L);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t z = 0; z < Z; ++z) out[c] += r.class_given_combo[c * Z + z] * attr[z];
    }
    return out;
  };
  r.two_step_class_attr = marginal(r.class_attr);
  r.two_step_class_attr_after = marginal(r.class_attr_after);
  if (!agnostic.empty()) r.two_step_pure_attr = marginal(r.pure_attr);

  std::vector<long double> row_sum(C, 0.0L);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t z = 0; z < Z; ++z) row_sum[c] += e[c * Z + z];
  }
  r.one_step = normalized(row_sum);
  return r;
}

}  // namespace pclip
