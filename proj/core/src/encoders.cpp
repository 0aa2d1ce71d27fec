#include "tips/encoders.hpp"

#include <cmath>

#include <fmt/format.h>

#include "tips/errors.hpp"

namespace tips {

void ModelDims::validate() const {
  if (heads == 0) throw ConfigError("head count must be at least 1");
  if (dim == 0 || dim % heads != 0) {
    throw ConfigError(fmt::format("embedding width {} is not divisible by {} heads", dim, heads));
  }
  if (max_len == 0) throw ConfigError("max sequence length must be positive");
}

Tensor2 uniform_init(std::size_t rows, std::size_t cols, std::size_t dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  Tensor2 t(rows, cols);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : t.values()) v = u(rng);
  return t;
}

void register_encoder_params(ParamRegistry& params, const ModelDims& dims, Rng& rng) {
  dims.validate();
  const std::size_t d = dims.dim;
  params.add(param_names::kInteraction, uniform_init(dims.n_items, d, d, rng));
  params.add(param_names::kExposure, uniform_init(dims.n_items, d, d, rng));
  params.add(param_names::kTimeW1, uniform_init(1, d, d, rng));
  params.add(param_names::kTimeB1, uniform_init(1, d, d, rng));
  params.add(param_names::kTimeW2, uniform_init(d, d, d, rng));
  params.add(param_names::kTimeB2, Tensor2(1, d));
}

DualEmbedding lookup_dual(const ParamRegistry& params, ItemIndex item) {
  const Tensor2& hc = params.value(param_names::kInteraction);
  const Tensor2& he = params.value(param_names::kExposure);
  if (item >= hc.rows()) {
    throw IndexError(fmt::format("item {} out of range ({} items)", item, hc.rows()));
  }
  DualEmbedding out;
  out.interaction.assign(hc.row(item).begin(), hc.row(item).end());
  out.exposure.assign(he.row(item).begin(), he.row(item).end());
  return out;
}

std::vector<double> embed_time(const ParamRegistry& params, double normalized_gap) {
  if (!std::isfinite(normalized_gap)) throw NumericError("non-finite time gap");
  const Tensor2& w1 = params.value(param_names::kTimeW1);
  const Tensor2& b1 = params.value(param_names::kTimeB1);
  const Tensor2& w2 = params.value(param_names::kTimeW2);
  const Tensor2& b2 = params.value(param_names::kTimeB2);
  Tensor2 hidden(1, w1.cols());
  for (std::size_t j = 0; j < w1.cols(); ++j) {
    hidden(0, j) = std::tanh(normalized_gap * w1(0, j) + b1(0, j));
  }
  const Tensor2 out = affine(hidden, w2, b2);
  return out.data();
}

Var embed_times(Tape& tape, ParamRegistry& params, std::span<const double> normalized_gaps) {
  for (double g : normalized_gaps) {
    if (!std::isfinite(g)) throw NumericError("non-finite time gap");
  }
  Var gaps = tape.constant(
      Tensor2(normalized_gaps.size(), 1,
              std::vector<double>(normalized_gaps.begin(), normalized_gaps.end())));
  Var hidden = ad::tanh(ad::affine(gaps, tape.param(params, param_names::kTimeW1),
                                   tape.param(params, param_names::kTimeB1)));
  return ad::affine(hidden, tape.param(params, param_names::kTimeW2),
                    tape.param(params, param_names::kTimeB2));
}

FusedSequence fuse_sequence(Tape& tape, ParamRegistry& params, std::span<const ItemIndex> items,
                            std::span<const double> normalized_gaps, std::size_t max_len,
                            bool use_time) {
  if (items.size() != normalized_gaps.size()) {
    throw DimensionError(fmt::format("sequence has {} items but {} gaps", items.size(),
                                     normalized_gaps.size()));
  }
  if (items.size() > max_len) {
    throw DimensionError(fmt::format("sequence length {} exceeds max {}", items.size(), max_len));
  }
  const std::size_t pad = max_len - items.size();
  std::vector<std::size_t> rows(max_len, kNoRow);
  std::copy(items.begin(), items.end(), rows.begin() + static_cast<std::ptrdiff_t>(pad));
  Var s = tape.gather(params, param_names::kInteraction, rows);
  if (use_time && !items.empty()) {
    s = ad::add(s, ad::pad_top(embed_times(tape, params, normalized_gaps), pad));
  }
  return FusedSequence{s, pad};
}

Var exposure_query(Tape& tape, ParamRegistry& params, ItemIndex item, double normalized_gap,
                   bool use_time, std::span<const double> delta) {
  const std::size_t row[1] = {item};
  Var q = tape.gather(params, param_names::kExposure, row);
  if (use_time) {
    const double gap[1] = {normalized_gap};
    Var t = embed_times(tape, params, gap);
    if (!delta.empty()) t = ad::add(t, tape.constant(Tensor2::row_vector(delta)));
    q = ad::add(q, t);
  }
  return q;
}

}  // namespace tips
