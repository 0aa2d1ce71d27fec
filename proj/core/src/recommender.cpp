#include "tips/recommender.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "tips/errors.hpp"

namespace tips {

namespace {
std::string head_param(std::size_t n, const char* what) {
  return fmt::format("backbone.h{}.{}", n, what);
}
}  // namespace

AttentionBackbone::AttentionBackbone(ModelDims dims) : dims_(dims) { dims_.validate(); }

void AttentionBackbone::register_params(ParamRegistry& params, Rng& rng) const {
  const std::size_t d = dims_.dim;
  const std::size_t h = dims_.head_dim();
  for (std::size_t n = 0; n < dims_.heads; ++n) {
    for (const char* w : {"wq", "wk", "wv"}) params.add(head_param(n, w), uniform_init(d, h, d, rng));
    for (const char* b : {"bq", "bk", "bv"}) params.add(head_param(n, b), Tensor2(1, h));
  }
}

Var AttentionBackbone::encode_user(Tape& tape, ParamRegistry& params, Var sequence,
                                   std::size_t first_valid) const {
  const std::size_t len = sequence.rows();
  if (first_valid >= len) throw PreconditionError("cannot encode an empty sequence");
  const AttentionMask mask = AttentionMask::single(len, first_valid);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims_.dim));
  Var last = ad::row(sequence, len - 1);
  std::vector<Var> heads;
  for (std::size_t n = 0; n < dims_.heads; ++n) {
    Var q = ad::affine(last, tape.param(params, head_param(n, "wq")),
                       tape.param(params, head_param(n, "bq")));
    Var k = ad::affine(sequence, tape.param(params, head_param(n, "wk")),
                       tape.param(params, head_param(n, "bk")));
    Var v = ad::affine(sequence, tape.param(params, head_param(n, "wv")),
                       tape.param(params, head_param(n, "bv")));
    heads.push_back(ad::attention(q, k, v, mask, scale));
  }
  return ad::concat_cols(heads);
}

Var MeanPoolBackbone::encode_user(Tape& tape, ParamRegistry&, Var sequence,
                                  std::size_t first_valid) const {
  const std::size_t len = sequence.rows();
  if (first_valid >= len) throw PreconditionError("cannot encode an empty sequence");
  Tensor2 weights(1, len);
  for (std::size_t m = first_valid; m < len; ++m) {
    weights(0, m) = 1.0 / static_cast<double>(len - first_valid);
  }
  return ad::matmul(tape.constant(std::move(weights)), sequence);
}

GenerativeBackbone::GenerativeBackbone(const std::string& kind) {
  throw PreconditionError(
      fmt::format("generative backbone '{}' is not implemented; use 'attention' or 'mean'", kind));
}

Var GenerativeBackbone::encode_user(Tape&, ParamRegistry&, Var, std::size_t) const {
  throw PreconditionError("generative backbone is not implemented");
}

std::unique_ptr<Backbone> make_backbone(const std::string& kind, const ModelDims& dims) {
  if (kind == "attention") return std::make_unique<AttentionBackbone>(dims);
  if (kind == "mean") return std::make_unique<MeanPoolBackbone>();
  if (kind == "diffusion" || kind == "cvae") return std::make_unique<GenerativeBackbone>(kind);
  throw ConfigError(fmt::format("unknown backbone '{}'", kind));
}

Var score_candidates(Tape& tape, ParamRegistry& params, Var user,
                     std::span<const ItemIndex> candidates) {
  return ad::matmul_nt(user, tape.gather(params, param_names::kInteraction, candidates));
}

double score(const ParamRegistry& params, std::span<const double> user, ItemIndex candidate) {
  const Tensor2& hc = params.value(param_names::kInteraction);
  if (candidate >= hc.rows()) {
    throw IndexError(fmt::format("candidate {} out of range ({} items)", candidate, hc.rows()));
  }
  if (user.size() != hc.cols()) throw DimensionError("user vector width mismatch");
  return dot(user, hc.row(candidate));
}

std::vector<ItemIndex> rank_by_scores(std::span<const ItemIndex> candidates,
                                      std::span<const double> scores) {
  if (candidates.size() != scores.size()) throw DimensionError("rank: size mismatch");
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  });
  std::vector<ItemIndex> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(candidates[i]);
  return out;
}

std::vector<ItemIndex> rank(const ParamRegistry& params, std::span<const double> user,
                            std::span<const ItemIndex> candidates) {
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (ItemIndex c : candidates) scores.push_back(score(params, user, c));
  return rank_by_scores(candidates, scores);
}

}  // namespace tips
