#include "tips/exposure_model.hpp"

#include <cmath>

#include <fmt/format.h>

#include "tips/errors.hpp"

namespace tips {

namespace {
std::string head_param(std::size_t n, const char* what) {
  return fmt::format("exposure.h{}.{}", n, what);
}
}  // namespace

ExposureModel::ExposureModel(ModelDims dims) : dims_(dims) { dims_.validate(); }

void ExposureModel::register_params(ParamRegistry& params, Rng& rng, bool symmetric_init) const {
  const std::size_t d = dims_.dim;
  const std::size_t h = dims_.head_dim();
  for (std::size_t n = 0; n < dims_.heads; ++n) {
    params.add(head_param(n, "wq"), uniform_init(d, h, d, rng));
    params.add(head_param(n, "bq"), Tensor2(1, h));
    params.add(head_param(n, "wk"), uniform_init(d, h, d, rng));
    params.add(head_param(n, "bk"), Tensor2(1, h));
    params.add(head_param(n, "wv"), symmetric_init ? Tensor2(d, h) : uniform_init(d, h, d, rng));
    params.add(head_param(n, "bv"), Tensor2(1, h));
  }
}

ExposureModel::Projected ExposureModel::project(Tape& tape, ParamRegistry& params,
                                                const FusedSequence& seq) const {
  Projected out;
  out.first_valid = seq.first_valid;
  out.length = seq.length();
  for (std::size_t n = 0; n < dims_.heads; ++n) {
    out.keys.push_back(ad::affine(seq.rows, tape.param(params, head_param(n, "wk")),
                                  tape.param(params, head_param(n, "bk"))));
    out.values.push_back(ad::affine(seq.rows, tape.param(params, head_param(n, "wv")),
                                    tape.param(params, head_param(n, "bv"))));
  }
  return out;
}

ExposureModel::Output ExposureModel::propensity(Tape& tape, ParamRegistry& params,
                                                const Projected& seq, Var query) const {
  if (seq.first_valid >= seq.length) {
    throw PreconditionError("propensity of a fully masked sequence");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims_.dim));
  std::vector<Var> heads;
  heads.reserve(dims_.heads);
  for (std::size_t n = 0; n < dims_.heads; ++n) {
    Var q = ad::affine(query, tape.param(params, head_param(n, "wq")),
                       tape.param(params, head_param(n, "bq")));
    if (dims_.query_self_attention) {
      Var kq = ad::affine(query, tape.param(params, head_param(n, "wk")),
                          tape.param(params, head_param(n, "bk")));
      Var vq = ad::affine(query, tape.param(params, head_param(n, "wv")),
                          tape.param(params, head_param(n, "bv")));
      heads.push_back(
          ad::prefix_attention(q, seq.keys[n], seq.values[n], seq.first_valid, scale, kq, vq));
    } else {
      heads.push_back(
          ad::prefix_attention(q, seq.keys[n], seq.values[n], seq.first_valid, scale));
    }
  }
  Output out;
  out.exposure_aware = ad::concat_cols(heads);
  out.raw = ad::mean_from_row(out.exposure_aware, seq.first_valid);
  out.propensity = ad::sigmoid(out.raw);
  return out;
}

}  // namespace tips
