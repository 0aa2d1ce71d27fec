#include "tips/model.hpp"

#include "tips/errors.hpp"

namespace tips {

TipsModel::TipsModel(ModelDims dims, Mode mode, const std::string& backbone)
    : dims_(dims),
      mode_(mode),
      traits_(ModeTraits::of(mode)),
      exposure_(dims),
      backbone_kind_(backbone),
      backbone_(make_backbone(backbone, dims)) {}

void TipsModel::register_params(ParamRegistry& params, Rng& rng, bool symmetric_init) const {
  register_encoder_params(params, dims_, rng);
  exposure_.register_params(params, rng, symmetric_init);
  backbone_->register_params(params, rng);
}

TipsModel::Encoded TipsModel::encode(Tape& tape, ParamRegistry& params,
                                     std::span<const ItemIndex> items,
                                     std::span<const double> gaps) const {
  if (items.empty()) throw PreconditionError("empty history");
  if (items.size() > dims_.max_len) {
    items = items.last(dims_.max_len);
    gaps = gaps.last(dims_.max_len);
  }
  // Padding rows are masked everywhere, so the sequence is built at its
  // natural length.
  Encoded out{fuse_sequence(tape, params, items, gaps, items.size(), traits_.use_time),
              std::nullopt, items.back(), gaps.back()};
  if (traits_.exposure_model) out.projected = exposure_.project(tape, params, out.sequence);
  return out;
}

Var TipsModel::user_vector(Tape& tape, ParamRegistry& params, const Encoded& history) const {
  if (!history.projected) {
    return backbone_->encode_user(tape, params, history.sequence.rows,
                                  history.sequence.first_valid);
  }
  Var query = exposure_query(tape, params, history.last_item, history.last_gap, traits_.use_time);
  const auto out = exposure_.propensity(tape, params, *history.projected, query);
  return backbone_->encode_user(tape, params, out.exposure_aware, history.sequence.first_valid);
}

ExposureModel::Output TipsModel::propensity(Tape& tape, ParamRegistry& params,
                                            const Encoded& history, ItemIndex item, double gap,
                                            std::span<const double> delta) const {
  if (!history.projected) throw PreconditionError("mode has no exposure model");
  Var query = exposure_query(tape, params, item, gap, traits_.use_time, delta);
  return exposure_.propensity(tape, params, *history.projected, query);
}

}  // namespace tips
