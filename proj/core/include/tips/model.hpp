#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tips/encoders.hpp"
#include "tips/exposure_model.hpp"
#include "tips/objective.hpp"
#include "tips/recommender.hpp"

namespace tips {

// Exposure model plus backbone wired for one training mode. Stateless apart
// from its configuration; all weights live in the ParamRegistry.
class TipsModel {
 public:
  TipsModel(ModelDims dims, Mode mode, const std::string& backbone);

  void register_params(ParamRegistry& params, Rng& rng, bool symmetric_init) const;

  /// A history already mapped to items and normalized gaps.
  struct Encoded {
    FusedSequence sequence;
    std::optional<ExposureModel::Projected> projected;
    ItemIndex last_item = 0;
    double last_gap = 0.0;
  };
  /// Throws PreconditionError for an empty history.
  Encoded encode(Tape& tape, ParamRegistry& params, std::span<const ItemIndex> items,
                 std::span<const double> gaps) const;

  /// 1 x d user vector. With an exposure model the backbone reads the
  /// exposure-aware sequence built from the last history item's query.
  Var user_vector(Tape& tape, ParamRegistry& params, const Encoded& history) const;

  /// Propensity output for (item, gap since the last history event).
  ExposureModel::Output propensity(Tape& tape, ParamRegistry& params, const Encoded& history,
                                   ItemIndex item, double gap,
                                   std::span<const double> delta = {}) const;

  const ModelDims& dims() const noexcept { return dims_; }
  Mode mode() const noexcept { return mode_; }
  const ModeTraits& traits() const noexcept { return traits_; }
  const Backbone& backbone() const noexcept { return *backbone_; }
  const std::string& backbone_kind() const noexcept { return backbone_kind_; }

 private:
  ModelDims dims_;
  Mode mode_;
  ModeTraits traits_;
  ExposureModel exposure_;
  std::string backbone_kind_;
  std::shared_ptr<const Backbone> backbone_;
};

}  // namespace tips
