#pragma once

#include <vector>

#include "tips/encoders.hpp"

namespace tips {

/// Propensity estimator: multi-head cross-attention from one exposure query
/// onto the fused interaction sequence, mean-pooled and squashed to (0, 1).
class ExposureModel {
 public:
  explicit ExposureModel(ModelDims dims);

  /// Per head n: exposure.h{n}.{wq,bq,wk,bk,wv,bv}, weights d x d/N. With
  /// symmetric_init the value projections start at zero, so every propensity
  /// is exactly 0.5 before training.
  void register_params(ParamRegistry& params, Rng& rng, bool symmetric_init) const;

  /// Keys and values of a sequence, shared by every query against it.
  struct Projected {
    std::vector<Var> keys;
    std::vector<Var> values;
    std::size_t first_valid = 0;
    std::size_t length = 0;
  };
  Projected project(Tape& tape, ParamRegistry& params, const FusedSequence& seq) const;

  struct Output {
    Var raw;             // 1x1, mean of the exposure-aware sequence
    Var propensity;      // 1x1, logistic(raw)
    Var exposure_aware;  // length x d, head-major column blocks
  };
  /// Row m of the exposure-aware sequence is the query's attention over the
  /// prefix of valid rows ending at m. Throws PreconditionError when the
  /// sequence has no valid rows.
  Output propensity(Tape& tape, ParamRegistry& params, const Projected& seq, Var query) const;

  const ModelDims& dims() const noexcept { return dims_; }

 private:
  ModelDims dims_;
};

}  // namespace tips
