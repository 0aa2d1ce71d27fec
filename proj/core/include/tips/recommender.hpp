#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tips/encoders.hpp"

namespace tips {

// Sequential recommender g_theta. A backbone turns an (exposure-aware)
// sequence into a user vector; candidates are scored by inner product with
// their H^(C) rows, independently of each other.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual std::string name() const = 0;
  virtual void register_params(ParamRegistry& params, Rng& rng) const = 0;
  /// sequence: length x d with rows before first_valid masked. Returns 1 x d.
  virtual Var encode_user(Tape& tape, ParamRegistry& params, Var sequence,
                          std::size_t first_valid) const = 0;
};

/// Multi-head self-attention read out at the last valid position. Head
/// outputs occupy disjoint head-major column blocks, so summing heads equals
/// concatenating them.
class AttentionBackbone final : public Backbone {
 public:
  explicit AttentionBackbone(ModelDims dims);
  std::string name() const override { return "attention"; }
  void register_params(ParamRegistry& params, Rng& rng) const override;
  Var encode_user(Tape& tape, ParamRegistry& params, Var sequence,
                  std::size_t first_valid) const override;

 private:
  ModelDims dims_;
};

/// u = mean of the valid rows. No parameters.
class MeanPoolBackbone final : public Backbone {
 public:
  std::string name() const override { return "mean"; }
  void register_params(ParamRegistry&, Rng&) const override {}
  Var encode_user(Tape& tape, ParamRegistry& params, Var sequence,
                  std::size_t first_valid) const override;
};

/// Placeholder for generative (diffusion / CVAE) backbones, which this
/// library does not provide. Construction always throws.
class GenerativeBackbone final : public Backbone {
 public:
  explicit GenerativeBackbone(const std::string& kind);
  std::string name() const override { return "generative"; }
  void register_params(ParamRegistry&, Rng&) const override {}
  Var encode_user(Tape&, ParamRegistry&, Var, std::size_t) const override;
};

/// "attention" | "mean"; "diffusion" and "cvae" throw PreconditionError.
std::unique_ptr<Backbone> make_backbone(const std::string& kind, const ModelDims& dims);

/// 1 x n row of <u, c_v> for the candidates.
Var score_candidates(Tape& tape, ParamRegistry& params, Var user,
                     std::span<const ItemIndex> candidates);

/// <u, c_candidate>. Throws IndexError for an invalid id.
double score(const ParamRegistry& params, std::span<const double> user, ItemIndex candidate);

/// Candidates sorted by descending score, ties by ascending item index.
std::vector<ItemIndex> rank_by_scores(std::span<const ItemIndex> candidates,
                                      std::span<const double> scores);
std::vector<ItemIndex> rank(const ParamRegistry& params, std::span<const double> user,
                            std::span<const ItemIndex> candidates);

}  // namespace tips
