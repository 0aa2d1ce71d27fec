#pragma once

#include <span>
#include <string>
#include <vector>

#include "tips/interaction_log.hpp"
#include "tips/params.hpp"
#include "tips/rng.hpp"
#include "tips/tape.hpp"

namespace tips {

struct ModelDims {
  std::size_t n_items = 0;
  std::size_t dim = 64;
  std::size_t heads = 2;
  std::size_t max_len = 50;
  // The exposure query also attends to its own key/value row.
  bool query_self_attention = false;

  std::size_t head_dim() const { return dim / heads; }
  /// Throws ConfigError unless heads >= 1 and dim is divisible by heads.
  void validate() const;
};

namespace param_names {
inline const std::string kInteraction = "embed.interaction";  // H^(C), |V| x d
inline const std::string kExposure = "embed.exposure";        // H^(E), |V| x d
inline const std::string kTimeW1 = "time.w1";
inline const std::string kTimeB1 = "time.b1";
inline const std::string kTimeW2 = "time.w2";
inline const std::string kTimeB2 = "time.b2";
}  // namespace param_names

/// Uniform [-1/sqrt(d), 1/sqrt(d)] tensor.
Tensor2 uniform_init(std::size_t rows, std::size_t cols, std::size_t dim, Rng& rng);

/// Registers both item tables and the time MLP.
void register_encoder_params(ParamRegistry& params, const ModelDims& dims, Rng& rng);

struct DualEmbedding {
  std::vector<double> interaction;
  std::vector<double> exposure;
};

/// Rows of H^(C) and H^(E) for one item. Throws IndexError when out of range.
DualEmbedding lookup_dual(const ParamRegistry& params, ItemIndex item);

/// Forward of the time MLP for one normalized gap (no tape).
std::vector<double> embed_time(const ParamRegistry& params, double normalized_gap);

/// Time MLP on the tape: P gaps -> P x d, tanh hidden layer of width d.
Var embed_times(Tape& tape, ParamRegistry& params, std::span<const double> normalized_gaps);

/// Interaction sequence of max_len rows, left-padded with zero rows. Rows
/// before first_valid are padding.
struct FusedSequence {
  Var rows;
  std::size_t first_valid = 0;

  std::size_t length() const { return rows.rows(); }
  std::size_t valid() const { return length() - first_valid; }
};

/// S[m] = c_{item_m} + t_m. With use_time false the time term is dropped.
FusedSequence fuse_sequence(Tape& tape, ParamRegistry& params, std::span<const ItemIndex> items,
                            std::span<const double> normalized_gaps, std::size_t max_len,
                            bool use_time);

/// Exposure query e_item + t(gap) (+ delta when given), always read from H^(E).
Var exposure_query(Tape& tape, ParamRegistry& params, ItemIndex item, double normalized_gap,
                   bool use_time, std::span<const double> delta = {});

}  // namespace tips
