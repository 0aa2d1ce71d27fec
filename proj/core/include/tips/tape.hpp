#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tips/params.hpp"
#include "tips/tensor.hpp"

namespace tips {

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor2& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;
};

/// Row index meaning "no row": gather() emits a zero row with no gradient.
inline constexpr std::size_t kNoRow = std::numeric_limits<std::size_t>::max();

/// Allowed (query row, key row) pairs for attention. Rows with no allowed key
/// produce a zero output row and receive no gradient.
class AttentionMask {
 public:
  AttentionMask() = default;
  AttentionMask(std::size_t queries, std::size_t keys, bool allow_all);

  /// One query row attending to keys [first_valid, keys).
  static AttentionMask single(std::size_t keys, std::size_t first_valid);
  /// keys query rows; row m attends to keys [first_valid, m]. Rows before
  /// first_valid are fully masked.
  static AttentionMask causal(std::size_t keys, std::size_t first_valid);

  std::size_t queries() const noexcept { return queries_; }
  std::size_t keys() const noexcept { return keys_; }
  bool allowed(std::size_t q, std::size_t k) const { return allow_[q * keys_ + k] != 0; }
  void set(std::size_t q, std::size_t k, bool allow) { allow_[q * keys_ + k] = allow ? 1 : 0; }

 private:
  std::size_t queries_ = 0;
  std::size_t keys_ = 0;
  std::vector<std::uint8_t> allow_;
};

// Reverse-mode tape. Nodes are appended in evaluation order; backward() walks
// them in reverse. Gradients are additive and land in the ParamRegistry slots
// of the parameters that were read, so callers zero the registry once per batch.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var constant(Tensor2 value);
  /// Leaf holding a copy of a registered parameter.
  Var param(ParamRegistry& registry, const std::string& name);
  /// Rows of a registered parameter table (kNoRow gives a zero row).
  Var gather(ParamRegistry& registry, const std::string& name,
             std::span<const std::size_t> rows);

  void backward(Var loss);

  const Tensor2& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by op implementations.
  Var push(Tensor2 value, bool requires_grad, Backward backward);
  const Tensor2& grad(std::size_t id) const { return nodes_[id].grad; }
  Tensor2& grad_slot(std::size_t id);

 private:
  struct Node {
    Tensor2 value;
    Tensor2 grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

namespace ad {

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// x + b with the 1 x n row b broadcast over rows.
Var add_row(Var x, Var b);
Var affine(Var x, Var weight, Var bias);
Var scale(Var a, double c);
/// Elementwise product.
Var mul(Var a, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
Var log_sigmoid(Var a);
/// Sum of all entries (1x1).
Var sum(Var a);
/// Mean of all entries (1x1).
Var mean(Var a);
/// Mean over rows [first_row, rows) and all columns (1x1).
Var mean_from_row(Var a, std::size_t first_row);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var row(Var a, std::size_t r);
Var repeat_rows(Var a, std::size_t n);
/// Prepends n zero rows.
Var pad_top(Var a, std::size_t n);
/// Value copy with no gradient path.
Var detach(Var a);
/// Masked softmax(scale * q k^T) v.
Var attention(Var q, Var k, Var v, const AttentionMask& mask, double scale);
/// One 1 x h query against every prefix: row m attends to keys
/// [first_valid, m]; rows before first_valid are zero. Equals attention() with
/// the query repeated and a causal mask, at O(len) logits. A pinned key/value
/// row, when given, is visible to every row.
Var prefix_attention(Var q, Var k, Var v, std::size_t first_valid, double scale,
                     std::optional<Var> pinned_k = std::nullopt,
                     std::optional<Var> pinned_v = std::nullopt);

}  // namespace ad
}  // namespace tips
