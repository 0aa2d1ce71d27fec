#include "tips/tape.hpp"

#include <optional>

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "tips/errors.hpp"

namespace tips {

const Tensor2& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const Tensor2& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw DimensionError(fmt::format("expected a scalar node, got {}", v.shape_string()));
  }
  return v[0];
}

AttentionMask::AttentionMask(std::size_t queries, std::size_t keys, bool allow_all)
    : queries_(queries), keys_(keys), allow_(queries * keys, allow_all ? 1 : 0) {}

AttentionMask AttentionMask::single(std::size_t keys, std::size_t first_valid) {
  AttentionMask m(1, keys, false);
  for (std::size_t k = first_valid; k < keys; ++k) m.set(0, k, true);
  return m;
}

AttentionMask AttentionMask::causal(std::size_t keys, std::size_t first_valid) {
  AttentionMask m(keys, keys, false);
  for (std::size_t q = first_valid; q < keys; ++q) {
    for (std::size_t k = first_valid; k <= q; ++k) m.set(q, k, true);
  }
  return m;
}

Var Tape::push(Tensor2 value, bool requires_grad, Backward backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor2& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor2(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::constant(Tensor2 value) { return push(std::move(value), false, nullptr); }

Var Tape::param(ParamRegistry& registry, const std::string& name) {
  Param* p = &registry.at(name);
  return push(p->value, p->trainable, [p](Tape& t, std::size_t self) { p->grad += t.grad(self); });
}

Var Tape::gather(ParamRegistry& registry, const std::string& name,
                 std::span<const std::size_t> rows) {
  Param* p = &registry.at(name);
  const std::size_t width = p->value.cols();
  Tensor2 out(rows.size(), width);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] == kNoRow) continue;
    if (rows[r] >= p->value.rows()) {
      throw IndexError(fmt::format("row {} out of range for '{}' with {} rows", rows[r], name,
                                   p->value.rows()));
    }
    std::copy_n(&p->value(rows[r], 0), width, &out(r, 0));
  }
  std::vector<std::size_t> ids(rows.begin(), rows.end());
  return push(std::move(out), p->trainable, [p, ids = std::move(ids)](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    const std::size_t w = g.cols();
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] == kNoRow) continue;
      double* dst = &p->grad(ids[r], 0);
      const double* src = &g(r, 0);
      for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
    }
  });
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw PreconditionError("backward on a foreign tape");
  const Tensor2& lv = value(loss.id);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw DimensionError(fmt::format("backward needs a scalar loss, got {}", lv.shape_string()));
  }
  if (!std::isfinite(lv[0])) throw NumericError("non-finite loss");
  grad_slot(loss.id)[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
}

namespace ad {
namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw PreconditionError("vars from different tapes");
  return *a.tape;
}

void add_into(Tensor2& dst, const Tensor2& src) { dst += src; }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.push(tips::matmul(a.value(), b.value()), rg,
                [a = a.id, b = b.id](Tape& t, std::size_t self) {
                  const Tensor2& g = t.grad(self);
                  if (t.requires_grad(a)) add_into(t.grad_slot(a), tips::matmul_nt(g, t.value(b)));
                  if (t.requires_grad(b)) add_into(t.grad_slot(b), tips::matmul_tn(t.value(a), g));
                });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.push(tips::matmul_nt(a.value(), b.value()), rg,
                [a = a.id, b = b.id](Tape& t, std::size_t self) {
                  const Tensor2& g = t.grad(self);
                  if (t.requires_grad(a)) add_into(t.grad_slot(a), tips::matmul(g, t.value(b)));
                  if (t.requires_grad(b)) add_into(t.grad_slot(b), tips::matmul_tn(g, t.value(a)));
                });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(fmt::format("add: {} vs {}", a.value().shape_string(),
                                     b.value().shape_string()));
  }
  Tensor2 out = a.value();
  out += b.value();
  const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.push(std::move(out), rg, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    if (t.requires_grad(a)) add_into(t.grad_slot(a), g);
    if (t.requires_grad(b)) add_into(t.grad_slot(b), g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(fmt::format("sub: {} vs {}", a.value().shape_string(),
                                     b.value().shape_string()));
  }
  Tensor2 out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.push(std::move(out), rg, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    if (t.requires_grad(a)) add_into(t.grad_slot(a), g);
    if (t.requires_grad(b)) {
      Tensor2& gb = t.grad_slot(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var add_row(Var x, Var b) {
  Tape& t = same_tape(x, b);
  const Tensor2& xv = x.value();
  const Tensor2& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw DimensionError(fmt::format("add_row: x {} with bias {}", xv.shape_string(),
                                     bv.shape_string()));
  }
  Tensor2 out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv(0, j);
  }
  const bool rg = t.requires_grad(x.id) || t.requires_grad(b.id);
  return t.push(std::move(out), rg, [x = x.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    if (t.requires_grad(x)) add_into(t.grad_slot(x), g);
    if (t.requires_grad(b)) {
      Tensor2& gb = t.grad_slot(b);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
      }
    }
  });
}

Var affine(Var x, Var weight, Var bias) {
  if (x.cols() != weight.rows() || bias.rows() != 1 || bias.cols() != weight.cols()) {
    throw DimensionError(fmt::format("affine: x {} W {} b {}", x.value().shape_string(),
                                     weight.value().shape_string(), bias.value().shape_string()));
  }
  return add_row(matmul(x, weight), bias);
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  Tensor2 out = a.value();
  for (double& v : out.values()) v *= c;
  return t.push(std::move(out), t.requires_grad(a.id), [a = a.id, c](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    Tensor2& ga = t.grad_slot(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(fmt::format("mul: {} vs {}", a.value().shape_string(),
                                     b.value().shape_string()));
  }
  Tensor2 out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.push(std::move(out), rg, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    if (t.requires_grad(a)) {
      Tensor2& ga = t.grad_slot(a);
      const Tensor2& bv = t.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      Tensor2& gb = t.grad_slot(b);
      const Tensor2& av = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var tanh(Var a) {
  Tape& t = *a.tape;
  Tensor2 out = a.value();
  for (double& v : out.values()) v = std::tanh(v);
  return t.push(std::move(out), t.requires_grad(a.id), [a = a.id](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    const Tensor2& y = t.value(self);
    Tensor2& ga = t.grad_slot(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Tensor2 out = a.value();
  for (double& v : out.values()) v = tips::sigmoid(v);
  return t.push(std::move(out), t.requires_grad(a.id), [a = a.id](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    const Tensor2& y = t.value(self);
    Tensor2& ga = t.grad_slot(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var log_sigmoid(Var a) {
  Tape& t = *a.tape;
  Tensor2 out = a.value();
  for (double& v : out.values()) v = tips::log_sigmoid(v);
  return t.push(std::move(out), t.requires_grad(a.id), [a = a.id](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    const Tensor2& x = t.value(a);
    Tensor2& ga = t.grad_slot(a);
    // d/dx log sigmoid(x) = sigmoid(-x)
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * tips::sigmoid(-x[i]);
  });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.push(Tensor2(1, 1, s), t.requires_grad(a.id), [a = a.id](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad_slot(a).values()) v += g;
  });
}

Var mean(Var a) {
  if (a.value().empty()) throw PreconditionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mean_from_row(Var a, std::size_t first_row) {
  Tape& t = *a.tape;
  const Tensor2& v = a.value();
  if (first_row >= v.rows()) throw PreconditionError("mean over zero rows");
  const double count = static_cast<double>((v.rows() - first_row) * v.cols());
  double s = 0.0;
  for (std::size_t i = first_row * v.cols(); i < v.size(); ++i) s += v[i];
  return t.push(Tensor2(1, 1, s / count), t.requires_grad(a.id),
                [a = a.id, first_row, count](Tape& t, std::size_t self) {
                  const double g = t.grad(self)[0] / count;
                  Tensor2& ga = t.grad_slot(a);
                  for (std::size_t i = first_row * ga.cols(); i < ga.size(); ++i) ga[i] += g;
                });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Tape& t = *a.tape;
  const Tensor2& v = a.value();
  if (start + count > v.cols()) {
    throw DimensionError(fmt::format("slice_cols [{}, {}) of {}", start, start + count,
                                     v.shape_string()));
  }
  Tensor2 out(v.rows(), count);
  for (std::size_t i = 0; i < v.rows(); ++i) std::copy_n(&v(i, start), count, &out(i, 0));
  return t.push(std::move(out), t.requires_grad(a.id),
                [a = a.id, start, count](Tape& t, std::size_t self) {
                  const Tensor2& g = t.grad(self);
                  Tensor2& ga = t.grad_slot(a);
                  for (std::size_t i = 0; i < g.rows(); ++i) {
                    for (std::size_t j = 0; j < count; ++j) ga(i, start + j) += g(i, j);
                  }
                });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw PreconditionError("concat_cols of nothing");
  Tape& t = *parts[0].tape;
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  bool rg = false;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (p.tape != &t) throw PreconditionError("vars from different tapes");
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.cols();
    rg = rg || t.requires_grad(p.id);
    ids.push_back(p.id);
  }
  Tensor2 out(rows, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor2& v = p.value();
    for (std::size_t i = 0; i < rows; ++i) std::copy_n(&v(i, 0), v.cols(), &out(i, off));
    off += v.cols();
  }
  return t.push(std::move(out), rg, [ids = std::move(ids)](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const std::size_t w = t.value(id).cols();
      if (t.requires_grad(id)) {
        Tensor2& gi = t.grad_slot(id);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < w; ++j) gi(i, j) += g(i, off + j);
        }
      }
      off += w;
    }
  });
}

Var row(Var a, std::size_t r) {
  Tape& t = *a.tape;
  const Tensor2& v = a.value();
  if (r >= v.rows()) throw IndexError(fmt::format("row {} of {}", r, v.shape_string()));
  return t.push(Tensor2::row_vector(v.row(r)), t.requires_grad(a.id),
                [a = a.id, r](Tape& t, std::size_t self) {
                  const Tensor2& g = t.grad(self);
                  Tensor2& ga = t.grad_slot(a);
                  for (std::size_t j = 0; j < g.cols(); ++j) ga(r, j) += g(0, j);
                });
}

Var repeat_rows(Var a, std::size_t n) {
  Tape& t = *a.tape;
  const Tensor2& v = a.value();
  if (v.rows() != 1) throw DimensionError("repeat_rows expects a row vector");
  Tensor2 out(n, v.cols());
  for (std::size_t i = 0; i < n; ++i) std::copy_n(&v(0, 0), v.cols(), &out(i, 0));
  return t.push(std::move(out), t.requires_grad(a.id), [a = a.id](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    Tensor2& ga = t.grad_slot(a);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) ga(0, j) += g(i, j);
    }
  });
}

Var pad_top(Var a, std::size_t n) {
  Tape& t = *a.tape;
  if (n == 0) return a;
  const Tensor2& v = a.value();
  Tensor2 out(v.rows() + n, v.cols());
  std::copy(v.values().begin(), v.values().end(), out.values().begin() + n * v.cols());
  return t.push(std::move(out), t.requires_grad(a.id), [a = a.id, n](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    Tensor2& ga = t.grad_slot(a);
    const std::size_t off = n * g.cols();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[off + i];
  });
}

Var detach(Var a) { return a.tape->constant(a.value()); }

Var attention(Var q, Var k, Var v, const AttentionMask& mask, double scale) {
  Tape& t = same_tape(q, k);
  same_tape(k, v);
  const Tensor2& qv = q.value();
  const Tensor2& kv = k.value();
  const Tensor2& vv = v.value();
  if (qv.cols() != kv.cols() || kv.rows() != vv.rows()) {
    throw DimensionError(fmt::format("attention: q {} k {} v {}", qv.shape_string(),
                                     kv.shape_string(), vv.shape_string()));
  }
  if (mask.queries() != qv.rows() || mask.keys() != kv.rows()) {
    throw DimensionError(fmt::format("attention mask {}x{} for q {} k {}", mask.queries(),
                                     mask.keys(), qv.shape_string(), kv.shape_string()));
  }
  const std::size_t nq = qv.rows();
  const std::size_t nk = kv.rows();
  Tensor2 weights(nq, nk);
  for (std::size_t i = 0; i < nq; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nk; ++j) {
      if (!mask.allowed(i, j)) continue;
      const double z = scale * dot(qv.row(i), kv.row(j));
      weights(i, j) = z;
      mx = std::max(mx, z);
    }
    if (mx == -std::numeric_limits<double>::infinity()) continue;
    double total = 0.0;
    for (std::size_t j = 0; j < nk; ++j) {
      if (!mask.allowed(i, j)) continue;
      weights(i, j) = std::exp(weights(i, j) - mx);
      total += weights(i, j);
    }
    for (std::size_t j = 0; j < nk; ++j) weights(i, j) /= total;
  }
  Tensor2 out = tips::matmul(weights, vv);
  const bool rg = t.requires_grad(q.id) || t.requires_grad(k.id) || t.requires_grad(v.id);
  return t.push(std::move(out), rg,
                [q = q.id, k = k.id, v = v.id, a = std::move(weights), scale](Tape& t,
                                                                              std::size_t self) {
                  const Tensor2& g = t.grad(self);
                  if (t.requires_grad(v)) add_into(t.grad_slot(v), tips::matmul_tn(a, g));
                  if (!t.requires_grad(q) && !t.requires_grad(k)) return;
                  // dZ = A .* (dA - rowsum(dA .* A)), dA = G V^T
                  Tensor2 dz = tips::matmul_nt(g, t.value(v));
                  for (std::size_t i = 0; i < dz.rows(); ++i) {
                    double inner = 0.0;
                    for (std::size_t j = 0; j < dz.cols(); ++j) inner += dz(i, j) * a(i, j);
                    for (std::size_t j = 0; j < dz.cols(); ++j) {
                      dz(i, j) = scale * a(i, j) * (dz(i, j) - inner);
                    }
                  }
                  if (t.requires_grad(q)) add_into(t.grad_slot(q), tips::matmul(dz, t.value(k)));
                  if (t.requires_grad(k)) add_into(t.grad_slot(k), tips::matmul_tn(dz, t.value(q)));
                });
}

Var prefix_attention(Var q, Var k, Var v, std::size_t first_valid, double scale,
                     std::optional<Var> pinned_k, std::optional<Var> pinned_v) {
  Tape& t = same_tape(q, k);
  same_tape(k, v);
  const Tensor2& qv = q.value();
  const Tensor2& kv = k.value();
  const Tensor2& vv = v.value();
  if (qv.rows() != 1 || qv.cols() != kv.cols() || kv.rows() != vv.rows()) {
    throw DimensionError(fmt::format("prefix_attention: q {} k {} v {}", qv.shape_string(),
                                     kv.shape_string(), vv.shape_string()));
  }
  if (pinned_k.has_value() != pinned_v.has_value()) {
    throw PreconditionError("prefix_attention: pinned key and value come together");
  }
  const bool pin = pinned_k.has_value();
  if (pin && (pinned_k->rows() != 1 || pinned_k->cols() != kv.cols() || pinned_v->rows() != 1 ||
              pinned_v->cols() != vv.cols())) {
    throw DimensionError("prefix_attention: pinned rows must be 1 x width");
  }
  const std::size_t len = kv.rows();
  const std::size_t w = vv.cols();
  // Logit slot len holds the pinned key.
  std::vector<double> z(len + 1, 0.0);
  for (std::size_t j = first_valid; j < len; ++j) z[j] = scale * dot(qv.row(0), kv.row(j));
  if (pin) z[len] = scale * dot(qv.row(0), pinned_k->value().row(0));
  // Row m holds the softmax over logits [first_valid, m] (plus the pinned
  // key); column len of a is the pinned weight.
  Tensor2 a(len, len + 1);
  Tensor2 out(len, w);
  double running = pin ? z[len] : -std::numeric_limits<double>::infinity();
  for (std::size_t m = first_valid; m < len; ++m) {
    running = std::max(running, z[m]);
    double total = 0.0;
    for (std::size_t j = first_valid; j <= m; ++j) {
      a(m, j) = std::exp(z[j] - running);
      total += a(m, j);
    }
    if (pin) {
      a(m, len) = std::exp(z[len] - running);
      total += a(m, len);
    }
    double* o = &out(m, 0);
    for (std::size_t j = first_valid; j <= m; ++j) {
      a(m, j) /= total;
      const double* vj = &vv(j, 0);
      for (std::size_t c = 0; c < w; ++c) o[c] += a(m, j) * vj[c];
    }
    if (pin) {
      a(m, len) /= total;
      const double* vp = &pinned_v->value()(0, 0);
      for (std::size_t c = 0; c < w; ++c) o[c] += a(m, len) * vp[c];
    }
  }
  const std::size_t pk = pin ? pinned_k->id : 0;
  const std::size_t pv = pin ? pinned_v->id : 0;
  bool rg = t.requires_grad(q.id) || t.requires_grad(k.id) || t.requires_grad(v.id);
  if (pin) rg = rg || t.requires_grad(pk) || t.requires_grad(pv);
  return t.push(std::move(out), rg,
                [q = q.id, k = k.id, v = v.id, pin, pk, pv, a = std::move(a), first_valid,
                 scale](Tape& t, std::size_t self) {
                  const Tensor2& g = t.grad(self);
                  const Tensor2& vv = t.value(v);
                  const std::size_t len = vv.rows();
                  const std::size_t w = vv.cols();
                  if (t.requires_grad(v)) {
                    Tensor2& dv = t.grad_slot(v);
                    for (std::size_t m = first_valid; m < len; ++m) {
                      const double* gm = &g(m, 0);
                      for (std::size_t j = first_valid; j <= m; ++j) {
                        double* d = &dv(j, 0);
                        for (std::size_t c = 0; c < w; ++c) d[c] += a(m, j) * gm[c];
                      }
                    }
                  }
                  if (pin && t.requires_grad(pv)) {
                    Tensor2& dp = t.grad_slot(pv);
                    for (std::size_t m = first_valid; m < len; ++m) {
                      for (std::size_t c = 0; c < w; ++c) dp(0, c) += a(m, len) * g(m, c);
                    }
                  }
                  const bool need_z = t.requires_grad(q) || t.requires_grad(k) ||
                                      (pin && t.requires_grad(pk));
                  if (!need_z) return;
                  std::vector<double> dz(len + 1, 0.0);
                  std::vector<double> da(len + 1);
                  for (std::size_t m = first_valid; m < len; ++m) {
                    double inner = 0.0;
                    for (std::size_t j = first_valid; j <= m; ++j) {
                      da[j] = dot(g.row(m), vv.row(j));
                      inner += a(m, j) * da[j];
                    }
                    if (pin) {
                      da[len] = dot(g.row(m), t.value(pv).row(0));
                      inner += a(m, len) * da[len];
                    }
                    for (std::size_t j = first_valid; j <= m; ++j) {
                      dz[j] += scale * a(m, j) * (da[j] - inner);
                    }
                    if (pin) dz[len] += scale * a(m, len) * (da[len] - inner);
                  }
                  const Tensor2& qv = t.value(q);
                  const Tensor2& kv = t.value(k);
                  const std::size_t h = kv.cols();
                  if (t.requires_grad(q)) {
                    Tensor2& dq = t.grad_slot(q);
                    for (std::size_t j = first_valid; j < len; ++j) {
                      for (std::size_t c = 0; c < h; ++c) dq(0, c) += dz[j] * kv(j, c);
                    }
                    if (pin) {
                      const Tensor2& kp = t.value(pk);
                      for (std::size_t c = 0; c < h; ++c) dq(0, c) += dz[len] * kp(0, c);
                    }
                  }
                  if (t.requires_grad(k)) {
                    Tensor2& dk = t.grad_slot(k);
                    for (std::size_t j = first_valid; j < len; ++j) {
                      for (std::size_t c = 0; c < h; ++c) dk(j, c) += dz[j] * qv(0, c);
                    }
                  }
                  if (pin && t.requires_grad(pk)) {
                    Tensor2& dk = t.grad_slot(pk);
                    for (std::size_t c = 0; c < h; ++c) dk(0, c) += dz[len] * qv(0, c);
                  }
                });
}

}  // namespace ad
}  // namespace tips
