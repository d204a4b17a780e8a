/* Copyright 2026 The TBJE Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "tbje/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "tbje/error.hpp"

namespace tbje {

namespace {

thread_local Tape* g_active_tape = nullptr;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_rank2(const Tensor& x, std::string_view op) {
  if (x.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " +
                         shape_string(x.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

// Splits `shape` around `axis` into (outer, n, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  s.n = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

template <typename Fwd, typename Deriv>
Tensor unary(std::string_view op, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  const Tensor inputs[] = {x};
  return make_op_result(op, x.shape(), std::move(out), inputs,
                        [deriv](std::span<const double> g, BackwardContext& ctx) {
                          auto gx = ctx.grad(0);
                          if (gx.empty()) return;
                          auto xv = ctx.value(0);
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * deriv(xv[i]);
                        });
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<detail::Node>()) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be >= 1, got " + shape_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor of shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> values;
  const std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("matrix rows must have equal length");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor(Shape{rows.size(), cols}, std::move(values));
}

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_string(shape()));
  }
  return node_->shape[axis];
}

std::size_t Tensor::rows() const { return extent(0); }

std::size_t Tensor::cols() const {
  if (rank() == 0) throw DimensionError("scalar tensor has no columns");
  return node_->shape.back();
}

std::span<double> Tensor::mutable_data() {
  if (node_->tape != nullptr) {
    throw ContractError("cannot mutate the output of a recorded op");
  }
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on a tensor of shape " + shape_string(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  require_rank2(*this, "at");
  return node_->value[row * node_->shape[1] + col];
}

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

std::span<double> Tensor::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(numel(), 0.0);
  return node_->grad;
}

Tensor Tensor::clone() const {
  Tensor t(node_->shape, node_->value);
  t.node_->requires_grad = node_->requires_grad && node_->tape == nullptr;
  return t;
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_string(this->shape()) + " to " +
                         shape_string(shape));
  }
  return Tensor(std::move(shape), node_->value);
}

// ---------------------------------------------------------------------------
// Tape

std::span<const double> BackwardContext::value(std::size_t i) const { return inputs_[i]->value; }

const Shape& BackwardContext::shape(std::size_t i) const { return inputs_[i]->shape; }

std::span<double> BackwardContext::grad(std::size_t i) const {
  auto& node = *inputs_[i];
  if (!node.requires_grad) return {};
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

Tape::~Tape() { clear(); }

void Tape::clear() {
  for (auto& e : entries_) {
    e.output->tape = nullptr;
    e.output->grad.clear();
  }
  entries_.clear();
  consumed_ = false;
  ++generation_;
}

void Tape::record(std::string_view op, std::span<const Tensor> inputs,
                  std::shared_ptr<detail::Node> output, BackwardFn fn) {
  if (consumed_) {
    throw ContractError("tape already replayed; clear() it before recording '" +
                        std::string(op) + "'");
  }
  Entry e;
  e.op = op;
  e.inputs.reserve(inputs.size());
  for (const auto& t : inputs) e.inputs.push_back(t.node_);
  output->tape = this;
  output->generation = generation_;
  e.output = std::move(output);
  e.backward = std::move(fn);
  entries_.push_back(std::move(e));
}

void Tape::run_backward(const std::shared_ptr<detail::Node>& loss) {
  if (loss->grad.empty()) loss->grad.assign(1, 0.0);
  loss->grad[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    BackwardContext ctx(it->inputs);
    it->backward(it->output->grad, ctx);
  }
  consumed_ = true;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

Tensor make_op_result(std::string_view op, Shape shape, std::vector<double> values,
                      std::span<const Tensor> inputs, BackwardFn backward_fn) {
  Tensor out(std::move(shape), std::move(values));
  Tape* tape = g_active_tape;
  if (tape == nullptr) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  out.node_->requires_grad = true;
  tape->record(op, inputs, out.node_, std::move(backward_fn));
  return out;
}

void backward(const Tensor& loss) {
  const auto& node = loss.node_;
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (node->tape == nullptr || node->generation != node->tape->generation_) {
    throw ContractError("backward(): loss was not produced on a live tape");
  }
  if (node->tape->consumed_) {
    throw ContractError("backward(): tape already replayed; run the forward pass again");
  }
  node->tape->run_backward(node);
}

// ---------------------------------------------------------------------------
// Primitives

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = av[i * k + p];
      if (s == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  const Tensor inputs[] = {a, b};
  return make_op_result(
      "matmul", Shape{m, n}, std::move(out), inputs,
      [m, k, n](std::span<const double> g, BackwardContext& ctx) {
        auto av = ctx.value(0);
        auto bv = ctx.value(1);
        if (auto ga = ctx.grad(0); !ga.empty()) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
              ga[i * k + p] += acc;
            }
          }
        }
        if (auto gb = ctx.grad(1); !gb.empty()) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double s = av[i * k + p];
              if (s == 0.0) continue;
              for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += s * g[i * n + j];
            }
          }
        }
      });
}

Tensor transpose(const Tensor& x) {
  require_rank2(x, "transpose");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c);
  auto xv = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  const Tensor inputs[] = {x};
  return make_op_result("transpose", Shape{c, r}, std::move(out), inputs,
                        [r, c](std::span<const double> g, BackwardContext& ctx) {
                          auto gx = ctx.grad(0);
                          if (gx.empty()) return;
                          for (std::size_t i = 0; i < r; ++i)
                            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
                        });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  const Tensor inputs[] = {a, b};
  return make_op_result("add", a.shape(), std::move(out), inputs,
                        [](std::span<const double> g, BackwardContext& ctx) {
                          for (std::size_t t = 0; t < 2; ++t) {
                            auto gx = ctx.grad(t);
                            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                          }
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  const Tensor inputs[] = {a, b};
  return make_op_result("sub", a.shape(), std::move(out), inputs,
                        [](std::span<const double> g, BackwardContext& ctx) {
                          auto ga = ctx.grad(0);
                          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                          auto gb = ctx.grad(1);
                          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  const Tensor inputs[] = {a, b};
  return make_op_result("mul", a.shape(), std::move(out), inputs,
                        [](std::span<const double> g, BackwardContext& ctx) {
                          auto av = ctx.value(0);
                          auto bv = ctx.value(1);
                          auto ga = ctx.grad(0);
                          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
                          auto gb = ctx.grad(1);
                          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
                        });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double) { return factor; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = x.cols();
  if (bias.numel() != n) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(x.shape()));
  }
  std::vector<double> out(x.numel());
  auto xv = x.data();
  auto bv = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + bv[i % n];
  const Tensor inputs[] = {x, bias};
  return make_op_result("add_bias", x.shape(), std::move(out), inputs,
                        [n](std::span<const double> g, BackwardContext& ctx) {
                          auto gx = ctx.grad(0);
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                          auto gb = ctx.grad(1);
                          if (gb.empty()) return;
                          for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
                        });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  auto sig = [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  };
  return unary("sigmoid", x, sig, [sig](double v) {
    const double s = sig(v);
    return s * (1.0 - s);
  });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v >= 0.0)) throw NumericError("log: argument must be non-negative");
  }
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const Tensor inputs[] = {x};
  return make_op_result("sum", Shape{}, {s}, inputs,
                        [](std::span<const double> g, BackwardContext& ctx) {
                          auto gx = ctx.grad(0);
                          for (auto& v : gx) v += g[0];
                        });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         shape_string(x.shape()));
  }
  const auto [outer, n, inner] = split_axis(x.shape(), axis);
  auto xv = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = kNegInf;
      for (std::size_t j = 0; j < n; ++j) {
        const double v = xv[base + j * inner];
        if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
          throw NumericError("softmax: non-finite input");
        }
        mx = std::max(mx, v);
      }
      if (mx == kNegInf) throw ContractError("softmax: every entry of a slice is excluded");
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double v = xv[base + j * inner];
        const double e = v == kNegInf ? 0.0 : std::exp(v - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  }
  auto y = std::make_shared<std::vector<double>>(out);
  const Tensor inputs[] = {x};
  return make_op_result("softmax", x.shape(), std::move(out), inputs,
                        [y, outer = outer, n = n, inner = inner](std::span<const double> g,
                                                                 BackwardContext& ctx) {
                          auto gx = ctx.grad(0);
                          if (gx.empty()) return;
                          const auto& yv = *y;
                          for (std::size_t o = 0; o < outer; ++o) {
                            for (std::size_t in = 0; in < inner; ++in) {
                              const std::size_t base = o * n * inner + in;
                              double dot = 0.0;
                              for (std::size_t j = 0; j < n; ++j)
                                dot += g[base + j * inner] * yv[base + j * inner];
                              for (std::size_t j = 0; j < n; ++j) {
                                const std::size_t idx = base + j * inner;
                                gx[idx] += yv[idx] * (g[idx] - dot);
                              }
                            }
                          }
                        });
}

Tensor mask_columns(const Tensor& x, const Mask& mask) {
  if (mask.empty()) return x;
  const std::size_t n = x.cols();
  if (mask.size() != n) {
    throw DimensionError("mask_columns: mask of length " + std::to_string(mask.size()) +
                         " for " + shape_string(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!mask[i % n]) out[i] = kNegInf;
  }
  const Tensor inputs[] = {x};
  return make_op_result("mask_columns", x.shape(), std::move(out), inputs,
                        [mask, n](std::span<const double> g, BackwardContext& ctx) {
                          auto gx = ctx.grad(0);
                          for (std::size_t i = 0; i < gx.size(); ++i) {
                            if (mask[i % n]) gx[i] += g[i];
                          }
                        });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t n = x.cols();
  if (gain.numel() != n || bias.numel() != n) {
    throw DimensionError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                         shape_string(bias.shape()) + " do not match " + shape_string(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  auto xv = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * inv;
      (*xhat)[r * n + j] = h;
      out[r * n + j] = gv[j] * h + bv[j];
    }
  }
  const Tensor inputs[] = {x, gain, bias};
  return make_op_result(
      "layer_norm", x.shape(), std::move(out), inputs,
      [xhat, inv_std, n, rows](std::span<const double> g, BackwardContext& ctx) {
        auto gv = ctx.value(1);
        auto gx = ctx.grad(0);
        auto ggain = ctx.grad(1);
        auto gbias = ctx.grad(2);
        const auto& h = *xhat;
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * n;
          if (!ggain.empty())
            for (std::size_t j = 0; j < n; ++j) ggain[j] += g[base + j] * h[base + j];
          if (!gbias.empty())
            for (std::size_t j = 0; j < n; ++j) gbias[j] += g[base + j];
          if (gx.empty()) continue;
          double mean_d = 0.0, mean_dh = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g[base + j] * gv[j];
            mean_d += d;
            mean_dh += d * h[base + j];
          }
          mean_d /= static_cast<double>(n);
          mean_dh /= static_cast<double>(n);
          const double inv = (*inv_std)[r];
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g[base + j] * gv[j];
            gx[base + j] += inv * (d - mean_d - h[base + j] * mean_dh);
          }
        }
      });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no tensors");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = first;
    if (a.size() != b.size()) throw DimensionError("concat: rank mismatch");
    a[axis] = b[axis] = 0;
    if (a != b) {
      throw DimensionError("concat: incompatible shapes " + shape_string(first) + " and " +
                           shape_string(p.shape()));
    }
    out_shape[axis] += p.shape()[axis];
    widths.push_back(p.shape()[axis]);
  }
  const auto [outer, total, inner] = split_axis(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t t = 0; t < parts.size(); ++t) {
    auto pv = parts[t].data();
    const std::size_t chunk = widths[t] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * chunk, chunk, out.data() + o * total * inner + offset * inner);
    }
    offset += widths[t];
  }
  return make_op_result("concat", out_shape, std::move(out), parts,
                        [widths, outer = outer, total = total, inner = inner](
                            std::span<const double> g, BackwardContext& ctx) {
                          std::size_t offset = 0;
                          for (std::size_t t = 0; t < widths.size(); ++t) {
                            auto gp = ctx.grad(t);
                            const std::size_t chunk = widths[t] * inner;
                            if (!gp.empty()) {
                              for (std::size_t o = 0; o < outer; ++o) {
                                const double* src = g.data() + o * total * inner + offset * inner;
                                for (std::size_t i = 0; i < chunk; ++i) gp[o * chunk + i] += src[i];
                              }
                            }
                            offset += widths[t];
                          }
                        });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t n = x.cols();
  if (begin >= end || end > n) {
    throw DimensionError("slice_last: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for " + shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  const std::size_t rows = x.numel() / n;
  Shape shape = x.shape();
  shape.back() = w;
  std::vector<double> out(rows * w);
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xv.data() + r * n + begin, w, out.data() + r * w);
  const Tensor inputs[] = {x};
  return make_op_result("slice_last", shape, std::move(out), inputs,
                        [n, w, rows, begin](std::span<const double> g, BackwardContext& ctx) {
                          auto gx = ctx.grad(0);
                          if (gx.empty()) return;
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t j = 0; j < w; ++j) gx[r * n + begin + j] += g[r * w + j];
                        });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0) throw DimensionError("slice_rows on a scalar");
  const std::size_t n = x.shape()[0];
  if (begin >= end || end > n) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") invalid for " + shape_string(x.shape()));
  }
  const std::size_t row = x.numel() / n;
  Shape shape = x.shape();
  shape[0] = end - begin;
  auto xv = x.data();
  std::vector<double> out(xv.begin() + begin * row, xv.begin() + end * row);
  const Tensor inputs[] = {x};
  return make_op_result("slice_rows", shape, std::move(out), inputs,
                        [row, begin](std::span<const double> g, BackwardContext& ctx) {
                          auto gx = ctx.grad(0);
                          if (gx.empty()) return;
                          for (std::size_t i = 0; i < g.size(); ++i) gx[begin * row + i] += g[i];
                        });
}

Tensor dropout(const Tensor& x, double p, Rng* rng) {
  if (rng == nullptr || p == 0.0) return x;
  if (!(p >= 0.0 && p < 1.0)) throw ContractError("dropout: rate must lie in [0, 1)");
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng->uniform() >= p ? keep_scale : 0.0;
    out[i] = x[i] * (*mask)[i];
  }
  const Tensor inputs[] = {x};
  return make_op_result("dropout", x.shape(), std::move(out), inputs,
                        [mask](std::span<const double> g, BackwardContext& ctx) {
                          auto gx = ctx.grad(0);
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * (*mask)[i];
                        });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  require_rank2(logits, "cross_entropy");
  const std::size_t b = logits.rows(), c = logits.cols();
  if (targets.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(b) + " rows");
  }
  auto zv = logits.data();
  auto probs = std::make_shared<std::vector<double>>(b * c);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (targets[i] >= c) {
      throw ContractError("cross_entropy: target " + std::to_string(targets[i]) +
                          " outside [0, " + std::to_string(c) + ")");
    }
    const double* row = zv.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    if (!std::isfinite(mx)) throw NumericError("cross_entropy: non-finite logits");
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[targets[i]];
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] = std::exp(row[j] - lse);
  }
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  const Tensor inputs[] = {logits};
  return make_op_result("cross_entropy", Shape{}, {total / static_cast<double>(b)}, inputs,
                        [probs, tgt, b, c](std::span<const double> g, BackwardContext& ctx) {
                          auto gz = ctx.grad(0);
                          if (gz.empty()) return;
                          const double s = g[0] / static_cast<double>(b);
                          for (std::size_t i = 0; i < b; ++i) {
                            for (std::size_t j = 0; j < c; ++j) {
                              const double onehot = j == tgt[i] ? 1.0 : 0.0;
                              gz[i * c + j] += s * ((*probs)[i * c + j] - onehot);
                            }
                          }
                        });
}

Tensor binary_cross_entropy_with_logits(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "binary_cross_entropy_with_logits");
  const std::size_t n = logits.numel();
  auto zv = logits.data();
  auto yv = targets.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = zv[i];
    if (!std::isfinite(z)) throw NumericError("binary_cross_entropy: non-finite logits");
    if (yv[i] != 0.0 && yv[i] != 1.0) {
      throw ContractError("binary_cross_entropy: targets must be 0 or 1");
    }
    total += std::max(z, 0.0) - z * yv[i] + std::log1p(std::exp(-std::abs(z)));
  }
  std::vector<double> y(yv.begin(), yv.end());
  const Tensor inputs[] = {logits};
  return make_op_result("binary_cross_entropy", Shape{}, {total / static_cast<double>(n)}, inputs,
                        [y, n](std::span<const double> g, BackwardContext& ctx) {
                          auto gz = ctx.grad(0);
                          if (gz.empty()) return;
                          auto zv = ctx.value(0);
                          const double s = g[0] / static_cast<double>(n);
                          for (std::size_t i = 0; i < n; ++i) {
                            const double z = zv[i];
                            const double sig = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                                        : std::exp(z) / (1.0 + std::exp(z));
                            gz[i] += s * (sig - y[i]);
                          }
                        });
}

}  // namespace tbje
