#include "papp/autodiff.hpp"

#include "papp/errors.hpp"
#include "papp/io.hpp"
#include "papp/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>

namespace papp::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;
using Idx = Eigen::Index;

Tape& tape_of(Var a) {
  if (!a.valid()) throw ConfigError("operation on an unbound variable");
  return *a.tape();
}

Tape& same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw ConfigError("operands live on different tapes");
  return tape_of(a);
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
}

void require_rank(Var a, std::size_t rank, const char* op) {
  if (a.shape().size() != rank) {
    throw ConfigError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                      shape_str(a.shape()));
  }
}

// Elementwise map with derivative expressed through input x and output y.
template <typename F, typename D>
Var unary(Var a, F f, D dfdx) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  return t.record(std::move(y), a.requires_grad(),
                  [ia, dfdx](Tape& tp, const Tensor& out, const Tensor& g) {
                    Tensor* ga = tp.grad_buffer(ia);
                    if (!ga) return;
                    const Tensor& xin = tp.value(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * dfdx(xin[i], out[i]);
                  });
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_size(shape_)) {
    throw ConfigError("tensor value count does not match shape " + shape_str(shape_));
  }
}

double Tensor::item() const {
  if (data_.size() != 1) throw ConfigError("item() on a tensor of shape " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ConfigError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

const Tensor& Var::value() const { return tape_of(*this).value(id_); }
bool Var::requires_grad() const { return tape_of(*this).requires_grad(id_); }

Var Tape::constant(Tensor value) { return record(std::move(value), false, nullptr); }

Var Tape::variable(Tensor value) {
  nodes_.push_back({std::move(value), Tensor(), true, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, bool requires_grad, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Tensor* Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.shape());
  return &n.grad;
}

Tensor Tape::grad(Var v) const {
  if (v.tape() != this) throw ConfigError("variable belongs to another tape");
  const Node& n = nodes_.at(v.id());
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ConfigError("loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw ConfigError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  backward_visits_ = 0;
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Tensor(nodes_[loss.id()].value.shape(), 1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    ++backward_visits_;
    if (n.backward) n.backward(*this, n.value, n.grad);
  }
}

// ---- elementwise -----------------------------------------------------------

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(y), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& tp, const Tensor&, const Tensor& g) {
                    if (Tensor* ga = tp.grad_buffer(ia))
                      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                    if (Tensor* gb = tp.grad_buffer(ib))
                      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
                  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(y), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& tp, const Tensor&, const Tensor& g) {
                    if (Tensor* ga = tp.grad_buffer(ia))
                      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                    if (Tensor* gb = tp.grad_buffer(ib))
                      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
                  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "mul");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(y), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& tp, const Tensor&, const Tensor& g) {
                    const Tensor& av = tp.value(ia);
                    const Tensor& bv2 = tp.value(ib);
                    if (Tensor* ga = tp.grad_buffer(ia))
                      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv2[i];
                    if (Tensor* gb = tp.grad_buffer(ib))
                      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
                  });
}

Var div(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "div");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] /= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(y), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& tp, const Tensor& out, const Tensor& g) {
                    const Tensor& bv2 = tp.value(ib);
                    if (Tensor* ga = tp.grad_buffer(ia))
                      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / bv2[i];
                    if (Tensor* gb = tp.grad_buffer(ib))
                      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i] * out[i] / bv2[i];
                  });
}

Var neg(Var a) { return mul_scalar(a, -1.0); }

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var rdiv_scalar(double s, Var a) {
  return unary(a, [s](double x) { return s / x; }, [](double x, double y) { return -y / x; });
}

Var maximum_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x > s ? x : s; },
               [s](double x, double) { return x > s ? 1.0 : 0.0; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softplus(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var sigmoid(Var a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// ---- reductions and shape --------------------------------------------------

Var sum(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.values()) s += v;
  const std::size_t ia = a.id();
  return t.record(Tensor({}, std::vector<double>{s}), a.requires_grad(),
                  [ia](Tape& tp, const Tensor&, const Tensor& g) {
                    if (Tensor* ga = tp.grad_buffer(ia))
                      for (auto& v : ga->values()) v += g[0];
                  });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ConfigError("mean of an empty tensor");
  return mul_scalar(sum(a), 1.0 / n);
}

Var sum_last(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (x.rank() == 0) throw ConfigError("sum_last on a scalar");
  const std::size_t inner = x.shape().back();
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  Tensor y(out_shape);
  for (std::size_t o = 0; o < y.size(); ++o) {
    double s = 0.0;
    for (std::size_t i = 0; i < inner; ++i) s += x[o * inner + i];
    y[o] = s;
  }
  const std::size_t ia = a.id();
  return t.record(std::move(y), a.requires_grad(),
                  [ia, inner](Tape& tp, const Tensor&, const Tensor& g) {
                    if (Tensor* ga = tp.grad_buffer(ia))
                      for (std::size_t o = 0; o < g.size(); ++o)
                        for (std::size_t i = 0; i < inner; ++i) (*ga)[o * inner + i] += g[o];
                  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a);
  Tensor y = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return t.record(std::move(y), a.requires_grad(), [ia](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(ia))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  });
}

Var flatten(Var a) {
  const Shape& s = a.shape();
  if (s.empty()) throw ConfigError("flatten on a scalar");
  return reshape(a, {s[0], shape_size(s) / std::max<std::size_t>(s[0], 1)});
}

Var concat_cols(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  const std::size_t rows = a.shape()[0];
  if (b.shape()[0] != rows) throw ConfigError("concat_cols: batch sizes differ");
  const std::size_t fa = a.shape()[1], fb = b.shape()[1];
  Tensor y({rows, fa + fb});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * fa, fa, y.data() + r * (fa + fb));
    std::copy_n(bv.data() + r * fb, fb, y.data() + r * (fa + fb) + fa);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(y), a.requires_grad() || b.requires_grad(),
                  [ia, ib, rows, fa, fb](Tape& tp, const Tensor&, const Tensor& g) {
                    Tensor* ga = tp.grad_buffer(ia);
                    Tensor* gb = tp.grad_buffer(ib);
                    for (std::size_t r = 0; r < rows; ++r) {
                      if (ga)
                        for (std::size_t i = 0; i < fa; ++i) (*ga)[r * fa + i] += g[r * (fa + fb) + i];
                      if (gb)
                        for (std::size_t i = 0; i < fb; ++i) (*gb)[r * fb + i] += g[r * (fa + fb) + fa + i];
                    }
                  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Tape& t = tape_of(a);
  require_rank(a, 2, "slice_cols");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  if (start + count > cols) throw ConfigError("slice_cols: range out of bounds");
  Tensor y({rows, count});
  const Tensor& x = a.value();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.data() + r * cols + start, count, y.data() + r * count);
  const std::size_t ia = a.id();
  return t.record(std::move(y), a.requires_grad(),
                  [ia, rows, cols, start, count](Tape& tp, const Tensor&, const Tensor& g) {
                    if (Tensor* ga = tp.grad_buffer(ia))
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t i = 0; i < count; ++i) (*ga)[r * cols + start + i] += g[r * count + i];
                  });
}

Var select_first(Var a, std::size_t index) {
  Tape& t = tape_of(a);
  const Shape& s = a.shape();
  if (s.empty() || index >= s[0]) throw ConfigError("select_first: index out of range");
  Shape out_shape(s.begin() + 1, s.end());
  const std::size_t block = shape_size(out_shape);
  Tensor y(out_shape);
  std::copy_n(a.value().data() + index * block, block, y.data());
  const std::size_t ia = a.id();
  return t.record(std::move(y), a.requires_grad(),
                  [ia, index, block](Tape& tp, const Tensor&, const Tensor& g) {
                    if (Tensor* ga = tp.grad_buffer(ia))
                      for (std::size_t i = 0; i < block; ++i) (*ga)[index * block + i] += g[i];
                  });
}

Var detach(Var a) { return tape_of(a).constant(a.value()); }

// ---- linear algebra --------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const auto m = static_cast<Idx>(a.shape()[0]), k = static_cast<Idx>(a.shape()[1]);
  const auto n = static_cast<Idx>(b.shape()[1]);
  if (static_cast<Idx>(b.shape()[0]) != k) {
    throw ConfigError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor y({static_cast<std::size_t>(m), static_cast<std::size_t>(n)});
  MapM(y.data(), m, n).noalias() = MapC(a.value().data(), m, k) * MapC(b.value().data(), k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(y), a.requires_grad() || b.requires_grad(),
                  [ia, ib, m, k, n](Tape& tp, const Tensor&, const Tensor& g) {
                    MapC gm(g.data(), m, n);
                    if (Tensor* ga = tp.grad_buffer(ia))
                      MapM(ga->data(), m, k).noalias() += gm * MapC(tp.value(ib).data(), k, n).transpose();
                    if (Tensor* gb = tp.grad_buffer(ib))
                      MapM(gb->data(), k, n).noalias() += MapC(tp.value(ia).data(), m, k).transpose() * gm;
                  });
}

Var bmm(Var a, Var b, bool transpose_a, bool transpose_b) {
  Tape& t = same_tape(a, b);
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t batch = a.shape()[0];
  if (b.shape()[0] != batch) throw ConfigError("bmm: batch sizes differ");
  const auto ar = static_cast<Idx>(a.shape()[1]), ac = static_cast<Idx>(a.shape()[2]);
  const auto br = static_cast<Idx>(b.shape()[1]), bc = static_cast<Idx>(b.shape()[2]);
  const Idx m = transpose_a ? ac : ar;
  const Idx k = transpose_a ? ar : ac;
  const Idx kb = transpose_b ? bc : br;
  const Idx n = transpose_b ? br : bc;
  if (k != kb) {
    throw ConfigError("bmm: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor y({batch, static_cast<std::size_t>(m), static_cast<std::size_t>(n)});
  const double* ad = a.value().data();
  const double* bd = b.value().data();
  for (std::size_t s = 0; s < batch; ++s) {
    MapC am(ad + s * ar * ac, ar, ac);
    MapC bm(bd + s * br * bc, br, bc);
    MapM ym(y.data() + s * m * n, m, n);
    if (transpose_a && transpose_b) {
      ym.noalias() = am.transpose() * bm.transpose();
    } else if (transpose_a) {
      ym.noalias() = am.transpose() * bm;
    } else if (transpose_b) {
      ym.noalias() = am * bm.transpose();
    } else {
      ym.noalias() = am * bm;
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(
      std::move(y), a.requires_grad() || b.requires_grad(),
      [=](Tape& tp, const Tensor&, const Tensor& g) {
        Tensor* ga = tp.grad_buffer(ia);
        Tensor* gb = tp.grad_buffer(ib);
        const double* av = tp.value(ia).data();
        const double* bv = tp.value(ib).data();
        for (std::size_t s = 0; s < batch; ++s) {
          MapC gm(g.data() + s * m * n, m, n);
          MapC am(av + s * ar * ac, ar, ac);
          MapC bm(bv + s * br * bc, br, bc);
          if (ga) {
            MapM gam(ga->data() + s * ar * ac, ar, ac);
            // d op(A) = G op(B)^T
            if (transpose_a) {
              if (transpose_b) gam.noalias() += bm.transpose() * gm.transpose();
              else gam.noalias() += bm * gm.transpose();
            } else {
              if (transpose_b) gam.noalias() += gm * bm;
              else gam.noalias() += gm * bm.transpose();
            }
          }
          if (gb) {
            MapM gbm(gb->data() + s * br * bc, br, bc);
            // d op(B) = op(A)^T G
            if (transpose_b) {
              if (transpose_a) gbm.noalias() += gm.transpose() * am.transpose();
              else gbm.noalias() += gm.transpose() * am;
            } else {
              if (transpose_a) gbm.noalias() += am * gm;
              else gbm.noalias() += am.transpose() * gm;
            }
          }
        }
      });
}

Var transpose_last(Var a) {
  Tape& t = tape_of(a);
  require_rank(a, 3, "transpose_last");
  const std::size_t batch = a.shape()[0], m = a.shape()[1], n = a.shape()[2];
  Tensor y({batch, n, m});
  const Tensor& x = a.value();
  for (std::size_t s = 0; s < batch; ++s)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) y[s * m * n + j * m + i] = x[s * m * n + i * n + j];
  const std::size_t ia = a.id();
  return t.record(std::move(y), a.requires_grad(),
                  [ia, batch, m, n](Tape& tp, const Tensor&, const Tensor& g) {
                    if (Tensor* ga = tp.grad_buffer(ia))
                      for (std::size_t s = 0; s < batch; ++s)
                        for (std::size_t i = 0; i < m; ++i)
                          for (std::size_t j = 0; j < n; ++j)
                            (*ga)[s * m * n + i * n + j] += g[s * m * n + j * m + i];
                  });
}

Var add_bias(Var x, Var bias) {
  Tape& t = same_tape(x, bias);
  require_rank(x, 2, "add_bias");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (bias.value().size() != cols) throw ConfigError("add_bias: bias length does not match features");
  Tensor y = x.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] += bv[c];
  const std::size_t ix = x.id(), ib = bias.id();
  return t.record(std::move(y), x.requires_grad() || bias.requires_grad(),
                  [ix, ib, rows, cols](Tape& tp, const Tensor&, const Tensor& g) {
                    if (Tensor* gx = tp.grad_buffer(ix))
                      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
                    if (Tensor* gb = tp.grad_buffer(ib))
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) (*gb)[c] += g[r * cols + c];
                  });
}

Var scale_rows(Var x, Var s) {
  Tape& t = same_tape(x, s);
  const Shape& xs = x.shape();
  if (xs.empty() || s.value().size() != xs[0]) throw ConfigError("scale_rows: need one scale per sample");
  const std::size_t batch = xs[0];
  const std::size_t block = x.value().size() / std::max<std::size_t>(batch, 1);
  Tensor y = x.value();
  const Tensor& sv = s.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < block; ++i) y[b * block + i] *= sv[b];
  const std::size_t ix = x.id(), is = s.id();
  return t.record(std::move(y), x.requires_grad() || s.requires_grad(),
                  [ix, is, batch, block](Tape& tp, const Tensor&, const Tensor& g) {
                    const Tensor& xv = tp.value(ix);
                    const Tensor& sv2 = tp.value(is);
                    Tensor* gx = tp.grad_buffer(ix);
                    Tensor* gs = tp.grad_buffer(is);
                    for (std::size_t b = 0; b < batch; ++b) {
                      double acc = 0.0;
                      for (std::size_t i = 0; i < block; ++i) {
                        const std::size_t k = b * block + i;
                        if (gx) (*gx)[k] += g[k] * sv2[b];
                        acc += g[k] * xv[k];
                      }
                      if (gs) (*gs)[b] += acc;
                    }
                  });
}

Var scale_cols(Var x, Var s) {
  Tape& t = same_tape(x, s);
  require_rank(x, 3, "scale_cols");
  const std::size_t batch = x.shape()[0], m = x.shape()[1], n = x.shape()[2];
  if (s.value().size() != batch * n) throw ConfigError("scale_cols: need [B, n] scales");
  Tensor y = x.value();
  const Tensor& sv = s.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) y[(b * m + i) * n + j] *= sv[b * n + j];
  const std::size_t ix = x.id(), is = s.id();
  return t.record(std::move(y), x.requires_grad() || s.requires_grad(),
                  [ix, is, batch, m, n](Tape& tp, const Tensor&, const Tensor& g) {
                    const Tensor& xv = tp.value(ix);
                    const Tensor& sv2 = tp.value(is);
                    Tensor* gx = tp.grad_buffer(ix);
                    Tensor* gs = tp.grad_buffer(is);
                    for (std::size_t b = 0; b < batch; ++b)
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) {
                          const std::size_t k = (b * m + i) * n + j;
                          if (gx) (*gx)[k] += g[k] * sv2[b * n + j];
                          if (gs) (*gs)[b * n + j] += g[k] * xv[k];
                        }
                  });
}

Var diagonal(Var a) {
  Tape& t = tape_of(a);
  require_rank(a, 3, "diagonal");
  const std::size_t batch = a.shape()[0], n = a.shape()[1];
  if (a.shape()[2] != n) throw ConfigError("diagonal: trailing matrices must be square");
  Tensor y({batch, n});
  const Tensor& x = a.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i) y[b * n + i] = x[(b * n + i) * n + i];
  const std::size_t ia = a.id();
  return t.record(std::move(y), a.requires_grad(), [ia, batch, n](Tape& tp, const Tensor&, const Tensor& g) {
    if (Tensor* ga = tp.grad_buffer(ia))
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i) (*ga)[(b * n + i) * n + i] += g[b * n + i];
  });
}

Var add_scaled_identity(Var a, Var s) {
  Tape& t = same_tape(a, s);
  require_rank(a, 3, "add_scaled_identity");
  const std::size_t batch = a.shape()[0], n = a.shape()[1];
  if (a.shape()[2] != n) throw ConfigError("add_scaled_identity: trailing matrices must be square");
  if (s.value().size() != batch) throw ConfigError("add_scaled_identity: need one scale per sample");
  Tensor y = a.value();
  const Tensor& sv = s.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i) y[(b * n + i) * n + i] += sv[b];
  const std::size_t ia = a.id(), is = s.id();
  return t.record(std::move(y), a.requires_grad() || s.requires_grad(),
                  [ia, is, batch, n](Tape& tp, const Tensor&, const Tensor& g) {
                    if (Tensor* ga = tp.grad_buffer(ia))
                      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                    if (Tensor* gs = tp.grad_buffer(is))
                      for (std::size_t b = 0; b < batch; ++b)
                        for (std::size_t i = 0; i < n; ++i) (*gs)[b] += g[(b * n + i) * n + i];
                  });
}

Var conv2d(Var x, Var weight, Var bias) {
  Tape& t = same_tape(x, weight);
  if (bias.tape() != &t) throw ConfigError("conv2d: bias on a different tape");
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d");
  const std::size_t batch = x.shape()[0], cin = x.shape()[1], height = x.shape()[2], width = x.shape()[3];
  const std::size_t cout = weight.shape()[0], ksz = weight.shape()[2];
  if (weight.shape()[1] != cin) throw ConfigError("conv2d: input channels do not match the kernel");
  if (weight.shape()[3] != ksz || ksz % 2 == 0) throw ConfigError("conv2d: kernel must be odd and square");
  if (bias.value().size() != cout) throw ConfigError("conv2d: bias length does not match output channels");
  const auto pad = static_cast<long>(ksz / 2);
  const auto h = static_cast<long>(height), w = static_cast<long>(width);

  // Visits every (output, input, kernel tap) triple with in-bounds input.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t ki = 0; ki < ksz; ++ki)
            for (std::size_t kj = 0; kj < ksz; ++kj) {
              const std::size_t widx = ((o * cin + c) * ksz + ki) * ksz + kj;
              for (long i = 0; i < h; ++i) {
                const long ii = i + static_cast<long>(ki) - pad;
                if (ii < 0 || ii >= h) continue;
                for (long j = 0; j < w; ++j) {
                  const long jj = j + static_cast<long>(kj) - pad;
                  if (jj < 0 || jj >= w) continue;
                  const std::size_t out_idx = ((b * cout + o) * height + static_cast<std::size_t>(i)) * width +
                                              static_cast<std::size_t>(j);
                  const std::size_t in_idx = ((b * cin + c) * height + static_cast<std::size_t>(ii)) * width +
                                             static_cast<std::size_t>(jj);
                  fn(out_idx, in_idx, widx);
                }
              }
            }
  };

  Tensor y({batch, cout, height, width});
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t p = 0; p < height * width; ++p) y[(b * cout + o) * height * width + p] = bv[o];
  for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t wi) { y[oi] += wv[wi] * xv[ii]; });

  const std::size_t ix = x.id(), iw = weight.id(), ib = bias.id();
  const bool needs = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  return t.record(std::move(y), needs,
                  [=](Tape& tp, const Tensor&, const Tensor& g) {
                    const Tensor& xin = tp.value(ix);
                    const Tensor& win = tp.value(iw);
                    Tensor* gx = tp.grad_buffer(ix);
                    Tensor* gw = tp.grad_buffer(iw);
                    if (Tensor* gb = tp.grad_buffer(ib))
                      for (std::size_t b = 0; b < batch; ++b)
                        for (std::size_t o = 0; o < cout; ++o)
                          for (std::size_t p = 0; p < height * width; ++p)
                            (*gb)[o] += g[(b * cout + o) * height * width + p];
                    if (gx || gw) {
                      for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t wi) {
                        if (gx) (*gx)[ii] += g[oi] * win[wi];
                        if (gw) (*gw)[wi] += g[oi] * xin[ii];
                      });
                    }
                  });
}

// ---- normalization and regularization -------------------------------------

Var batch_norm(Var x, Var gamma, Var beta, const Tensor& running_mean, const Tensor& running_var,
               bool training, BatchStats* stats, double eps) {
  Tape& t = same_tape(x, gamma);
  if (beta.tape() != &t) throw ConfigError("batch_norm: beta on a different tape");
  const Shape& s = x.shape();
  if (s.size() != 2 && s.size() != 4) throw ConfigError("batch_norm: expected rank 2 or 4 input");
  const std::size_t batch = s[0], channels = s[1];
  const std::size_t spatial = s.size() == 4 ? s[2] * s[3] : 1;
  if (gamma.value().size() != channels || beta.value().size() != channels ||
      running_mean.size() != channels || running_var.size() != channels) {
    throw ConfigError("batch_norm: parameter length does not match channels");
  }
  const std::size_t count = batch * spatial;
  auto at = [=](std::size_t b, std::size_t c, std::size_t p) { return (b * channels + c) * spatial + p; };

  const Tensor& xv = x.value();
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  std::vector<double> mu(channels), invstd(channels);
  Tensor xhat(s);
  Tensor y(s);
  if (training) {
    if (count < 2) throw ConfigError("batch_norm: training mode needs at least two values per channel");
    if (stats) {
      stats->mean.assign(channels, 0.0);
      stats->var.assign(channels, 0.0);
    }
    for (std::size_t c = 0; c < channels; ++c) {
      double m = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t p = 0; p < spatial; ++p) m += xv[at(b, c, p)];
      m /= static_cast<double>(count);
      double v = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t p = 0; p < spatial; ++p) {
          const double d = xv[at(b, c, p)] - m;
          v += d * d;
        }
      const double biased = v / static_cast<double>(count);
      mu[c] = m;
      invstd[c] = 1.0 / std::sqrt(biased + eps);
      if (stats) {
        stats->mean[c] = m;
        stats->var[c] = v / static_cast<double>(count - 1);
      }
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mu[c] = running_mean[c];
      invstd[c] = 1.0 / std::sqrt(running_var[c] + eps);
    }
  }
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t p = 0; p < spatial; ++p) {
        const std::size_t k = at(b, c, p);
        xhat[k] = (xv[k] - mu[c]) * invstd[c];
        y[k] = gv[c] * xhat[k] + bv[c];
      }

  const std::size_t ix = x.id(), ig = gamma.id(), ibt = beta.id();
  const bool needs = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  return t.record(
      std::move(y), needs,
      [=, xhat = std::move(xhat), invstd = std::move(invstd)](Tape& tp, const Tensor&, const Tensor& g) {
        const Tensor& gam = tp.value(ig);
        Tensor* gx = tp.grad_buffer(ix);
        Tensor* gg = tp.grad_buffer(ig);
        Tensor* gb = tp.grad_buffer(ibt);
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t p = 0; p < spatial; ++p) {
              const std::size_t k = at(b, c, p);
              sum_g += g[k];
              sum_gx += g[k] * xhat[k];
            }
          if (gg) (*gg)[c] += sum_gx;
          if (gb) (*gb)[c] += sum_g;
          if (!gx) continue;
          const double scale = gam[c] * invstd[c];
          if (training) {
            const double n = static_cast<double>(count);
            for (std::size_t b = 0; b < batch; ++b)
              for (std::size_t p = 0; p < spatial; ++p) {
                const std::size_t k = at(b, c, p);
                (*gx)[k] += scale * (g[k] - sum_g / n - xhat[k] * sum_gx / n);
              }
          } else {
            for (std::size_t b = 0; b < batch; ++b)
              for (std::size_t p = 0; p < spatial; ++p) {
                const std::size_t k = at(b, c, p);
                (*gx)[k] += scale * g[k];
              }
          }
        }
      });
}

Var dropout(Var x, double rate, std::uint64_t mask_seed, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  Tape& t = tape_of(x);
  Rng rng(mask_seed);
  const Tensor& xv = x.value();
  std::vector<double> mask(xv.size());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * mask[i];
  const std::size_t ix = x.id();
  return t.record(std::move(y), x.requires_grad(),
                  [ix, mask = std::move(mask)](Tape& tp, const Tensor&, const Tensor& g) {
                    if (Tensor* gx = tp.grad_buffer(ix))
                      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * mask[i];
                  });
}

// ---- complex ---------------------------------------------------------------

CVar cbmm(const CVar& a, const CVar& b) {
  // (ar + i ai)(br + i bi) = (ar br - ai bi) + i (ar bi + ai br)
  Var re = sub(bmm(a.re, b.re), bmm(a.im, b.im));
  Var im = add(bmm(a.re, b.im), bmm(a.im, b.re));
  return {re, im};
}

CVar cherm(const CVar& a) { return {transpose_last(a.re), neg(transpose_last(a.im))}; }

Var cabs2(const CVar& a) { return add(square(a.re), square(a.im)); }

CVar hermitian_solve(const CVar& a, const CVar& b, SolveReport* report) {
  Tape& t = same_tape(a.re, a.im);
  if (b.re.tape() != &t || b.im.tape() != &t) throw ConfigError("hermitian_solve: operands on different tapes");
  require_rank(a.re, 3, "hermitian_solve");
  require_rank(b.re, 3, "hermitian_solve");
  require_same_shape(a.re, a.im, "hermitian_solve");
  require_same_shape(b.re, b.im, "hermitian_solve");
  const std::size_t batch = a.re.shape()[0], n = a.re.shape()[1], m = b.re.shape()[2];
  if (a.re.shape()[2] != n || b.re.shape()[0] != batch || b.re.shape()[1] != n) {
    throw ConfigError("hermitian_solve: incompatible shapes " + shape_str(a.re.shape()) + " and " +
                      shape_str(b.re.shape()));
  }
  using CMat = Eigen::MatrixXcd;
  auto factors = std::make_shared<std::vector<Eigen::LLT<CMat>>>(batch);
  auto singular = std::make_shared<std::vector<std::uint8_t>>(batch, 0);
  const Tensor& arv = a.re.value();
  const Tensor& aiv = a.im.value();
  const Tensor& brv = b.re.value();
  const Tensor& biv = b.im.value();
  Tensor out({2, batch, n, m});
  const std::size_t xblock = batch * n * m;
  for (std::size_t s = 0; s < batch; ++s) {
    CMat am(static_cast<Idx>(n), static_cast<Idx>(n));
    CMat bm(static_cast<Idx>(n), static_cast<Idx>(m));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) am(static_cast<Idx>(i), static_cast<Idx>(j)) = {arv[(s * n + i) * n + j], aiv[(s * n + i) * n + j]};
      for (std::size_t j = 0; j < m; ++j) bm(static_cast<Idx>(i), static_cast<Idx>(j)) = {brv[(s * n + i) * m + j], biv[(s * n + i) * m + j]};
    }
    auto& llt = (*factors)[s];
    llt.compute(am);
    const bool ok = llt.info() == Eigen::Success && llt.matrixLLT().diagonal().real().minCoeff() > 0.0;
    if (!ok) {
      if (!report) throw NumericError("hermitian_solve: matrix is not positive definite");
      (*singular)[s] = 1;
      continue;
    }
    const CMat xm = llt.solve(bm);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        out[(s * n + i) * m + j] = xm(static_cast<Idx>(i), static_cast<Idx>(j)).real();
        out[xblock + (s * n + i) * m + j] = xm(static_cast<Idx>(i), static_cast<Idx>(j)).imag();
      }
  }
  if (report) report->singular = *singular;

  const std::size_t iar = a.re.id(), iai = a.im.id(), ibr = b.re.id(), ibi = b.im.id();
  const bool needs = a.re.requires_grad() || a.im.requires_grad() || b.re.requires_grad() || b.im.requires_grad();
  Var joint = t.record(
      std::move(out), needs, [=](Tape& tp, const Tensor& xv, const Tensor& g) {
        Tensor* gar = tp.grad_buffer(iar);
        Tensor* gai = tp.grad_buffer(iai);
        Tensor* gbr = tp.grad_buffer(ibr);
        Tensor* gbi = tp.grad_buffer(ibi);
        for (std::size_t s = 0; s < batch; ++s) {
          if ((*singular)[s]) continue;
          CMat gm(static_cast<Idx>(n), static_cast<Idx>(m));
          CMat xm(static_cast<Idx>(n), static_cast<Idx>(m));
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
              const std::size_t k = (s * n + i) * m + j;
              gm(static_cast<Idx>(i), static_cast<Idx>(j)) = {g[k], g[xblock + k]};
              xm(static_cast<Idx>(i), static_cast<Idx>(j)) = {xv[k], xv[xblock + k]};
            }
          // A is Hermitian, so A^{-H} g = A^{-1} g.
          const CMat bbar = (*factors)[s].solve(gm);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
              const std::size_t k = (s * n + i) * m + j;
              const auto v = bbar(static_cast<Idx>(i), static_cast<Idx>(j));
              if (gbr) (*gbr)[k] += v.real();
              if (gbi) (*gbi)[k] += v.imag();
            }
          if (gar || gai) {
            const CMat abar = -bbar * xm.adjoint();
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < n; ++j) {
                const std::size_t k = (s * n + i) * n + j;
                const auto v = abar(static_cast<Idx>(i), static_cast<Idx>(j));
                if (gar) (*gar)[k] += v.real();
                if (gai) (*gai)[k] += v.imag();
              }
          }
        }
      });
  return {select_first(joint, 0), select_first(joint, 1)};
}

// ---- parameters ------------------------------------------------------------

std::size_t ParameterSet::add(std::string name, Tensor value, bool trainable) {
  for (const auto& e : entries_) {
    if (e.name == name) throw ConfigError("duplicate parameter name '" + name + "'");
  }
  entries_.push_back({std::move(name), std::move(value), trainable});
  return entries_.size() - 1;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw ConfigError("no parameter named '" + name + "'");
}

std::vector<Tensor> ParameterSet::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.value);
  return out;
}

void ParameterSet::restore(const std::vector<Tensor>& values) {
  if (values.size() != entries_.size()) throw ConfigError("snapshot does not match parameter set");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != entries_[i].value.shape()) {
      throw ConfigError("snapshot shape mismatch for '" + entries_[i].name + "'");
    }
  }
  for (std::size_t i = 0; i < values.size(); ++i) entries_[i].value = values[i];
}

std::size_t ParameterSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.value.size();
  return n;
}

std::uint32_t ParameterSet::checksum() const {
  ByteWriter w;
  for (const auto& e : entries_) {
    w.put_string(e.name);
    for (double v : e.value.values()) w.put<double>(v);
  }
  return crc32(w.bytes());
}

GradSet zeros_like(const ParameterSet& params) {
  GradSet out;
  out.reserve(params.size());
  for (const auto& e : params.entries()) out.push_back(e.trainable ? Tensor(e.value.shape()) : Tensor());
  return out;
}

void check_aligned(const ParameterSet& params, const GradSet& grads) {
  if (grads.size() != params.size()) throw ConfigError("gradient set is not aligned with parameters");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const auto& e = params[i];
    if (e.trainable && grads[i].shape() != e.value.shape()) {
      throw ConfigError("gradient shape mismatch for '" + e.name + "'");
    }
  }
}

void accumulate(GradSet& acc, const GradSet& g, double scale) {
  if (acc.size() != g.size()) throw ConfigError("gradient sets differ in length");
  for (std::size_t i = 0; i < acc.size(); ++i) {
    if (g[i].empty()) continue;
    if (acc[i].empty()) acc[i] = Tensor(g[i].shape());
    if (acc[i].size() != g[i].size()) throw ConfigError("gradient shape mismatch during accumulation");
    for (std::size_t j = 0; j < g[i].size(); ++j) acc[i][j] += scale * g[i][j];
  }
}

void sgd_step(ParameterSet& params, const GradSet& grads, double lr) {
  check_aligned(params, grads);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& e = params[i];
    if (!e.trainable) continue;
    for (std::size_t j = 0; j < e.value.size(); ++j) e.value[j] -= lr * grads[i][j];
  }
}

std::vector<Var> bind(Tape& tape, const ParameterSet& params) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& e : params.entries()) {
    vars.push_back(e.trainable ? tape.variable(e.value) : tape.constant(e.value));
  }
  return vars;
}

GradSet collect(const Tape& tape, const ParameterSet& params, const std::vector<Var>& vars) {
  if (vars.size() != params.size()) throw ConfigError("bound variables do not match parameters");
  GradSet out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < vars.size(); ++i) {
    out.push_back(params[i].trainable ? tape.grad(vars[i]) : Tensor());
  }
  return out;
}

const ParameterSet& Checkpoint::group(const std::string& name) const {
  for (const auto& [n, g] : groups) {
    if (n == name) return g;
  }
  throw IoError("checkpoint has no parameter group '" + name + "'");
}

std::string Checkpoint::meta(const std::string& key, const std::string& fallback) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  return fallback;
}

namespace {
constexpr char kCheckpointMagic[9] = "PAPPCKPT";
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  ByteWriter w;
  w.put_magic(kCheckpointMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.put_string(k);
    w.put_string(v);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.groups.size()));
  for (const auto& [name, params] : ckpt.groups) {
    w.put_string(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
    for (const auto& e : params.entries()) {
      w.put_string(e.name);
      w.put<std::uint8_t>(e.trainable ? 1 : 0);
      w.put<std::uint32_t>(static_cast<std::uint32_t>(e.value.rank()));
      for (std::size_t d : e.value.shape()) w.put<std::uint64_t>(d);
      for (double v : e.value.values()) w.put<double>(v);
    }
  }
  w.seal();
  write_file_bytes(path, w.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  ByteReader r(read_file_bytes(path), path.string());
  r.expect_magic(kCheckpointMagic);
  if (r.get<std::uint32_t>() != kCheckpointVersion) throw IoError(path.string() + ": unsupported checkpoint version");
  Checkpoint ckpt;
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.get_string();
    std::string v = r.get_string();
    ckpt.metadata.emplace_back(std::move(k), std::move(v));
  }
  const auto n_groups = r.get<std::uint32_t>();
  for (std::uint32_t gi = 0; gi < n_groups; ++gi) {
    std::string name = r.get_string();
    ParameterSet params;
    const auto n_entries = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_entries; ++i) {
      std::string ename = r.get_string();
      const bool trainable = r.get<std::uint8_t>() != 0;
      const auto rank = r.get<std::uint32_t>();
      Shape shape(rank);
      for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
      std::vector<double> values(shape_size(shape));
      for (auto& v : values) v = r.get<double>();
      params.add(std::move(ename), Tensor(std::move(shape), std::move(values)), trainable);
    }
    ckpt.groups.emplace_back(std::move(name), std::move(params));
  }
  r.expect_end();
  return ckpt;
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace papp::ad
