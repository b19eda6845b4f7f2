#include "axloc/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

namespace axloc {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

const Tensor& Variable::value() const { return tape_->value(id_); }
const Shape& Variable::shape() const { return value().shape(); }

Variable Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Variable(this, nodes_.size() - 1);
}

Variable Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(), [this](std::size_t i) { return nodes_.at(i).requires_grad; });
  if (node.requires_grad) {
    node.inputs = std::move(inputs);
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Variable(this, nodes_.size() - 1);
}

Tensor Tape::grad(Variable v) const {
  const Node& node = nodes_.at(v.id());
  if (node.grad.shape() == node.value.shape() && !node.grad.empty()) return node.grad;
  return Tensor(node.value.shape(), 0.0);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_.at(id);
  if (node.grad.size() != node.value.size() || node.grad.shape() != node.value.shape()) {
    node.grad = Tensor(node.value.shape(), 0.0);
  }
  return node.grad;
}

void Tape::backward(Variable loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to a different tape");
  const Tensor& lv = value(loss.id());
  if (lv.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_string(lv.shape()));
  }
  for (Node& node : nodes_) node.grad = Tensor();
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || !node.backward || node.grad.empty()) continue;
    node.backward(*this, id);
  }
}

namespace {

Tape& tape_of(Variable a) {
  if (!a.valid()) throw std::invalid_argument("operation on an unbound variable");
  return *a.tape();
}

Tape& tape_of(Variable a, Variable b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw std::invalid_argument("operands recorded on different tapes");
  return t;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got shape " +
                     shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

// Accumulates `scale * g` into the gradient of node `id` when it participates.
void accumulate(Tape& tape, std::size_t id, std::span<const double> g, double scale = 1.0) {
  if (!tape.requires_grad(id)) return;
  auto dst = tape.grad_buffer(id).data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += scale * g[i];
}

}  // namespace

namespace ops {

Variable add(Variable a, Variable b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.grad_buffer(self).data();
    accumulate(t, ia, g);
    accumulate(t, ib, g);
  });
}

Variable sub(Variable a, Variable b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "sub");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.grad_buffer(self).data();
    accumulate(t, ia, g);
    accumulate(t, ib, g, -1.0);
  });
}

Variable scale(Variable a, double factor) {
  Tape& tape = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {ia}, [ia, factor](Tape& t, std::size_t self) {
    accumulate(t, ia, t.grad_buffer(self).data(), factor);
  });
}

Variable relu(Variable x) {
  Tape& tape = tape_of(x);
  Tensor out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [ix](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const auto g = t.grad_buffer(self).data();
    const auto in = t.value(ix).data();
    auto dst = t.grad_buffer(ix).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in[i] > 0.0) dst[i] += g[i];
    }
  });
}

Variable abs(Variable x) {
  Tape& tape = tape_of(x);
  Tensor out = x.value();
  for (double& v : out.data()) v = std::fabs(v);
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [ix](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const auto g = t.grad_buffer(self).data();
    const auto in = t.value(ix).data();
    auto dst = t.grad_buffer(ix).data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in[i] > 0.0) {
        dst[i] += g[i];
      } else if (in[i] < 0.0) {
        dst[i] -= g[i];
      }
    }
  });
}

namespace {

// Maps every flat index of `a` to the flat index of the broadcast operand `b`.
std::vector<std::size_t> broadcast_index(const Shape& a, const Shape& b) {
  const std::size_t n = shape_numel(a);
  std::vector<std::size_t> bstride(b.size(), 0);
  std::size_t s = 1;
  for (std::size_t d = b.size(); d-- > 0;) {
    bstride[d] = b[d] == 1 ? 0 : s;
    s *= b[d];
  }
  std::vector<std::size_t> idx(n);
  std::vector<std::size_t> counter(a.size(), 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    idx[i] = off;
    for (std::size_t d = a.size(); d-- > 0;) {
      ++counter[d];
      off += bstride[d];
      if (counter[d] < a[d]) break;
      off -= bstride[d] * counter[d];
      counter[d] = 0;
    }
  }
  return idx;
}

}  // namespace

Variable broadcast_mul(Variable a, Variable b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != bv.rank()) {
    throw ShapeError("broadcast_mul: rank mismatch " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  for (std::size_t d = 0; d < av.rank(); ++d) {
    if (bv.dim(d) != av.dim(d) && bv.dim(d) != 1) {
      throw ShapeError("broadcast_mul: dimension " + std::to_string(d) + " of " + shape_string(bv.shape()) +
                       " cannot broadcast to " + shape_string(av.shape()));
    }
  }
  auto index = broadcast_index(av.shape(), bv.shape());
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[index[i]];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib, index = std::move(index)](Tape& t, std::size_t self) {
    const auto g = t.grad_buffer(self).data();
    const auto avals = t.value(ia).data();
    const auto bvals = t.value(ib).data();
    if (t.requires_grad(ia)) {
      auto da = t.grad_buffer(ia).data();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bvals[index[i]];
    }
    if (t.requires_grad(ib)) {
      auto db = t.grad_buffer(ib).data();
      for (std::size_t i = 0; i < g.size(); ++i) db[index[i]] += g[i] * avals[i];
    }
  });
}

namespace {

struct ConvGeometry {
  std::size_t batch, cin, height, width;
  std::size_t cout, kh, kw;
  std::size_t stride, pad;
  std::size_t out_h, out_w;

  [[nodiscard]] std::size_t patch() const { return cin * kh * kw; }
  [[nodiscard]] std::size_t pixels() const { return out_h * out_w; }
  [[nodiscard]] bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void im2col(const double* in, const ConvGeometry& g, double* col) {
  const std::size_t p = g.pixels();
  for (std::size_t c = 0; c < g.cin; ++c) {
    const double* plane = in + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = col + ((c * g.kh + ky) * g.kw + kx) * p;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* in) {
  const std::size_t p = g.pixels();
  for (std::size_t c = 0; c < g.cin; ++c) {
    double* plane = in + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = col + ((c * g.kh + ky) * g.kw + kx) * p;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Variable conv2d(Variable input, Variable kernel, Variable bias, std::size_t stride, std::size_t padding) {
  Tape& tape = tape_of(input, kernel);
  tape_of(input, bias);
  const Tensor& x = input.value();
  const Tensor& k = kernel.value();
  const Tensor& b = bias.value();
  require_rank(x, 4, "conv2d", "input");
  require_rank(k, 4, "conv2d", "kernel");
  require_rank(b, 1, "conv2d", "bias");
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  if (k.dim(1) != x.dim(1)) {
    throw ShapeError("conv2d: input channels (dimension 1) " + std::to_string(x.dim(1)) +
                     " do not match kernel input channels " + std::to_string(k.dim(1)));
  }
  if (b.dim(0) != k.dim(0)) {
    throw ShapeError("conv2d: bias length " + std::to_string(b.dim(0)) + " does not match output channels " +
                     std::to_string(k.dim(0)));
  }
  if (k.dim(2) > x.dim(2) + 2 * padding) {
    throw ShapeError("conv2d: kernel height (dimension 2) " + std::to_string(k.dim(2)) +
                     " exceeds padded input height " + std::to_string(x.dim(2) + 2 * padding));
  }
  if (k.dim(3) > x.dim(3) + 2 * padding) {
    throw ShapeError("conv2d: kernel width (dimension 3) " + std::to_string(k.dim(3)) +
                     " exceeds padded input width " + std::to_string(x.dim(3) + 2 * padding));
  }

  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(0), k.dim(2), k.dim(3), stride, padding, 0, 0};
  g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;

  Tensor out(Shape{g.batch, g.cout, g.out_h, g.out_w});
  const ConstMatMap kmat(k.data().data(), static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(g.patch()));
  std::vector<double> col(g.pointwise() ? 0 : g.patch() * g.pixels());
  const std::size_t in_step = g.cin * g.height * g.width;
  const std::size_t out_step = g.cout * g.pixels();
  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* src = x.data().data() + n * in_step;
    if (!g.pointwise()) {
      im2col(src, g, col.data());
      src = col.data();
    }
    const ConstMatMap cmat(src, static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.pixels()));
    MatMap omat(out.data().data() + n * out_step, static_cast<Eigen::Index>(g.cout),
                static_cast<Eigen::Index>(g.pixels()));
    omat.noalias() = kmat * cmat;
    for (std::size_t o = 0; o < g.cout; ++o) omat.row(static_cast<Eigen::Index>(o)).array() += b[o];
  }

  const std::size_t ix = input.id(), ik = kernel.id(), ib = bias.id();
  return tape.record(std::move(out), {ix, ik, ib}, [ix, ik, ib, g](Tape& t, std::size_t self) {
    const Tensor& gout = t.grad_buffer(self);
    const Tensor& xv = t.value(ix);
    const Tensor& kv = t.value(ik);
    const bool need_x = t.requires_grad(ix);
    const bool need_k = t.requires_grad(ik);
    const bool need_b = t.requires_grad(ib);
    const auto rows = static_cast<Eigen::Index>(g.cout);
    const auto patch = static_cast<Eigen::Index>(g.patch());
    const auto pixels = static_cast<Eigen::Index>(g.pixels());
    const std::size_t in_step = g.cin * g.height * g.width;
    const std::size_t out_step = g.cout * g.pixels();
    const ConstMatMap kmat(kv.data().data(), rows, patch);

    RowMat dk = RowMat::Zero(rows, patch);
    std::vector<double> col(g.pointwise() ? 0 : g.patch() * g.pixels());
    std::vector<double> dcol(g.pointwise() ? 0 : g.patch() * g.pixels());
    for (std::size_t n = 0; n < g.batch; ++n) {
      const ConstMatMap gmat(gout.data().data() + n * out_step, rows, pixels);
      if (need_k) {
        const double* src = xv.data().data() + n * in_step;
        if (!g.pointwise()) {
          im2col(src, g, col.data());
          src = col.data();
        }
        dk.noalias() += gmat * ConstMatMap(src, patch, pixels).transpose();
      }
      if (need_x) {
        double* dx = t.grad_buffer(ix).data().data() + n * in_step;
        if (g.pointwise()) {
          MatMap(dx, patch, pixels).noalias() += kmat.transpose() * gmat;
        } else {
          MatMap(dcol.data(), patch, pixels).noalias() = kmat.transpose() * gmat;
          col2im_add(dcol.data(), g, dx);
        }
      }
    }
    if (need_k) {
      auto dst = t.grad_buffer(ik).data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += dk.data()[i];
    }
    if (need_b) {
      auto dst = t.grad_buffer(ib).data();
      for (std::size_t n = 0; n < g.batch; ++n) {
        const double* gp = gout.data().data() + n * out_step;
        for (std::size_t o = 0; o < g.cout; ++o) {
          double s = 0.0;
          for (std::size_t p = 0; p < g.pixels(); ++p) s += gp[o * g.pixels() + p];
          dst[o] += s;
        }
      }
    }
  });
}

Variable linear(Variable input, Variable weight, Variable bias) {
  Tape& tape = tape_of(input, weight);
  tape_of(input, bias);
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  require_rank(x, 2, "linear", "input");
  require_rank(w, 2, "linear", "weight");
  require_rank(b, 1, "linear", "bias");
  if (w.dim(1) != x.dim(1)) {
    throw ShapeError("linear: input features (dimension 1) " + std::to_string(x.dim(1)) +
                     " do not match weight columns " + std::to_string(w.dim(1)));
  }
  if (b.dim(0) != w.dim(0)) {
    throw ShapeError("linear: bias length " + std::to_string(b.dim(0)) + " does not match weight rows " +
                     std::to_string(w.dim(0)));
  }
  const auto batch = static_cast<Eigen::Index>(x.dim(0));
  const auto in_f = static_cast<Eigen::Index>(x.dim(1));
  const auto out_f = static_cast<Eigen::Index>(w.dim(0));
  Tensor out(Shape{x.dim(0), w.dim(0)});
  MatMap omat(out.data().data(), batch, out_f);
  omat.noalias() = ConstMatMap(x.data().data(), batch, in_f) * ConstMatMap(w.data().data(), out_f, in_f).transpose();
  for (Eigen::Index r = 0; r < batch; ++r) {
    for (Eigen::Index c = 0; c < out_f; ++c) omat(r, c) += b[static_cast<std::size_t>(c)];
  }
  const std::size_t ix = input.id(), iw = weight.id(), ib = bias.id();
  return tape.record(std::move(out), {ix, iw, ib}, [ix, iw, ib, batch, in_f, out_f](Tape& t, std::size_t self) {
    const ConstMatMap gmat(t.grad_buffer(self).data().data(), batch, out_f);
    if (t.requires_grad(ix)) {
      MatMap(t.grad_buffer(ix).data().data(), batch, in_f).noalias() +=
          gmat * ConstMatMap(t.value(iw).data().data(), out_f, in_f);
    }
    if (t.requires_grad(iw)) {
      MatMap(t.grad_buffer(iw).data().data(), out_f, in_f).noalias() +=
          gmat.transpose() * ConstMatMap(t.value(ix).data().data(), batch, in_f);
    }
    if (t.requires_grad(ib)) {
      auto db = t.grad_buffer(ib).data();
      for (Eigen::Index r = 0; r < batch; ++r) {
        for (Eigen::Index c = 0; c < out_f; ++c) db[static_cast<std::size_t>(c)] += gmat(r, c);
      }
    }
  });
}

Variable concat_channels(Variable a, Variable b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 4, "concat_channels", "first operand");
  require_rank(bv, 4, "concat_channels", "second operand");
  for (std::size_t d : {0u, 2u, 3u}) {
    if (av.dim(d) != bv.dim(d)) {
      throw ShapeError("concat_channels: dimension " + std::to_string(d) + " differs: " + shape_string(av.shape()) +
                       " vs " + shape_string(bv.shape()));
    }
  }
  const std::size_t batch = av.dim(0);
  const std::size_t a_block = av.dim(1) * av.dim(2) * av.dim(3);
  const std::size_t b_block = bv.dim(1) * bv.dim(2) * bv.dim(3);
  Tensor out(Shape{batch, av.dim(1) + bv.dim(1), av.dim(2), av.dim(3)});
  for (std::size_t n = 0; n < batch; ++n) {
    double* dst = out.data().data() + n * (a_block + b_block);
    std::copy_n(av.data().data() + n * a_block, a_block, dst);
    std::copy_n(bv.data().data() + n * b_block, b_block, dst + a_block);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib, batch, a_block, b_block](Tape& t, std::size_t self) {
    const auto g = t.grad_buffer(self).data();
    for (std::size_t n = 0; n < batch; ++n) {
      const double* src = g.data() + n * (a_block + b_block);
      if (t.requires_grad(ia)) {
        double* da = t.grad_buffer(ia).data().data() + n * a_block;
        for (std::size_t i = 0; i < a_block; ++i) da[i] += src[i];
      }
      if (t.requires_grad(ib)) {
        double* db = t.grad_buffer(ib).data().data() + n * b_block;
        for (std::size_t i = 0; i < b_block; ++i) db[i] += src[a_block + i];
      }
    }
  });
}

Variable slice_channels(Variable x, std::size_t begin, std::size_t count) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 4, "slice_channels", "input");
  if (begin + count > xv.dim(1)) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                     ") exceeds channel count " + std::to_string(xv.dim(1)));
  }
  const std::size_t batch = xv.dim(0);
  const std::size_t plane = xv.dim(2) * xv.dim(3);
  const std::size_t in_block = xv.dim(1) * plane;
  const std::size_t out_block = count * plane;
  Tensor out(Shape{batch, count, xv.dim(2), xv.dim(3)});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(xv.data().data() + n * in_block + begin * plane, out_block, out.data().data() + n * out_block);
  }
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [ix, batch, plane, in_block, out_block, begin](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const auto g = t.grad_buffer(self).data();
    auto dx = t.grad_buffer(ix).data();
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t i = 0; i < out_block; ++i) dx[n * in_block + begin * plane + i] += g[n * out_block + i];
    }
  });
}

Variable global_max_pool_spatial(Variable x) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 4, "global_max_pool_spatial", "input");
  const std::size_t planes = xv.dim(0) * xv.dim(1);
  const std::size_t plane = xv.dim(2) * xv.dim(3);
  if (plane == 0) throw ShapeError("global_max_pool_spatial: empty spatial extent");
  Tensor out(Shape{xv.dim(0), xv.dim(1), 1, 1});
  std::vector<std::size_t> argmax(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = xv.data().data() + p * plane;
    std::size_t best = 0;
    for (std::size_t i = 1; i < plane; ++i) {
      if (src[i] > src[best]) best = i;
    }
    argmax[p] = p * plane + best;
    out[p] = src[best];
  }
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [ix, argmax = std::move(argmax)](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const auto g = t.grad_buffer(self).data();
    auto dx = t.grad_buffer(ix).data();
    for (std::size_t p = 0; p < argmax.size(); ++p) dx[argmax[p]] += g[p];
  });
}

Variable global_avg_pool_channels(Variable x) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 4, "global_avg_pool_channels", "input");
  const std::size_t batch = xv.dim(0), channels = xv.dim(1);
  const std::size_t plane = xv.dim(2) * xv.dim(3);
  if (channels == 0) throw ShapeError("global_avg_pool_channels: zero channels");
  Tensor out(Shape{batch, 1, xv.dim(2), xv.dim(3)});
  const double inv = 1.0 / static_cast<double>(channels);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < channels; ++c) s += xv[(n * channels + c) * plane + i];
      out[n * plane + i] = s * inv;
    }
  }
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [ix, batch, channels, plane, inv](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const auto g = t.grad_buffer(self).data();
    auto dx = t.grad_buffer(ix).data();
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) dx[(n * channels + c) * plane + i] += g[n * plane + i] * inv;
      }
    }
  });
}

Variable upsample_nearest(Variable x, std::size_t factor) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 4, "upsample_nearest", "input");
  if (factor == 0) throw std::invalid_argument("upsample_nearest: factor must be positive");
  const std::size_t planes = xv.dim(0) * xv.dim(1);
  const std::size_t h = xv.dim(2), w = xv.dim(3);
  const std::size_t oh = h * factor, ow = w * factor;
  Tensor out(Shape{xv.dim(0), xv.dim(1), oh, ow});
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        out[(p * oh + y) * ow + xx] = xv[(p * h + y / factor) * w + xx / factor];
      }
    }
  }
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [ix, planes, h, w, factor](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const auto g = t.grad_buffer(self).data();
    auto dx = t.grad_buffer(ix).data();
    const std::size_t oh = h * factor, ow = w * factor;
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xx = 0; xx < ow; ++xx) dx[(p * h + y / factor) * w + xx / factor] += g[(p * oh + y) * ow + xx];
      }
    }
  });
}

Variable reshape(Variable x, Shape shape) {
  Tape& tape = tape_of(x);
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [ix](Tape& t, std::size_t self) {
    accumulate(t, ix, t.grad_buffer(self).data());
  });
}

Variable sum(Variable x) {
  Tape& tape = tape_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t ix = x.id();
  return tape.record(Tensor::scalar(s), {ix}, [ix](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const double g = t.grad_buffer(self)[0];
    for (double& d : t.grad_buffer(ix).data()) d += g;
  });
}

Variable mean(Variable x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Variable row_norm(Variable x) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  require_rank(xv, 2, "row_norm", "input");
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  Tensor out(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += xv[r * cols + c] * xv[r * cols + c];
    out[r] = std::sqrt(s);
  }
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [ix, rows, cols](Tape& t, std::size_t self) {
    if (!t.requires_grad(ix)) return;
    const auto g = t.grad_buffer(self).data();
    const auto norms = t.value(self).data();
    const auto in = t.value(ix).data();
    auto dx = t.grad_buffer(ix).data();
    for (std::size_t r = 0; r < rows; ++r) {
      if (norms[r] == 0.0) continue;
      const double f = g[r] / norms[r];
      for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] += f * in[r * cols + c];
    }
  });
}

}  // namespace ops
}  // namespace axloc
