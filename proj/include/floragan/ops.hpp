#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "floragan/autograd.hpp"
#include "floragan/tensor.hpp"

namespace floragan {

/// Output length of a convolution along one axis; throws if the window no longer fits.
inline int conv_output_size(int in, int kernel, int stride, int pad) {
  const int span = in + 2 * pad - kernel;
  if (span < 0 || stride < 1)
    throw ShapeError("convolution window (K=" + std::to_string(kernel) + ", P=" + std::to_string(pad) +
                     ") does not fit input of size " + std::to_string(in));
  return span / stride + 1;
}

inline int transposed_output_size(int in, int kernel, int stride, int pad, int output_padding) {
  const int out = (in - 1) * stride - 2 * pad + kernel + output_padding;
  if (out < 1) throw ShapeError("transposed convolution produces empty output");
  return out;
}

// Geometry of a sliding window over an image (channels x in_h x in_w) that
// visits an out_h x out_w grid.
struct ConvGeometry {
  int channels = 0;
  int in_h = 0, in_w = 0;
  int kernel = 1, stride = 1, pad = 0;
  int out_h = 0, out_w = 0;

  int patch() const { return channels * kernel * kernel; }
};

namespace detail {

// Columns for grid rows [r0, r1). Row (c*K + ky)*K + kx of `col` holds the
// input sample under kernel tap (ky, kx) for every output position.
template <typename Scalar>
void im2col_rows(const Scalar* img, const ConvGeometry& g, int r0, int r1, Matrix<Scalar>& col) {
  const int n = (r1 - r0) * g.out_w;
  col.resize(g.patch(), n);
  for (int c = 0; c < g.channels; ++c) {
    const Scalar* plane = img + static_cast<std::ptrdiff_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        Scalar* dst = col.row((c * g.kernel + ky) * g.kernel + kx).data();
        for (int oy = r0; oy < r1; ++oy) {
          Scalar* d = dst + static_cast<std::ptrdiff_t>(oy - r0) * g.out_w;
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(d, d + g.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = plane + static_cast<std::ptrdiff_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            d[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col_rows: scatters columns back onto the image (accumulating).
template <typename Scalar>
void col2im_rows(const Matrix<Scalar>& col, const ConvGeometry& g, int r0, int r1, Scalar* img) {
  for (int c = 0; c < g.channels; ++c) {
    Scalar* plane = img + static_cast<std::ptrdiff_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const Scalar* src_row = col.row((c * g.kernel + ky) * g.kernel + kx).data();
        for (int oy = r0; oy < r1; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          const Scalar* s = src_row + static_cast<std::ptrdiff_t>(oy - r0) * g.out_w;
          Scalar* dst = plane + static_cast<std::ptrdiff_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) dst[ix] += s[ox];
          }
        }
      }
    }
  }
}

// Grid rows per tile so the column buffer stays around 4M elements.
inline int tile_rows(const ConvGeometry& g) {
  const long per_row = static_cast<long>(g.patch()) * g.out_w;
  const long budget = 1L << 22;
  return static_cast<int>(std::clamp<long>(budget / std::max(per_row, 1L), 1L, g.out_h));
}

inline bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Plain tensor kernels.

/// Rearranges (C*r*r) x h x w into C x (r*h) x (r*w):
/// out(c, r*i + a, r*j + b) = in(c*r*r + a*r + b, i, j).
template <typename Scalar>
Tensor<Scalar> pixel_shuffle(const Tensor<Scalar>& x, int r) {
  if (r < 1) throw ShapeError("pixel shuffle factor must be >= 1");
  const int rr = r * r;
  if (x.channels() % rr != 0)
    throw ShapeError("pixel shuffle: " + std::to_string(x.channels()) + " channels not divisible by " +
                     std::to_string(rr));
  const int c_out = x.channels() / rr;
  const int h = x.height(), w = x.width();
  Tensor<Scalar> out(c_out, h * r, w * r);
  for (int c = 0; c < c_out; ++c)
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < r; ++b) {
        const int src_c = c * rr + a * r + b;
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j) out(c, r * i + a, r * j + b) = x(src_c, i, j);
      }
  return out;
}

/// Inverse of pixel_shuffle.
template <typename Scalar>
Tensor<Scalar> pixel_unshuffle(const Tensor<Scalar>& x, int r) {
  if (r < 1 || x.height() % r != 0 || x.width() % r != 0)
    throw ShapeError("pixel unshuffle: spatial size " + to_string(x.shape()) + " not divisible by " +
                     std::to_string(r));
  const int rr = r * r;
  const int h = x.height() / r, w = x.width() / r;
  Tensor<Scalar> out(x.channels() * rr, h, w);
  for (int c = 0; c < x.channels(); ++c)
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < r; ++b) {
        const int dst_c = c * rr + a * r + b;
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j) out(dst_c, i, j) = x(c, r * i + a, r * j + b);
      }
  return out;
}

/// Row-wise softmax with max subtraction.
template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& scores) {
  Matrix<Scalar> out(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const Scalar m = scores.row(i).maxCoeff();
    out.row(i) = (scores.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Differentiable ops.

/// Zero-padded 2-D convolution. `weight` is stored as (N, 1, C*K*K); `bias` may be undefined.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, int kernel, int stride,
                   int pad) {
  const Shape in = x.shape();
  const int n_out = weight.shape().channels;
  ConvGeometry g{in.channels, in.height, in.width, kernel, stride, pad, 0, 0};
  if (weight.shape().width != g.patch())
    throw ShapeError("conv2d: weight expects " + std::to_string(weight.shape().width / (kernel * kernel)) +
                     " input channels, got " + std::to_string(in.channels));
  g.out_h = conv_output_size(in.height, kernel, stride, pad);
  g.out_w = conv_output_size(in.width, kernel, stride, pad);

  const auto& W = weight.value().matrix();
  Tensor<Scalar> y(n_out, g.out_h, g.out_w);
  if (detail::is_pointwise(g)) {
    y.matrix().noalias() = W * x.value().matrix();
  } else {
    Matrix<Scalar> col;
    const int step = detail::tile_rows(g);
    for (int r0 = 0; r0 < g.out_h; r0 += step) {
      const int r1 = std::min(g.out_h, r0 + step);
      detail::im2col_rows(x.value().data(), g, r0, r1, col);
      y.matrix().middleCols(static_cast<Eigen::Index>(r0) * g.out_w, col.cols()).noalias() = W * col;
    }
  }
  if (bias.defined()) y.matrix().colwise() += bias.value().matrix().col(0);

  const bool with_bias = bias.defined();
  auto back = [g, with_bias](Node<Scalar>& self) {
    auto& xn = self.parent(0);
    auto& wn = self.parent(1);
    const Matrix<Scalar>& dy = self.grad;
    const auto& Wm = wn.value.matrix();
    if (with_bias && self.parents.size() > 2) {
      auto& bn = self.parent(2);
      if (bn.requires_grad) bn.accumulate(dy.rowwise().sum());
    }
    if (detail::is_pointwise(g)) {
      if (wn.requires_grad) wn.accumulate(dy * xn.value.matrix().transpose());
      if (xn.requires_grad) xn.accumulate(Wm.transpose() * dy);
      return;
    }
    const int step = detail::tile_rows(g);
    Matrix<Scalar> col, dcol;
    Matrix<Scalar> dW;
    Matrix<Scalar> dx;
    if (wn.requires_grad) dW = Matrix<Scalar>::Zero(Wm.rows(), Wm.cols());
    if (xn.requires_grad) dx = Matrix<Scalar>::Zero(g.channels, static_cast<Eigen::Index>(g.in_h) * g.in_w);
    for (int r0 = 0; r0 < g.out_h; r0 += step) {
      const int r1 = std::min(g.out_h, r0 + step);
      const auto dy_tile = dy.middleCols(static_cast<Eigen::Index>(r0) * g.out_w,
                                         static_cast<Eigen::Index>(r1 - r0) * g.out_w);
      if (wn.requires_grad) {
        detail::im2col_rows(xn.value.data(), g, r0, r1, col);
        dW.noalias() += dy_tile * col.transpose();
      }
      if (xn.requires_grad) {
        dcol.noalias() = Wm.transpose() * dy_tile;
        detail::col2im_rows(dcol, g, r0, r1, dx.data());
      }
    }
    if (wn.requires_grad) wn.accumulate(dW);
    if (xn.requires_grad) xn.accumulate(dx);
  };
  if (with_bias) return autograd::make_result<Scalar>(std::move(y), {x, weight, bias}, back);
  return autograd::make_result<Scalar>(std::move(y), {x, weight}, back);
}

/// Transposed convolution (adjoint of conv2d). `weight` is stored as (C_in, 1, C_out*K*K).
template <typename Scalar>
Var<Scalar> conv_transpose2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, int kernel,
                             int stride, int pad, int output_padding) {
  const Shape in = x.shape();
  if (weight.shape().channels != in.channels)
    throw ShapeError("conv_transpose2d: weight expects " + std::to_string(weight.shape().channels) +
                     " input channels, got " + std::to_string(in.channels));
  if (weight.shape().width % (kernel * kernel) != 0) throw ShapeError("conv_transpose2d: malformed weight");
  const int n_out = weight.shape().width / (kernel * kernel);
  const int out_h = transposed_output_size(in.height, kernel, stride, pad, output_padding);
  const int out_w = transposed_output_size(in.width, kernel, stride, pad, output_padding);
  // Window geometry of the adjoint convolution: output image seen through the input grid.
  const ConvGeometry g{n_out, out_h, out_w, kernel, stride, pad, in.height, in.width};

  const auto& W = weight.value().matrix();
  Tensor<Scalar> y(n_out, out_h, out_w);
  {
    Matrix<Scalar> cols;
    const int step = detail::tile_rows(g);
    for (int r0 = 0; r0 < g.out_h; r0 += step) {
      const int r1 = std::min(g.out_h, r0 + step);
      cols.noalias() = W.transpose() * x.value().matrix().middleCols(static_cast<Eigen::Index>(r0) * g.out_w,
                                                                     static_cast<Eigen::Index>(r1 - r0) * g.out_w);
      detail::col2im_rows(cols, g, r0, r1, y.data());
    }
  }
  if (bias.defined()) y.matrix().colwise() += bias.value().matrix().col(0);

  const bool with_bias = bias.defined();
  auto back = [g, with_bias](Node<Scalar>& self) {
    auto& xn = self.parent(0);
    auto& wn = self.parent(1);
    const Matrix<Scalar>& dy = self.grad;
    const auto& Wm = wn.value.matrix();
    if (with_bias && self.parents.size() > 2) {
      auto& bn = self.parent(2);
      if (bn.requires_grad) bn.accumulate(dy.rowwise().sum());
    }
    const int step = detail::tile_rows(g);
    Matrix<Scalar> col;
    Matrix<Scalar> dW, dx;
    if (wn.requires_grad) dW = Matrix<Scalar>::Zero(Wm.rows(), Wm.cols());
    if (xn.requires_grad) dx.resize(Wm.rows(), static_cast<Eigen::Index>(g.out_h) * g.out_w);
    for (int r0 = 0; r0 < g.out_h; r0 += step) {
      const int r1 = std::min(g.out_h, r0 + step);
      const Eigen::Index c0 = static_cast<Eigen::Index>(r0) * g.out_w;
      const Eigen::Index n = static_cast<Eigen::Index>(r1 - r0) * g.out_w;
      detail::im2col_rows(dy.data(), g, r0, r1, col);
      if (xn.requires_grad) dx.middleCols(c0, n).noalias() = Wm * col;
      if (wn.requires_grad) dW.noalias() += xn.value.matrix().middleCols(c0, n) * col.transpose();
    }
    if (wn.requires_grad) wn.accumulate(dW);
    if (xn.requires_grad) xn.accumulate(dx);
  };
  if (with_bias) return autograd::make_result<Scalar>(std::move(y), {x, weight, bias}, back);
  return autograd::make_result<Scalar>(std::move(y), {x, weight}, back);
}

/// Per-channel normalization over the spatial plane; optional affine (gain, shift) of shape (C, 1, 1).
template <typename Scalar>
Var<Scalar> instance_norm(const Var<Scalar>& x, const Var<Scalar>& gain = {}, const Var<Scalar>& shift = {},
                          Scalar eps = Scalar(1e-5)) {
  const auto& X = x.value().matrix();
  const Eigen::Index n = X.cols();
  Matrix<Scalar> xhat(X.rows(), n);
  Vector<Scalar> inv_std(X.rows());
  for (Eigen::Index c = 0; c < X.rows(); ++c) {
    const Scalar mean = X.row(c).mean();
    const Scalar var = (X.row(c).array() - mean).square().mean();
    inv_std(c) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(c) = (X.row(c).array() - mean) * inv_std(c);
  }
  const bool affine = gain.defined();
  if (!affine) {
    auto back = [inv_std, n](Node<Scalar>& self) {
      const auto& xh = self.value.matrix();
      const auto& dy = self.grad;
      Matrix<Scalar> dx(dy.rows(), dy.cols());
      for (Eigen::Index c = 0; c < dy.rows(); ++c) {
        const Scalar mean_dy = dy.row(c).mean();
        const Scalar mean_dy_xh = dy.row(c).dot(xh.row(c)) / static_cast<Scalar>(n);
        dx.row(c) = inv_std(c) * (dy.row(c).array() - mean_dy - xh.row(c).array() * mean_dy_xh);
      }
      self.parent(0).accumulate(dx);
    };
    return autograd::make_result<Scalar>(Tensor<Scalar>(x.shape(), std::move(xhat)), {x}, back);
  }
  Matrix<Scalar> y = xhat;
  for (Eigen::Index c = 0; c < X.rows(); ++c)
    y.row(c) = y.row(c).array() * gain.value().matrix()(c, 0) + shift.value().matrix()(c, 0);
  auto back = [inv_std, n, xhat](Node<Scalar>& self) {
    const auto& dy = self.grad;
    auto& gn = self.parent(1);
    auto& sn = self.parent(2);
    const auto& gvals = gn.value.matrix();
    if (gn.requires_grad) gn.accumulate((dy.cwiseProduct(xhat)).rowwise().sum());
    if (sn.requires_grad) sn.accumulate(dy.rowwise().sum());
    auto& xn = self.parent(0);
    if (!xn.requires_grad) return;
    Matrix<Scalar> dx(dy.rows(), dy.cols());
    for (Eigen::Index c = 0; c < dy.rows(); ++c) {
      const auto dxh = (dy.row(c) * gvals(c, 0)).eval();
      const Scalar m1 = dxh.mean();
      const Scalar m2 = dxh.dot(xhat.row(c)) / static_cast<Scalar>(n);
      dx.row(c) = inv_std(c) * (dxh.array() - m1 - xhat.row(c).array() * m2);
    }
    xn.accumulate(dx);
  };
  return autograd::make_result<Scalar>(Tensor<Scalar>(x.shape(), std::move(y)), {x, gain, shift}, back);
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  Tensor<Scalar> y(x.shape(), x.value().matrix().cwiseMax(Scalar(0)));
  return autograd::make_result<Scalar>(std::move(y), {x}, [](Node<Scalar>& self) {
    self.parent(0).accumulate((self.value.matrix().array() > Scalar(0)).select(self.grad.array(), Scalar(0)).matrix());
  });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& x, Scalar slope) {
  const auto& X = x.value().matrix();
  Tensor<Scalar> y(x.shape(), (X.array() > Scalar(0)).select(X.array(), X.array() * slope).matrix());
  return autograd::make_result<Scalar>(std::move(y), {x}, [slope](Node<Scalar>& self) {
    self.parent(0).accumulate((self.value.matrix().array() > Scalar(0)).select(self.grad.array(), self.grad.array() * slope).matrix());
  });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  Tensor<Scalar> y(x.shape(), x.value().matrix().array().tanh().matrix());
  return autograd::make_result<Scalar>(std::move(y), {x}, [](Node<Scalar>& self) {
    const auto& Y = self.value.matrix().array();
    self.parent(0).accumulate((self.grad.array() * (Scalar(1) - Y.square())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Tensor<Scalar> y(a.shape(), a.value().matrix() + b.value().matrix());
  return autograd::make_result<Scalar>(std::move(y), {a, b}, [](Node<Scalar>& self) {
    self.parent(0).accumulate(self.grad);
    self.parent(1).accumulate(self.grad);
  });
}

/// Multiplies by a constant.
template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar factor) {
  Tensor<Scalar> y(x.shape(), x.value().matrix() * factor);
  return autograd::make_result<Scalar>(std::move(y), {x}, [factor](Node<Scalar>& self) {
    self.parent(0).accumulate(self.grad * factor);
  });
}

/// Multiplies by a learned 1x1x1 scalar.
template <typename Scalar>
Var<Scalar> gate(const Var<Scalar>& x, const Var<Scalar>& g) {
  const Scalar s = g.value().matrix()(0, 0);
  Tensor<Scalar> y(x.shape(), x.value().matrix() * s);
  return autograd::make_result<Scalar>(std::move(y), {x, g}, [s](Node<Scalar>& self) {
    auto& xn = self.parent(0);
    auto& gn = self.parent(1);
    if (gn.requires_grad) gn.accumulate(Matrix<Scalar>::Constant(1, 1, self.grad.cwiseProduct(xn.value.matrix()).sum()));
    xn.accumulate(self.grad * s);
  });
}

template <typename Scalar>
Var<Scalar> pixel_shuffle(const Var<Scalar>& x, int r) {
  return autograd::make_result<Scalar>(pixel_shuffle(x.value(), r), {x}, [r](Node<Scalar>& self) {
    Tensor<Scalar> g(self.value.shape(), self.grad);
    self.parent(0).accumulate(pixel_unshuffle(g, r).matrix());
  });
}

/// Same storage under a new shape.
template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Shape shape) {
  return autograd::make_result<Scalar>(x.value().reshaped(shape), {x}, [](Node<Scalar>& self) {
    const Shape& s = self.parent(0).value.shape();
    self.parent(0).accumulate(Eigen::Map<const Matrix<Scalar>>(self.grad.data(), s.channels, s.plane()));
  });
}

/// op(A) * op(B) on the (rows, cols) storage of both operands; result has shape (rows, 1, cols).
template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b, bool transpose_a = false, bool transpose_b = false) {
  const auto& A = a.value().matrix();
  const auto& B = b.value().matrix();
  const auto inner_a = transpose_a ? A.rows() : A.cols();
  const auto inner_b = transpose_b ? B.cols() : B.rows();
  if (inner_a != inner_b) throw ShapeError("matmul: inner dimensions differ");
  Matrix<Scalar> C;
  if (!transpose_a && !transpose_b) C.noalias() = A * B;
  else if (transpose_a && !transpose_b) C.noalias() = A.transpose() * B;
  else if (!transpose_a) C.noalias() = A * B.transpose();
  else C.noalias() = A.transpose() * B.transpose();
  auto back = [transpose_a, transpose_b](Node<Scalar>& self) {
    auto& an = self.parent(0);
    auto& bn = self.parent(1);
    const auto& Am = an.value.matrix();
    const auto& Bm = bn.value.matrix();
    const auto& dC = self.grad;
    if (an.requires_grad) {
      Matrix<Scalar> dA;
      if (!transpose_a && !transpose_b) dA.noalias() = dC * Bm.transpose();
      else if (transpose_a && !transpose_b) dA.noalias() = Bm * dC.transpose();
      else if (!transpose_a) dA.noalias() = dC * Bm;
      else dA.noalias() = Bm.transpose() * dC.transpose();
      an.accumulate(dA);
    }
    if (bn.requires_grad) {
      Matrix<Scalar> dB;
      if (!transpose_a && !transpose_b) dB.noalias() = Am.transpose() * dC;
      else if (transpose_a && !transpose_b) dB.noalias() = Am * dC;
      else if (!transpose_a) dB.noalias() = dC.transpose() * Am;
      else dB.noalias() = dC.transpose() * Am.transpose();
      bn.accumulate(dB);
    }
  };
  return autograd::make_result<Scalar>(Tensor<Scalar>::from_matrix(std::move(C)), {a, b}, back);
}

template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& x) {
  Tensor<Scalar> y(x.shape(), softmax_rows(x.value().matrix()));
  return autograd::make_result<Scalar>(std::move(y), {x}, [](Node<Scalar>& self) {
    const auto& Y = self.value.matrix();
    const auto& dY = self.grad;
    const Vector<Scalar> inner = dY.cwiseProduct(Y).rowwise().sum();
    self.parent(0).accumulate((Y.array() * (dY.colwise() - inner).array()).matrix());
  });
}

/// Mean over each channel plane: C x H x W -> C x 1 x 1.
template <typename Scalar>
Var<Scalar> spatial_mean(const Var<Scalar>& x) {
  const Shape s = x.shape();
  Tensor<Scalar> y(Shape{s.channels, 1, 1}, x.value().matrix().rowwise().mean());
  return autograd::make_result<Scalar>(std::move(y), {x}, [s](Node<Scalar>& self) {
    Matrix<Scalar> g = self.grad.col(0).replicate(1, s.plane()) / static_cast<Scalar>(s.plane());
    self.parent(0).accumulate(g);
  });
}

/// Sum of scalar (1x1x1) vars, each with a constant weight.
template <typename Scalar>
Var<Scalar> weighted_sum(const std::vector<Var<Scalar>>& terms, const std::vector<Scalar>& weights) {
  if (terms.size() != weights.size()) throw ShapeError("weighted_sum: terms and weights differ in length");
  Var<Scalar> acc;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    Var<Scalar> t = weights[i] == Scalar(1) ? terms[i] : scale(terms[i], weights[i]);
    acc = acc.defined() ? add(acc, t) : t;
  }
  if (!acc.defined()) return Var<Scalar>(Tensor<Scalar>(1, 1, 1));
  return acc;
}

}  // namespace floragan
