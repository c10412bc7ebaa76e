#pragma once

#include <cmath>
#include <random>

#include "floragan/autograd.hpp"
#include "floragan/tensor.hpp"

namespace floragan {

/// Persisted singular-vector estimates for one weight matrix (rows x cols):
/// u has `rows` entries, v has `cols`.
template <typename Scalar>
struct PowerIterationState {
  Vector<Scalar> u;
  Vector<Scalar> v;

  bool initialized_for(Eigen::Index rows, Eigen::Index cols) const { return u.size() == rows && v.size() == cols; }
};

template <typename Scalar>
struct SpectralNormResult {
  Matrix<Scalar> normalized;
  Scalar sigma = 0;
  bool degenerate = false;  // zero matrix, sigma undefined; `normalized` is the input
};

namespace detail {

template <typename Scalar>
void normalize_in_place(Vector<Scalar>& x) {
  const Scalar n = x.norm();
  x /= std::max(n, Scalar(1e-12));
}

}  // namespace detail

/// Fills `state` with a unit Gaussian direction for a rows x cols matrix.
template <typename Scalar, typename Rng>
void init_power_iteration(PowerIterationState<Scalar>& state, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  state.u.resize(rows);
  for (Eigen::Index i = 0; i < rows; ++i) state.u(i) = static_cast<Scalar>(normal(rng));
  detail::normalize_in_place(state.u);
  state.v.resize(cols);
  for (Eigen::Index i = 0; i < cols; ++i) state.v(i) = static_cast<Scalar>(normal(rng));
  detail::normalize_in_place(state.v);
}

/// Runs `iterations` rounds of v <- W^T u / |.|, u <- W v / |.| and returns u^T W v.
template <typename Scalar>
Scalar power_iteration(const Matrix<Scalar>& W, PowerIterationState<Scalar>& state, int iterations) {
  if (!state.initialized_for(W.rows(), W.cols())) {
    std::mt19937_64 rng(0x5eed);
    init_power_iteration(state, W.rows(), W.cols(), rng);
  }
  for (int i = 0; i < iterations; ++i) {
    state.v.noalias() = W.transpose() * state.u;
    detail::normalize_in_place(state.v);
    state.u.noalias() = W * state.v;
    detail::normalize_in_place(state.u);
  }
  return state.u.dot(W * state.v);
}

/// W / sigma_hat with sigma_hat from `iterations` power-iteration rounds seeded by `state`.
/// A zero matrix comes back unchanged and flagged degenerate.
template <typename Scalar>
SpectralNormResult<Scalar> spectral_normalize(const Matrix<Scalar>& W, int iterations,
                                              PowerIterationState<Scalar>& state) {
  if (iterations < 1) throw DomainError("spectral_normalize needs at least one power iteration");
  SpectralNormResult<Scalar> out;
  if (W.size() == 0 || W.cwiseAbs().maxCoeff() == Scalar(0)) {
    out.normalized = W;
    out.degenerate = true;
    return out;
  }
  out.sigma = power_iteration(W, state, iterations);
  if (!(out.sigma > Scalar(0))) {
    out.normalized = W;
    out.degenerate = true;
    return out;
  }
  out.normalized = W / out.sigma;
  return out;
}

/// Differentiable W / sigma(W). The singular vectors are treated as constants, so
/// dL/dW = (G - <G, W/sigma> u v^T) / sigma. With `update` false the stored
/// vectors are used as-is (inference).
template <typename Scalar>
Var<Scalar> spectral_normalized(const Var<Scalar>& weight, PowerIterationState<Scalar>& state, int iterations,
                                bool update) {
  const auto& W = weight.value().matrix();
  Scalar sigma;
  if (update || !state.initialized_for(W.rows(), W.cols()))
    sigma = power_iteration(W, state, std::max(iterations, 1));
  else
    sigma = state.u.dot(W * state.v);
  if (!(sigma > Scalar(0)) || !std::isfinite(static_cast<double>(sigma))) return weight;
  Tensor<Scalar> out(weight.shape(), W / sigma);
  Vector<Scalar> u = state.u;
  Vector<Scalar> v = state.v;
  return autograd::make_result<Scalar>(std::move(out), {weight}, [sigma, u, v](Node<Scalar>& self) {
    const Matrix<Scalar>& G = self.grad;
    const Scalar inner = G.cwiseProduct(self.value.matrix()).sum();
    self.parent(0).accumulate((G - inner * (u * v.transpose())) / sigma);
  });
}

}  // namespace floragan
