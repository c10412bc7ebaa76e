#pragma once

#include <algorithm>

#include "floragan/ops.hpp"

namespace floragan {

/// Query/key channels for a self-attention layer over `channels` features.
inline int attention_key_channels(int channels) { return std::max(1, channels / 8); }

/// Learned 1x1 projections and residual gate of one self-attention layer.
/// Weights use the conv2d (N, 1, C) layout.
template <typename Scalar>
struct AttentionParams {
  Var<Scalar> query_weight, query_bias;
  Var<Scalar> key_weight, key_bias;
  Var<Scalar> value_weight, value_bias;
  Var<Scalar> gamma;  // 1x1x1, starts at 0

  static AttentionParams zeros(int channels) {
    const int kc = attention_key_channels(channels);
    auto param = [](int c, int h, int w) { return Var<Scalar>(Tensor<Scalar>(c, h, w), true); };
    return {param(kc, 1, channels), param(kc, 1, 1), param(kc, 1, channels), param(kc, 1, 1),
            param(channels, 1, channels), param(channels, 1, 1), param(1, 1, 1)};
  }
};

/// Projection weights after any reparameterization (e.g. spectral normalization).
template <typename Scalar>
struct AttentionWeights {
  Var<Scalar> query, key, value;
};

/// y = x + gamma * (V softmax(Q^T K)^T). Rows of the attention map index query
/// positions and sum to 1 over key positions. If `attention_out` is given it
/// receives the (HW x HW) attention map.
template <typename Scalar>
Var<Scalar> self_attention(const Var<Scalar>& x, const AttentionParams<Scalar>& p, const AttentionWeights<Scalar>& w,
                           Matrix<Scalar>* attention_out = nullptr) {
  const Shape s = x.shape();
  if (w.value.shape().width != s.channels || w.value.shape().channels != s.channels)
    throw ShapeError("self_attention: value projection expects " + std::to_string(w.value.shape().width) +
                     " channels, got " + std::to_string(s.channels));
  const Var<Scalar> q = conv2d(x, w.query, p.query_bias, 1, 1, 0);
  const Var<Scalar> k = conv2d(x, w.key, p.key_bias, 1, 1, 0);
  const Var<Scalar> v = conv2d(x, w.value, p.value_bias, 1, 1, 0);
  const Var<Scalar> scores = matmul(q, k, /*transpose_a=*/true, /*transpose_b=*/false);
  const Var<Scalar> attention = softmax_rows(scores);
  if (attention_out) *attention_out = attention.value().matrix();
  const Var<Scalar> mixed = reshape(matmul(v, attention, false, true), s);
  return add(x, gate(mixed, p.gamma));
}

template <typename Scalar>
Var<Scalar> self_attention(const Var<Scalar>& x, const AttentionParams<Scalar>& p,
                           Matrix<Scalar>* attention_out = nullptr) {
  return self_attention(x, p, AttentionWeights<Scalar>{p.query_weight, p.key_weight, p.value_weight}, attention_out);
}

}  // namespace floragan
