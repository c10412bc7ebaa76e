#pragma once

#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "floragan/attention.hpp"
#include "floragan/layer_spec.hpp"
#include "floragan/ops.hpp"
#include "floragan/spectral_norm.hpp"

namespace floragan {

/// Knobs the layer tables leave open.
struct NetworkOptions {
  double leaky_slope = 0.2;
  bool instance_affine = false;
  int power_iterations = 1;  // per training forward pass
  double init_stddev = 0.02;

  friend bool operator==(const NetworkOptions&, const NetworkOptions&) = default;
};

template <typename Scalar>
struct NamedParameter {
  std::string name;
  Var<Scalar> var;
};

template <typename Scalar>
struct NamedNormState {
  std::string name;
  PowerIterationState<Scalar>* state;
};

/// Weights of a convolution (or transposed convolution) plus its spectral-norm state.
template <typename Scalar>
struct ConvWeights {
  Var<Scalar> weight;
  Var<Scalar> bias;
  PowerIterationState<Scalar> power;
  bool spectral = false;

  static ConvWeights conv(int in_channels, int out_channels, int kernel, bool spectral = false) {
    return {Var<Scalar>(Tensor<Scalar>(out_channels, 1, in_channels * kernel * kernel), true),
            Var<Scalar>(Tensor<Scalar>(out_channels, 1, 1), true), {}, spectral};
  }
  static ConvWeights transposed(int in_channels, int out_channels, int kernel) {
    return {Var<Scalar>(Tensor<Scalar>(in_channels, 1, out_channels * kernel * kernel), true),
            Var<Scalar>(Tensor<Scalar>(out_channels, 1, 1), true), {}, false};
  }

  Var<Scalar> effective_weight(bool training, int iterations) {
    if (!spectral) return weight;
    return spectral_normalized(weight, power, iterations, training);
  }
};

/// conv(3x3) -> instance norm -> relu -> conv(3x3) -> instance norm, added back onto x.
template <typename Scalar>
Var<Scalar> residual_block(const Var<Scalar>& x, const Var<Scalar>& w1, const Var<Scalar>& b1, const Var<Scalar>& w2,
                           const Var<Scalar>& b2, int kernel = 3, int pad = 1) {
  if (w1.shape().channels != x.shape().channels || w2.shape().channels != x.shape().channels)
    throw ShapeError("residual_block: block has " + std::to_string(w2.shape().channels) + " channels, input has " +
                     std::to_string(x.shape().channels));
  Var<Scalar> h = relu(instance_norm(conv2d(x, w1, b1, kernel, 1, pad)));
  h = instance_norm(conv2d(h, w2, b2, kernel, 1, pad));
  return add(x, h);
}

/// conv(K=3) to C*r*r channels -> pixel shuffle(r) -> instance norm -> relu.
template <typename Scalar>
Var<Scalar> subpixel_upsample(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& b, int factor = 4,
                              int kernel = 3, int pad = 1) {
  if (w.shape().width != x.shape().channels * kernel * kernel)
    throw ShapeError("subpixel_upsample: weight expects " + std::to_string(w.shape().width / (kernel * kernel)) +
                     " input channels, got " + std::to_string(x.shape().channels));
  return relu(instance_norm(pixel_shuffle(conv2d(x, w, b, kernel, 1, pad), factor)));
}

/// A network instantiated from a layer table. Spectral-norm vectors advance
/// only in training mode, so an eval-mode forward leaves the object untouched.
template <typename Scalar>
class Network {
 public:
  explicit Network(NetworkSpec spec, NetworkOptions options = {}) : spec_(std::move(spec)), options_(options) {
    int channels = spec_.in_channels;
    for (const auto& l : spec_.layers) {
      validate(l);
      Layer layer;
      layer.spec = l;
      const bool sn = l.norm == NormKind::spectral;
      switch (l.kind) {
        case LayerKind::conv:
          layer.conv1 = ConvWeights<Scalar>::conv(channels, l.channels, l.kernel, sn);
          channels = l.channels;
          break;
        case LayerKind::transposed_conv:
          layer.conv1 = ConvWeights<Scalar>::transposed(channels, l.channels, l.kernel);
          channels = l.channels;
          break;
        case LayerKind::residual_block:
          if (channels != l.channels) throw ShapeError("residual_block: channel mismatch in layer table");
          layer.conv1 = ConvWeights<Scalar>::conv(channels, channels, l.kernel, sn);
          layer.conv2 = ConvWeights<Scalar>::conv(channels, channels, l.kernel, sn);
          break;
        case LayerKind::subpixel_block:
          layer.conv1 = ConvWeights<Scalar>::conv(channels, l.channels, l.kernel, sn);
          channels = l.channels / (l.factor * l.factor);
          break;
        case LayerKind::self_attention:
          if (channels != l.channels) throw ShapeError("self_attention: channel mismatch in layer table");
          layer.attention = AttentionParams<Scalar>::zeros(channels);
          break;
        case LayerKind::global_avg_pool:
          break;
      }
      if (l.norm == NormKind::instance && options_.instance_affine && l.kind != LayerKind::self_attention) {
        const int c = l.kind == LayerKind::residual_block ? l.channels : channels;
        layer.gain = Var<Scalar>(Tensor<Scalar>::constant(Shape{c, 1, 1}, Scalar(1)), true);
        layer.shift = Var<Scalar>(Tensor<Scalar>(c, 1, 1), true);
        if (l.kind == LayerKind::residual_block) {
          layer.gain2 = Var<Scalar>(Tensor<Scalar>::constant(Shape{c, 1, 1}, Scalar(1)), true);
          layer.shift2 = Var<Scalar>(Tensor<Scalar>(c, 1, 1), true);
        }
      }
      layers_.push_back(std::move(layer));
    }
    out_channels_ = channels;
  }

  const NetworkSpec& spec() const { return spec_; }
  const NetworkOptions& options() const { return options_; }
  int out_channels() const { return out_channels_; }

  bool training() const { return training_; }
  void set_training(bool flag) { training_ = flag; }

  /// Zero-mean Gaussian weights (std from options), zero biases, unit norm gains,
  /// zero attention gates, random power-iteration vectors.
  template <typename Rng>
  void initialize(Rng& rng) {
    std::normal_distribution<double> normal(0.0, options_.init_stddev);
    auto fill = [&](Var<Scalar>& v) {
      auto flat = v.mutable_value().flat();
      for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = static_cast<Scalar>(normal(rng));
    };
    auto zero = [](Var<Scalar>& v) {
      if (v.defined()) v.mutable_value().matrix().setZero();
    };
    for (auto& layer : layers_) {
      for (ConvWeights<Scalar>* c : {&layer.conv1, &layer.conv2}) {
        if (!c->weight.defined()) continue;
        fill(c->weight);
        zero(c->bias);
        if (c->spectral)
          init_power_iteration(c->power, c->weight.value().matrix().rows(), c->weight.value().matrix().cols(), rng);
      }
      if (layer.spec.kind == LayerKind::self_attention) {
        auto& a = layer.attention;
        fill(a.query_weight);
        fill(a.key_weight);
        fill(a.value_weight);
        zero(a.query_bias);
        zero(a.key_bias);
        zero(a.value_bias);
        zero(a.gamma);
        if (layer.spec.norm == NormKind::spectral)
          for (auto* w : {&a.query_weight, &a.key_weight, &a.value_weight}) {
            auto& st = layer.attention_power[attention_slot(a, w)];
            init_power_iteration(st, w->value().matrix().rows(), w->value().matrix().cols(), rng);
          }
      }
    }
  }

  /// Runs the table. If `trace` is given it receives each layer's output shape.
  Var<Scalar> forward(const Var<Scalar>& x, std::vector<Shape>* trace = nullptr) {
    if (x.shape().channels != spec_.in_channels)
      throw ShapeError(spec_.name + ": expects " + std::to_string(spec_.in_channels) + " input channels, got " +
                       std::to_string(x.shape().channels));
    Var<Scalar> h = x;
    for (auto& layer : layers_) {
      h = run(layer, h);
      if (trace) trace->push_back(h.shape());
    }
    return h;
  }

  /// Eval-mode forward without graph construction.
  Tensor<Scalar> infer(const Tensor<Scalar>& x) {
    autograd::NoGradGuard guard;
    const bool was_training = training_;
    training_ = false;
    Tensor<Scalar> out;
    try {
      out = forward(Var<Scalar>(x)).value();
    } catch (...) {
      training_ = was_training;
      throw;
    }
    training_ = was_training;
    return out;
  }

  std::vector<NamedParameter<Scalar>> parameters() {
    std::vector<NamedParameter<Scalar>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      auto& layer = layers_[i];
      const std::string prefix = "layer" + std::to_string(i) + ".";
      auto push = [&](const std::string& name, Var<Scalar>& v) {
        if (v.defined()) out.push_back({prefix + name, v});
      };
      push("conv1.weight", layer.conv1.weight);
      push("conv1.bias", layer.conv1.bias);
      push("conv2.weight", layer.conv2.weight);
      push("conv2.bias", layer.conv2.bias);
      push("norm1.gain", layer.gain);
      push("norm1.shift", layer.shift);
      push("norm2.gain", layer.gain2);
      push("norm2.shift", layer.shift2);
      if (layer.spec.kind == LayerKind::self_attention) {
        auto& a = layer.attention;
        push("attention.query.weight", a.query_weight);
        push("attention.query.bias", a.query_bias);
        push("attention.key.weight", a.key_weight);
        push("attention.key.bias", a.key_bias);
        push("attention.value.weight", a.value_weight);
        push("attention.value.bias", a.value_bias);
        push("attention.gamma", a.gamma);
      }
    }
    return out;
  }

  std::vector<NamedNormState<Scalar>> norm_states() {
    std::vector<NamedNormState<Scalar>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      auto& layer = layers_[i];
      const std::string prefix = "layer" + std::to_string(i) + ".";
      if (layer.conv1.spectral) out.push_back({prefix + "conv1.power", &layer.conv1.power});
      if (layer.conv2.spectral) out.push_back({prefix + "conv2.power", &layer.conv2.power});
      if (layer.spec.kind == LayerKind::self_attention && layer.spec.norm == NormKind::spectral) {
        out.push_back({prefix + "attention.query.power", &layer.attention_power[0]});
        out.push_back({prefix + "attention.key.power", &layer.attention_power[1]});
        out.push_back({prefix + "attention.value.power", &layer.attention_power[2]});
      }
    }
    return out;
  }

  /// Attention parameters of every self-attention layer, in table order.
  std::vector<AttentionParams<Scalar>*> attention_layers() {
    std::vector<AttentionParams<Scalar>*> out;
    for (auto& layer : layers_)
      if (layer.spec.kind == LayerKind::self_attention) out.push_back(&layer.attention);
    return out;
  }

  void set_requires_grad(bool flag) {
    for (auto& p : parameters()) p.var.set_requires_grad(flag);
  }
  void zero_grad() {
    for (auto& p : parameters()) p.var.zero_grad();
  }

 private:
  struct Layer {
    LayerSpec spec;
    ConvWeights<Scalar> conv1, conv2;
    Var<Scalar> gain, shift, gain2, shift2;
    AttentionParams<Scalar> attention;
    PowerIterationState<Scalar> attention_power[3];
  };

  static int attention_slot(const AttentionParams<Scalar>& a, const Var<Scalar>* w) {
    if (w == &a.query_weight) return 0;
    if (w == &a.key_weight) return 1;
    return 2;
  }

  Var<Scalar> norm(const Var<Scalar>& h, const Var<Scalar>& gain, const Var<Scalar>& shift, NormKind kind) const {
    if (kind != NormKind::instance) return h;
    return gain.defined() ? instance_norm(h, gain, shift) : instance_norm(h);
  }

  Var<Scalar> activate(const Var<Scalar>& h, Activation act) const {
    switch (act) {
      case Activation::relu: return relu(h);
      case Activation::leaky_relu: return leaky_relu(h, static_cast<Scalar>(options_.leaky_slope));
      case Activation::tanh: return floragan::tanh(h);
      case Activation::none: return h;
    }
    return h;
  }

  Var<Scalar> run(Layer& layer, const Var<Scalar>& x) {
    const LayerSpec& l = layer.spec;
    const int iters = options_.power_iterations;
    switch (l.kind) {
      case LayerKind::conv: {
        auto w = layer.conv1.effective_weight(training_, iters);
        auto h = conv2d(x, w, layer.conv1.bias, l.kernel, l.stride, l.pad);
        return activate(norm(h, layer.gain, layer.shift, l.norm), l.activation);
      }
      case LayerKind::transposed_conv: {
        auto h = conv_transpose2d(x, layer.conv1.weight, layer.conv1.bias, l.kernel, l.stride, l.pad,
                                  l.output_padding);
        return activate(norm(h, layer.gain, layer.shift, l.norm), l.activation);
      }
      case LayerKind::residual_block: {
        if (x.shape().channels != l.channels)
          throw ShapeError("residual_block: input has " + std::to_string(x.shape().channels) + " channels");
        auto w1 = layer.conv1.effective_weight(training_, iters);
        auto w2 = layer.conv2.effective_weight(training_, iters);
        auto h = conv2d(x, w1, layer.conv1.bias, l.kernel, l.stride, l.pad);
        h = activate(norm(h, layer.gain, layer.shift, l.norm), l.activation);
        h = norm(conv2d(h, w2, layer.conv2.bias, l.kernel, l.stride, l.pad), layer.gain2, layer.shift2, l.norm);
        if (h.shape() != x.shape()) throw ShapeError("residual_block: K/S/P do not preserve the input shape");
        return add(x, h);
      }
      case LayerKind::subpixel_block: {
        auto w = layer.conv1.effective_weight(training_, iters);
        auto h = pixel_shuffle(conv2d(x, w, layer.conv1.bias, l.kernel, l.stride, l.pad), l.factor);
        return activate(norm(h, layer.gain, layer.shift, l.norm), l.activation);
      }
      case LayerKind::self_attention: {
        auto& a = layer.attention;
        AttentionWeights<Scalar> w{a.query_weight, a.key_weight, a.value_weight};
        if (l.norm == NormKind::spectral) {
          w.query = spectral_normalized(a.query_weight, layer.attention_power[0], iters, training_);
          w.key = spectral_normalized(a.key_weight, layer.attention_power[1], iters, training_);
          w.value = spectral_normalized(a.value_weight, layer.attention_power[2], iters, training_);
        }
        return self_attention(x, a, w);
      }
      case LayerKind::global_avg_pool:
        return spatial_mean(x);
    }
    return x;
  }

  NetworkSpec spec_;
  NetworkOptions options_;
  std::vector<Layer> layers_;
  int out_channels_ = 0;
  bool training_ = true;
};

/// Generator forward on a normalized 3-channel image whose sides are multiples of 4.
template <typename Scalar>
Image<Scalar> generator_forward(Network<Scalar>& generator, const Image<Scalar>& x) {
  const Shape s = x.shape();
  if (s.channels != 3) throw ShapeError("generator input must have 3 channels, got " + std::to_string(s.channels));
  if (s.height % 4 != 0 || s.width % 4 != 0 || s.height < 4 || s.width < 4)
    throw ShapeError("generator input sides must be positive multiples of 4, got " + to_string(s));
  return {generator.infer(x.pixels), ValueRange::normalized};
}

/// Patch map of realness scores for a 3-channel normalized image.
template <typename Scalar>
Tensor<Scalar> discriminator_forward(Network<Scalar>& discriminator, const Image<Scalar>& x) {
  if (x.shape().channels != 3)
    throw ShapeError("discriminator input must have 3 channels, got " + std::to_string(x.shape().channels));
  return discriminator.infer(x.pixels);
}

}  // namespace floragan
