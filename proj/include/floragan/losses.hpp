#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <string_view>
#include <utility>

#include "floragan/autograd.hpp"
#include "floragan/ops.hpp"

namespace floragan {

enum class DomainTag { melanoma_X, flower_Y };

/// Combination weights of the generator objective.
struct LossWeights {
  double lambda_cycle = 10.0;
  double lambda_identity = 5.0;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

inline void validate(const LossWeights& w) {
  if (!std::isfinite(w.lambda_cycle) || !std::isfinite(w.lambda_identity) || w.lambda_cycle < 0 ||
      w.lambda_identity < 0)
    throw DomainError("loss weights must be finite and non-negative");
}

namespace detail {

template <typename Scalar>
void require_finite(const Tensor<Scalar>& t, std::string_view what) {
  if (!t.matrix().allFinite()) throw DomainError(std::string(what) + " contains NaN or Inf");
}

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, std::string_view what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shapes differ (" + to_string(a.shape()) + " vs " + to_string(b.shape()) +
                     ")");
}

template <typename Scalar>
Scalar count(const Tensor<Scalar>& t) {
  return static_cast<Scalar>(t.size());
}

}  // namespace detail

// --- Least-squares adversarial loss -----------------------------------------
// Discriminator: mean (D(real) - 1)^2 + mean D(fake)^2.
// Generator:     mean (D(fake) - 1)^2.
// Means over patch elements stand in for the expectations.

template <typename Scalar>
Scalar lsgan_discriminator_loss(const Tensor<Scalar>& d_real, const Tensor<Scalar>& d_fake) {
  detail::require_finite(d_real, "d_real");
  detail::require_finite(d_fake, "d_fake");
  if (d_real.empty() || d_fake.empty()) throw ShapeError("lsgan_discriminator_loss: empty patch map");
  return (d_real.matrix().array() - Scalar(1)).square().mean() + d_fake.matrix().array().square().mean();
}

/// Gradients with respect to (d_real, d_fake).
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> lsgan_discriminator_loss_grad(const Tensor<Scalar>& d_real,
                                                                        const Tensor<Scalar>& d_fake) {
  detail::require_finite(d_real, "d_real");
  detail::require_finite(d_fake, "d_fake");
  Tensor<Scalar> g_real(d_real.shape(), (d_real.matrix().array() - Scalar(1)).matrix() * (Scalar(2) / detail::count(d_real)));
  Tensor<Scalar> g_fake(d_fake.shape(), d_fake.matrix() * (Scalar(2) / detail::count(d_fake)));
  return {std::move(g_real), std::move(g_fake)};
}

template <typename Scalar>
Scalar lsgan_generator_loss(const Tensor<Scalar>& d_fake) {
  detail::require_finite(d_fake, "d_fake");
  if (d_fake.empty()) throw ShapeError("lsgan_generator_loss: empty patch map");
  return (d_fake.matrix().array() - Scalar(1)).square().mean();
}

template <typename Scalar>
Tensor<Scalar> lsgan_generator_loss_grad(const Tensor<Scalar>& d_fake) {
  detail::require_finite(d_fake, "d_fake");
  return Tensor<Scalar>(d_fake.shape(), (d_fake.matrix().array() - Scalar(1)).matrix() * (Scalar(2) / detail::count(d_fake)));
}

// --- Mean absolute error (cycle consistency and identity) -------------------

template <typename Scalar>
Scalar mean_absolute_error(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "mean_absolute_error");
  if (a.empty()) throw ShapeError("mean_absolute_error: empty tensors");
  return (a.matrix() - b.matrix()).cwiseAbs().mean();
}

/// Gradient with respect to `a` (the one for `b` is its negation); sign(0) = 0.
template <typename Scalar>
Tensor<Scalar> mean_absolute_error_grad(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "mean_absolute_error");
  const Scalar inv_n = Scalar(1) / detail::count(a);
  Tensor<Scalar> g(a.shape(), (a.matrix() - b.matrix()).unaryExpr([inv_n](Scalar d) {
    return d > Scalar(0) ? inv_n : (d < Scalar(0) ? -inv_n : Scalar(0));
  }));
  return g;
}

/// Cycle consistency: mean |x - F(G(x))|.
template <typename Scalar>
Scalar cycle_consistency_loss(const Tensor<Scalar>& x, const Tensor<Scalar>& reconstructed) {
  return mean_absolute_error(x, reconstructed);
}

/// Identity: mean |y - G(y)| for y already in G's target domain.
template <typename Scalar>
Scalar identity_loss(const Tensor<Scalar>& y, const Tensor<Scalar>& mapped) {
  return mean_absolute_error(y, mapped);
}

/// adv_G + adv_F + lambda_cycle (cyc_XYX + cyc_YXY) + lambda_identity (ide_G + ide_F).
template <typename Scalar>
Scalar total_generator_objective(Scalar adv_g, Scalar adv_f, Scalar cycle_xyx, Scalar cycle_yxy, Scalar identity_g,
                                 Scalar identity_f, const LossWeights& w) {
  validate(w);
  for (Scalar v : {adv_g, adv_f, cycle_xyx, cycle_yxy, identity_g, identity_f})
    if (!std::isfinite(static_cast<double>(v))) throw DomainError("generator objective term is not finite");
  return adv_g + adv_f + static_cast<Scalar>(w.lambda_cycle) * (cycle_xyx + cycle_yxy) +
         static_cast<Scalar>(w.lambda_identity) * (identity_g + identity_f);
}

// --- Differentiable forms ----------------------------------------------------

template <typename Scalar>
Var<Scalar> lsgan_discriminator_loss(const Var<Scalar>& d_real, const Var<Scalar>& d_fake) {
  Tensor<Scalar> value = Tensor<Scalar>::constant({1, 1, 1}, lsgan_discriminator_loss(d_real.value(), d_fake.value()));
  return autograd::make_result<Scalar>(std::move(value), {d_real, d_fake}, [](Node<Scalar>& self) {
    const Scalar up = self.grad(0, 0);
    auto [g_real, g_fake] = lsgan_discriminator_loss_grad(self.parent(0).value, self.parent(1).value);
    self.parent(0).accumulate(g_real.matrix() * up);
    self.parent(1).accumulate(g_fake.matrix() * up);
  });
}

template <typename Scalar>
Var<Scalar> lsgan_generator_loss(const Var<Scalar>& d_fake) {
  Tensor<Scalar> value = Tensor<Scalar>::constant({1, 1, 1}, lsgan_generator_loss(d_fake.value()));
  return autograd::make_result<Scalar>(std::move(value), {d_fake}, [](Node<Scalar>& self) {
    self.parent(0).accumulate(lsgan_generator_loss_grad(self.parent(0).value).matrix() * self.grad(0, 0));
  });
}

template <typename Scalar>
Var<Scalar> mean_absolute_error(const Var<Scalar>& a, const Var<Scalar>& b) {
  Tensor<Scalar> value = Tensor<Scalar>::constant({1, 1, 1}, mean_absolute_error(a.value(), b.value()));
  return autograd::make_result<Scalar>(std::move(value), {a, b}, [](Node<Scalar>& self) {
    const Matrix<Scalar> g = mean_absolute_error_grad(self.parent(0).value, self.parent(1).value).matrix() * self.grad(0, 0);
    self.parent(0).accumulate(g);
    self.parent(1).accumulate(-g);
  });
}

/// Appends line-delimited JSON records {"iteration", "epoch", "name", "value"}.
class LossLog {
 public:
  LossLog() = default;
  explicit LossLog(const std::string& path, bool append = false);

  void record(long iteration, int epoch, std::string_view name, double value);
  bool is_open() const { return out_.is_open(); }
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

struct LossRecord {
  long iteration = 0;
  int epoch = 0;
  std::string name;
  double value = 0;

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

std::vector<LossRecord> read_loss_log(const std::string& path);

}  // namespace floragan
