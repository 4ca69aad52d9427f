#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "ssimadv/image.hpp"

namespace ssimadv {

/// Stabilization constants of the similarity index. The two-factor form
/// S1*S2 absorbs the structure constant as c2/2, so only c1 and c2 are kept;
/// all exponents are fixed to 1.
template <typename Scalar>
struct SsimParams {
  Scalar range;
  Scalar c1;
  Scalar c2;
  static constexpr Scalar alpha = 1;
  static constexpr Scalar xi = 1;
  static constexpr Scalar gamma = 1;

  explicit SsimParams(Scalar value_range = Scalar(1))
      : range(value_range),
        c1(Scalar(0.01) * value_range * (Scalar(0.01) * value_range)),
        c2(Scalar(0.03) * value_range * (Scalar(0.03) * value_range)) {
    if (!(range > Scalar(0)))
      throw std::invalid_argument("SsimParams: range must be positive");
  }
};

/// Population statistics of one channel; covariance is present when the
/// stats were computed against a second image.
template <typename Scalar>
struct ImageStats {
  Scalar mean = 0;
  Scalar variance = 0;
  std::optional<Scalar> covariance;
};

/// Lower bounds demanded of the mean term S1 and the structure term S2.
template <typename Scalar>
struct ConstraintThresholds {
  Scalar zeta1 = Scalar(0.9);
  Scalar zeta2 = Scalar(0.9);

  void validate() const {
    if (!(zeta1 >= 0 && zeta1 <= 1 && zeta2 >= 0 && zeta2 <= 1))
      throw std::invalid_argument("ConstraintThresholds: zeta1/zeta2 must lie in [0,1]");
  }
};

template <typename Derived>
typename Derived::Scalar channel_mean(const Eigen::ArrayBase<Derived>& x) {
  return x.mean();
}

/// Population statistics over one channel's pixels.
template <typename Derived>
ImageStats<typename Derived::Scalar> vector_stats(const Eigen::ArrayBase<Derived>& x) {
  using S = typename Derived::Scalar;
  if (x.size() == 0) throw std::invalid_argument("vector_stats: empty input");
  ImageStats<S> st;
  st.mean = x.mean();
  st.variance = (x - st.mean).square().sum() / S(x.size());
  return st;
}

template <typename D1, typename D2>
ImageStats<typename D1::Scalar> vector_stats(const Eigen::ArrayBase<D1>& x,
                                             const Eigen::ArrayBase<D2>& y) {
  using S = typename D1::Scalar;
  if (x.size() != y.size())
    throw std::invalid_argument("vector_stats: length mismatch");
  ImageStats<S> st = vector_stats(x);
  st.covariance = ((x - st.mean) * (y - y.mean())).sum() / S(x.size());
  return st;
}

/// Statistics of one channel of an image, optionally paired with the same
/// channel of a second image for the covariance.
template <typename Scalar>
ImageStats<Scalar> image_stats(const Image<Scalar>& x, int channel = 0) {
  if (x.empty()) throw std::invalid_argument("image_stats: empty image");
  return vector_stats(x.channel(channel));
}

template <typename Scalar>
ImageStats<Scalar> image_stats(const Image<Scalar>& x, const Image<Scalar>& y,
                               int channel = 0) {
  require_same_shape(x, y, "image_stats");
  return vector_stats(x.channel(channel), y.channel(channel));
}

/// Normalized mean squared error |u-v|^2 / (|u|^2 + |v|^2 + C).
/// Quasi-convex in u on the half-space <u,v> >= -C/2.
template <typename D1, typename D2>
typename D1::Scalar nmse(const Eigen::ArrayBase<D1>& u, const Eigen::ArrayBase<D2>& v,
                         typename D1::Scalar C) {
  using S = typename D1::Scalar;
  if (u.size() != v.size()) throw std::invalid_argument("nmse: length mismatch");
  if (C < S(0)) throw std::invalid_argument("nmse: C must be nonnegative");
  return (u - v).square().sum() / (u.square().sum() + v.square().sum() + C);
}

namespace detail {

template <typename Scalar>
struct ChannelTerms {
  Scalar s1, s2;          // mean and structure comparison factors
  Scalar mu_x, mu_y;
  Scalar var_x, var_y, cov;
};

template <typename Scalar>
ChannelTerms<Scalar> channel_terms(const Image<Scalar>& x, const Image<Scalar>& y,
                                   const SsimParams<Scalar>& p, int c) {
  ChannelTerms<Scalar> t;
  auto xc = x.channel(c);
  auto yc = y.channel(c);
  t.mu_x = xc.mean();
  t.mu_y = yc.mean();
  const Scalar n = Scalar(xc.size());
  t.var_x = (xc - t.mu_x).square().sum() / n;
  t.var_y = (yc - t.mu_y).square().sum() / n;
  t.cov = ((xc - t.mu_x) * (yc - t.mu_y)).sum() / n;
  t.s1 = (Scalar(2) * (t.mu_x * t.mu_y) + p.c1) / (t.mu_x * t.mu_x + t.mu_y * t.mu_y + p.c1);
  t.s2 = (Scalar(2) * t.cov + p.c2) / (t.var_x + t.var_y + p.c2);
  return t;
}

}  // namespace detail

/// Whole-image structural similarity: S1*S2 per channel from global channel
/// statistics, averaged over channels. Lies in (-1, 1] for pixels in
/// [0, range]; equals 1 exactly when x == y.
template <typename Scalar>
Scalar ssim(const Image<Scalar>& x, const Image<Scalar>& y,
            const SsimParams<Scalar>& p = SsimParams<Scalar>()) {
  require_same_shape(x, y, "ssim");
  Scalar total = 0;
  for (int c = 0; c < x.shape.channels; ++c) {
    auto t = detail::channel_terms(x, y, p, c);
    total += t.s1 * t.s2;
  }
  return total / Scalar(x.shape.channels);
}

template <typename Scalar>
using ConstraintValues = Eigen::Array<Scalar, 4, 1>;

/// The four inequality constraints, nonpositive when satisfied:
///   g1 = zeta1 - S1 (as 1 - scalar NMSE of the means),
///   g2 = zeta2 - S2 (as 1 - NMSE of the centered images),
///   g3 = -2 mu_x mu_y - c1   (membership in the mean half-space),
///   g4 = -2 <x - mu_x, y - mu_y> - c2  (membership in the structure half-space).
/// y is the candidate image, x the original; channels are averaged.
template <typename Scalar>
ConstraintValues<Scalar> constraints(const Image<Scalar>& y, const Image<Scalar>& x,
                                     const SsimParams<Scalar>& p,
                                     const ConstraintThresholds<Scalar>& t) {
  require_same_shape(y, x, "constraints");
  ConstraintValues<Scalar> g = ConstraintValues<Scalar>::Zero();
  for (int c = 0; c < x.shape.channels; ++c) {
    auto xc = x.channel(c);
    auto yc = y.channel(c);
    const Scalar mu_x = xc.mean();
    const Scalar mu_y = yc.mean();
    const ArrX<Scalar> cx = xc - mu_x;
    const ArrX<Scalar> cy = yc - mu_y;
    const Scalar d_mu = mu_x - mu_y;
    g[0] += t.zeta1 - (Scalar(1) - d_mu * d_mu / (mu_x * mu_x + mu_y * mu_y + p.c1));
    g[1] += t.zeta2 - (Scalar(1) - (cx - cy).square().sum() /
                                       (cx.square().sum() + cy.square().sum() + p.c2));
    g[2] += -Scalar(2) * mu_x * mu_y - p.c1;
    g[3] += -Scalar(2) * (cx * cy).sum() - p.c2;
  }
  return g / Scalar(x.shape.channels);
}

/// Analytic gradients of g1..g4 with respect to the candidate image y,
/// one column per constraint.
template <typename Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 4> constraint_gradients(
    const Image<Scalar>& y, const Image<Scalar>& x, const SsimParams<Scalar>& p,
    const ConstraintThresholds<Scalar>& /*t*/) {
  require_same_shape(y, x, "constraint_gradients");
  const int n = x.shape.pixels_per_channel();
  const Scalar inv_ch = Scalar(1) / Scalar(x.shape.channels);
  Eigen::Array<Scalar, Eigen::Dynamic, 4> grads(x.size(), 4);
  for (int c = 0; c < x.shape.channels; ++c) {
    auto xc = x.channel(c);
    auto yc = y.channel(c);
    const Scalar mu_x = xc.mean();
    const Scalar mu_y = yc.mean();
    const ArrX<Scalar> u = xc - mu_x;  // centered original
    const ArrX<Scalar> w = yc - mu_y;  // centered candidate

    // g1 depends on y only through mu_y; d mu_y / d y_j = 1/n.
    const Scalar num1 = (mu_x - mu_y) * (mu_x - mu_y);
    const Scalar den1 = mu_x * mu_x + mu_y * mu_y + p.c1;
    const Scalar dg1_dmu =
        (-Scalar(2) * (mu_x - mu_y) * den1 - num1 * Scalar(2) * mu_y) / (den1 * den1);

    // Centering projects out the mean direction; since u and w are already
    // centered the projection terms vanish.
    const Scalar num2 = (u - w).square().sum();
    const Scalar den2 = u.square().sum() + w.square().sum() + p.c2;

    const int lo = c * n;
    grads.col(0).segment(lo, n) = ArrX<Scalar>::Constant(n, dg1_dmu / Scalar(n) * inv_ch);
    grads.col(1).segment(lo, n) =
        (Scalar(2) * (w - u) * den2 - num2 * Scalar(2) * w) / (den2 * den2) * inv_ch;
    grads.col(2).segment(lo, n) =
        ArrX<Scalar>::Constant(n, -Scalar(2) * mu_x / Scalar(n) * inv_ch);
    grads.col(3).segment(lo, n) = -Scalar(2) * u * inv_ch;
  }
  return grads;
}

enum class LpNorm { l1, l2, linf };

/// Vector norm of a flattened perturbation.
template <typename Derived>
typename Derived::Scalar lp_distortion(const Eigen::ArrayBase<Derived>& delta, LpNorm p) {
  using S = typename Derived::Scalar;
  if (delta.size() == 0) return S(0);
  switch (p) {
    case LpNorm::l1: return delta.abs().sum();
    case LpNorm::l2: return std::sqrt(delta.square().sum());
    case LpNorm::linf: return delta.abs().maxCoeff();
  }
  return S(0);
}

}  // namespace ssimadv
