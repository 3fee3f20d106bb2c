#pragma once

// Surrogate derivatives for the spike threshold. The forward pass always
// uses a hard step; these functions stand in for its derivative during
// backpropagation. All three shapes are trapezoids: rectangular is the
// w1 == w2 case and triangular the w1 == 0 case. Heights are fixed by
// requiring unit area.

#include <cmath>
#include <string>
#include <string_view>

#include "sgrl/error.hpp"

namespace sgrl {

enum class SurrogateKind { rectangular, triangular, trapezoidal };

inline std::string_view to_string(SurrogateKind kind) {
  switch (kind) {
    case SurrogateKind::rectangular: return "rect";
    case SurrogateKind::triangular: return "tri";
    case SurrogateKind::trapezoidal: return "trap";
  }
  return "?";
}

inline SurrogateKind parse_surrogate_kind(std::string_view name) {
  if (name == "rect" || name == "rectangular") return SurrogateKind::rectangular;
  if (name == "tri" || name == "triangular") return SurrogateKind::triangular;
  if (name == "trap" || name == "trapezoidal") return SurrogateKind::trapezoidal;
  throw ValidationError("surrogate", "unknown surrogate kind '" + std::string(name) + "'");
}

struct SurrogateSpec {
  SurrogateKind kind = SurrogateKind::trapezoidal;
  double w1 = 0.25;  // plateau half-width
  double w2 = 0.75;  // support half-width
  double vth = 0.5;
  double h = 1.0;    // derived, never set directly

  friend bool operator==(const SurrogateSpec&, const SurrogateSpec&) = default;
};

namespace detail {
inline void validate_widths(double w1, double w2, double vth) {
  if (!std::isfinite(w1) || !std::isfinite(w2) || !std::isfinite(vth))
    throw ValidationError("surrogate", "parameters must be finite");
  if (!(w2 > 0.0)) throw ValidationError("surrogate_w2", "support half-width must be > 0");
  if (!(w1 >= 0.0 && w1 <= w2))
    throw ValidationError("surrogate_w1", "plateau half-width must satisfy 0 <= w1 <= w2");
}
}  // namespace detail

inline SurrogateSpec make_trapezoidal(double w1, double w2, double vth = 0.5) {
  detail::validate_widths(w1, w2, vth);
  return {SurrogateKind::trapezoidal, w1, w2, vth, 1.0 / (w1 + w2)};
}

inline SurrogateSpec make_rectangular(double half_width, double vth = 0.5) {
  detail::validate_widths(half_width, half_width, vth);
  return {SurrogateKind::rectangular, half_width, half_width, vth,
          1.0 / (half_width + half_width)};
}

inline SurrogateSpec make_triangular(double half_width, double vth = 0.5) {
  detail::validate_widths(0.0, half_width, vth);
  return {SurrogateKind::triangular, 0.0, half_width, vth, 1.0 / (0.0 + half_width)};
}

// Builds a spec of the given kind from shared width settings: rectangular and
// triangular use w2 as their half-width and ignore w1.
inline SurrogateSpec make_surrogate(SurrogateKind kind, double w1, double w2, double vth) {
  switch (kind) {
    case SurrogateKind::rectangular: return make_rectangular(w2, vth);
    case SurrogateKind::triangular: return make_triangular(w2, vth);
    case SurrogateKind::trapezoidal: return make_trapezoidal(w1, w2, vth);
  }
  throw ContractViolation("make_surrogate: bad kind");
}

inline double surrogate_grad(const SurrogateSpec& spec, double v) {
  require(std::isfinite(v), "surrogate_grad: non-finite membrane potential");
  const double d = std::abs(v - spec.vth);
  if (d < spec.w1) return spec.h;
  if (d < spec.w2) return spec.h * (1.0 - (d - spec.w1) / (spec.w2 - spec.w1));
  return 0.0;
}

// surrogate_grad over a block, branch-free so it vectorizes; same arithmetic
// as the scalar form, so results agree bit for bit.
inline void surrogate_grad_block(const SurrogateSpec& spec, const double* __restrict v, double* __restrict out,
                                 std::size_t count) {
  const double vth = spec.vth, w1 = spec.w1, w2 = spec.w2, h = spec.h;
  const double span = w2 > w1 ? w2 - w1 : 1.0;  // unused when the ramps are empty
  std::size_t bad = 0;
  for (std::size_t i = 0; i < count; ++i) {
    bad += (v[i] - v[i]) != 0.0;
    const double d = std::abs(v[i] - vth);
    const double ramp = h * (1.0 - (d - w1) / span);
    const double inner = d < w1 ? h : ramp;  // w1 <= w2, so this is inside the support
    out[i] = d < w2 ? inner : 0.0;
  }
  require(bad == 0, "surrogate_grad: non-finite membrane potential");
}

// Antiderivative of surrogate_grad, normalised to run from 0 to 1.
inline double smoothed_step(const SurrogateSpec& spec, double v) {
  require(std::isfinite(v), "smoothed_step: non-finite membrane potential");
  const double delta = v - spec.vth;
  const double d = std::abs(delta);
  double half;
  if (d < spec.w1) {
    half = spec.h * d;
  } else if (d < spec.w2) {
    const double r = d - spec.w1;
    half = spec.h * (spec.w1 + r - r * r / (2.0 * (spec.w2 - spec.w1)));
  } else {
    half = 0.5;
  }
  return delta < 0.0 ? 0.5 - half : 0.5 + half;
}

}  // namespace sgrl
