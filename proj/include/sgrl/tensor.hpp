#pragma once

// Dense row-major matrices, a seeded PRNG and the Adam optimizer.
// Everything numeric in the library is built from these three pieces.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sgrl/error.hpp"

namespace sgrl {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      require(row.size() == cols_, "Matrix: ragged initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix row_vector(std::span<const double> values) {
    Matrix m(1, values.size());
    std::copy(values.begin(), values.end(), m.data_.begin());
    return m;
  }
  static Matrix column_vector(std::span<const double> values) {
    Matrix m(values.size(), 1);
    std::copy(values.begin(), values.end(), m.data_.begin());
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Matrix& operator+=(const Matrix& o) {
    require(same_shape(o), "Matrix +=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    require(same_shape(o), "Matrix -=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Matrix& operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
inline Matrix operator*(Matrix a, double s) { return a *= s; }
inline Matrix operator*(double s, Matrix a) { return a *= s; }

namespace detail {
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
inline Eigen::Map<RowMajor> view(Matrix& m) {
  return {m.data(), Eigen::Index(m.rows()), Eigen::Index(m.cols())};
}
inline Eigen::Map<const RowMajor> view(const Matrix& m) {
  return {m.data(), Eigen::Index(m.rows()), Eigen::Index(m.cols())};
}
}  // namespace detail

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ContractViolation("matmul: a.cols != b.rows (" + std::to_string(a.cols()) + " vs " +
                            std::to_string(b.rows()) + ")");
  Matrix out(a.rows(), b.cols());
  if (a.cols() > 0) detail::view(out).noalias() = detail::view(a) * detail::view(b);
  return out;
}

// a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt: a.cols != b.cols");
  Matrix out(a.rows(), b.rows());
  if (a.cols() > 0) detail::view(out).noalias() = detail::view(a) * detail::view(b).transpose();
  return out;
}

// a^T * b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn: a.rows != b.rows");
  Matrix out(a.cols(), b.cols());
  if (a.rows() > 0) detail::view(out).noalias() = detail::view(a).transpose() * detail::view(b);
  return out;
}

// out += a^T * b, the usual weight-gradient accumulation.
inline void accumulate_tn(Matrix& out, const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && out.rows() == a.cols() && out.cols() == b.cols(),
          "accumulate_tn: shape mismatch");
  if (a.rows() > 0) detail::view(out).noalias() += detail::view(a).transpose() * detail::view(b);
}

inline Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  return out;
}

// Adds the column vector `bias` (n x 1) to every row of `m` (batch x n).
inline void add_bias_rows(Matrix& m, const Matrix& bias) {
  require(bias.cols() == 1 && bias.rows() == m.cols(), "add_bias_rows: bias must be cols x 1");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

// Column sums of a batch x n matrix, returned as n x 1.
inline Matrix column_sums(const Matrix& m) {
  Matrix out(m.cols(), 1);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c];
  }
  return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "hadamard: shape mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

inline double max_abs(const Matrix& m) {
  double best = 0.0;
  for (double x : m.values()) best = std::max(best, std::abs(x));
  return best;
}

inline bool all_finite(const Matrix& m) {
  return std::all_of(m.values().begin(), m.values().end(), [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------
// Rng: xoshiro256** seeded through splitmix64. Bit-for-bit reproducible on
// every platform because no std:: distribution is involved.

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : s_) word = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), rejection-sampled so there is no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    require(n > 0, "Rng::below: n must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Independent child stream for a sub-component.
  Rng split() { return Rng(next_u64() ^ 0x9E3779B97F4A7C15ULL); }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t s_[4]{};
};

// Box-Muller; one normal per call, two uniforms consumed.
inline double gauss(Rng& rng, double mean, double stddev) {
  require(stddev >= 0.0, "gauss: negative standard deviation");
  const double u1 = 1.0 - rng.uniform();  // (0, 1]
  const double u2 = rng.uniform();
  const double n = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return mean + stddev * n;
}

inline Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (double& x : m.values()) x = rng.uniform(lo, hi);
  return m;
}

// ---------------------------------------------------------------------------
// Adam with bias correction. One AdamState covers a parameter group: one
// moment pair per parameter and a single shared step counter.

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(AdamConfig cfg, std::span<const Matrix* const> params) : config(cfg) {
    for (const Matrix* p : params) {
      first_moment.emplace_back(p->rows(), p->cols());
      second_moment.emplace_back(p->rows(), p->cols());
    }
  }
  AdamState(AdamConfig cfg, const Matrix& param) : config(cfg) {
    first_moment.emplace_back(param.rows(), param.cols());
    second_moment.emplace_back(param.rows(), param.cols());
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

namespace detail {
inline void adam_update_one(const AdamConfig& cfg, std::uint64_t step, Matrix& m, Matrix& v,
                            Matrix& param, const Matrix& grad) {
  require(param.same_shape(grad) && param.same_shape(m) && param.same_shape(v),
          "adam_step: parameter, gradient and moment shapes differ");
  const double c1 = 1.0 - std::pow(cfg.beta1, double(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(step));
  // Units with zero gradient (dead ReLUs) decay their moments into subnormals,
  // which are very slow on x86 and too small to move any weight. Flush them.
  const double tiny = std::numeric_limits<double>::min();
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    m[i] = std::abs(mi) < tiny ? 0.0 : mi;
    v[i] = vi < tiny ? 0.0 : vi;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}
}  // namespace detail

// In-place group update; advances the step counter once.
inline void adam_step(AdamState& state, std::span<Matrix* const> params,
                      std::span<const Matrix* const> grads) {
  require(params.size() == grads.size() && params.size() == state.first_moment.size(),
          "adam_step: parameter group size mismatch");
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i)
    detail::adam_update_one(state.config, state.step, state.first_moment[i],
                            state.second_moment[i], *params[i], *grads[i]);
}

// Single-parameter form: returns the updated parameter.
inline Matrix adam_step(AdamState& state, const Matrix& param, const Matrix& grad) {
  require(state.first_moment.size() == 1, "adam_step: state is not a single-parameter state");
  Matrix out = param;
  ++state.step;
  detail::adam_update_one(state.config, state.step, state.first_moment[0], state.second_moment[0],
                          out, grad);
  return out;
}

}  // namespace sgrl
