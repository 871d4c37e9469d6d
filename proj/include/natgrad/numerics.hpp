#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace natgrad {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

/// xoshiro256** generator seeded through splitmix64.
///
/// The stream is a pure function of the 64-bit seed. `split(i)` derives an
/// independent child stream from the parent's seed and the index only, so the
/// child does not depend on how much of the parent has been consumed.
/// Gaussian draws use Box-Muller and consume both outputs in order: the
/// cosine branch is returned first and the sine branch is cached for the
/// next call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 random mantissa bits.
  double uniform();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal draw.
  double normal();

  Rng split(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  std::optional<double> cached_normal_;
};

/// mean + std * z, z standard normal. Throws ContractViolation on a length
/// mismatch or a negative std entry.
Vec gaussian_sample(Rng& rng, std::span<const double> mean, std::span<const double> std);

// ---------------------------------------------------------------------------
// Dense linear algebra
// ---------------------------------------------------------------------------

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
/// out = m * x
void matvec(const Matrix& m, std::span<const double> x, std::span<double> out);
bool all_finite(std::span<const double> a);

/// Solves A x = b for symmetric positive definite A by Cholesky factorization.
/// Throws NumericalFailure when a pivot is not positive.
Vec cholesky_solve(Matrix a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Conjugate gradient
// ---------------------------------------------------------------------------

struct CgSettings {
  int max_iterations = 100;
  double residual_tolerance = 1e-10;  // relative to ||b||
  double damping = 1e-4;              // added to the operator's diagonal

  void validate() const;
};

struct CgResult {
  Vec solution;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// out = A * in. Must not alias.
using LinearOperator = std::function<void(std::span<const double> in, std::span<double> out)>;

/// Matrix-free conjugate gradient on (A + damping I) x = b, started from zero.
///
/// Stops when ||r|| <= residual_tolerance * ||b|| or after max_iterations.
/// The residual is tracked by the recurrence, not recomputed. Throws
/// NumericalFailure naming the iteration if a non-finite value appears.
CgResult cg_solve(const LinearOperator& apply_a, std::span<const double> b, const CgSettings& settings);

}  // namespace natgrad
