#include "natgrad/numerics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "natgrad/errors.hpp"

namespace natgrad {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& word : s_) word = splitmix64(x);
}

std::uint64_t Rng::next_u64() {
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

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (cached_normal_) {
    const double z = *cached_normal_;
    cached_normal_.reset();
    return z;
  }
  // 1 - u lies in (0, 1], keeping the log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_normal_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

Rng Rng::split(std::uint64_t index) const {
  std::uint64_t x = seed_ ^ 0x6a09e667f3bcc909ULL;
  std::uint64_t mixed = splitmix64(x);
  x = mixed + index * 0xd1b54a32d192ed03ULL;
  return Rng(splitmix64(x));
}

Vec gaussian_sample(Rng& rng, std::span<const double> mean, std::span<const double> std) {
  if (mean.size() != std.size()) {
    throw ContractViolation("gaussian_sample: mean has " + std::to_string(mean.size()) +
                            " entries but std has " + std::to_string(std.size()));
  }
  Vec out(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    if (!(std[i] >= 0.0)) throw ContractViolation("gaussian_sample: std must be nonnegative");
    out[i] = mean[i] + std[i] * rng.normal();
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void matvec(const Matrix& m, std::span<const double> x, std::span<double> out) {
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), x);
}

bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

Vec cholesky_solve(Matrix a, std::span<const double> b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) throw ContractViolation("cholesky_solve: shape mismatch");
  // In-place lower factor.
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw NumericalFailure("cholesky_solve: matrix is not positive definite at pivot " + std::to_string(j),
                             static_cast<long>(j));
    }
    const double l = std::sqrt(d);
    a(j, j) = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / l;
    }
  }
  Vec y(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) y[i] -= a(i, k) * y[k];
    y[i] /= a(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    for (std::size_t k = ii + 1; k < n; ++k) y[ii] -= a(k, ii) * y[k];
    y[ii] /= a(ii, ii);
  }
  return y;
}

void CgSettings::validate() const {
  if (max_iterations < 1) throw ContractViolation("cg: max_iterations must be positive");
  if (!(residual_tolerance > 0.0)) throw ContractViolation("cg: residual_tolerance must be positive");
  if (!(damping >= 0.0)) throw ContractViolation("cg: damping must be nonnegative");
}

CgResult cg_solve(const LinearOperator& apply_a, std::span<const double> b, const CgSettings& settings) {
  settings.validate();
  const std::size_t n = b.size();
  CgResult result;
  result.solution.assign(n, 0.0);
  if (!all_finite(b)) throw NumericalFailure("cg_solve: right-hand side is not finite", 0);

  const double b_norm = norm(b);
  if (b_norm == 0.0) {
    result.converged = true;
    return result;
  }
  const double target = settings.residual_tolerance * b_norm;

  Vec r(b.begin(), b.end());
  Vec p = r;
  Vec ap(n);
  double rr = dot(r, r);
  Vec& x = result.solution;

  for (int it = 1; it <= settings.max_iterations; ++it) {
    apply_a(p, ap);
    if (settings.damping != 0.0) axpy(settings.damping, p, ap);
    const double pap = dot(p, ap);
    const double alpha = rr / pap;
    if (!std::isfinite(alpha) || !(pap > 0.0)) {
      throw NumericalFailure("cg_solve: curvature p'Ap = " + std::to_string(pap) + " is not positive and finite",
                             it);
    }
    axpy(alpha, p, x);
    axpy(-alpha, ap, r);
    const double rr_next = dot(r, r);
    if (!std::isfinite(rr_next)) throw NumericalFailure("cg_solve: residual became non-finite", it);
    result.iterations = it;
    result.residual_norm = std::sqrt(rr_next);
    if (result.residual_norm <= target) {
      result.converged = true;
      break;
    }
    const double beta = rr_next / rr;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rr = rr_next;
  }
  return result;
}

}  // namespace natgrad
