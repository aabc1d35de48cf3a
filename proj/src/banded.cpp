#include "rhflow/banded.hpp"

#include <cmath>
#include <stdexcept>

#include "rhflow/errors.hpp"

namespace rhflow {

CyclicBandedSolver::CyclicBandedSolver(int n, int p, std::span<const double> bands)
    : n_(n), p_(p) {
  const int w = 2 * p + 1;
  if (n < 2 * w || bands.size() != static_cast<std::size_t>(n) * w)
    throw std::invalid_argument("cyclic banded solver: bad dimensions");
  lu_.assign(bands.begin(), bands.end());
  for (int i = 0; i < p; ++i) corner_rows_.push_back(i);
  for (int i = n - p; i < n; ++i) corner_rows_.push_back(i);
  const int m = static_cast<int>(corner_rows_.size());
  vt_ = Eigen::MatrixXd::Zero(m, n);
  for (int r = 0; r < m; ++r) {
    const int i = corner_rows_[r];
    for (int o = -p; o <= p; ++o) {
      const int j = i + o;
      if (j >= 0 && j < n) continue;
      vt_(r, (j + n) % n) += lu_[i * w + o + p];
      lu_[i * w + o + p] = 0.0;
    }
  }
  // Unpivoted LU of the plain band.
  auto at = [&](int i, int j) -> double& { return lu_[i * w + (j - i) + p]; };
  for (int k = 0; k < n; ++k) {
    const double piv = at(k, k);
    if (!(std::abs(piv) > 1e-300) || !std::isfinite(piv))
      throw NumericalFailure("banded solve: zero pivot", 0.0);
    for (int i = k + 1; i <= std::min(k + p, n - 1); ++i) {
      const double l = at(i, k) / piv;
      at(i, k) = l;
      for (int j = k + 1; j <= std::min(k + p, n - 1); ++j) at(i, j) -= l * at(k, j);
    }
  }
  z_ = Eigen::MatrixXd::Zero(n, m);
  std::vector<double> col(n);
  for (int r = 0; r < m; ++r) {
    std::fill(col.begin(), col.end(), 0.0);
    col[corner_rows_[r]] = 1.0;
    band_solve<double>(col);
    for (int i = 0; i < n; ++i) z_(i, r) = col[i];
  }
  Eigen::MatrixXd cap = Eigen::MatrixXd::Identity(m, m) + vt_ * z_;
  capacitance_.compute(cap);
}

template <class T>
void CyclicBandedSolver::band_solve(std::span<T> x) const {
  const int w = 2 * p_ + 1;
  auto at = [&](int i, int j) { return lu_[i * w + (j - i) + p_]; };
  for (int i = 0; i < n_; ++i)
    for (int j = std::max(0, i - p_); j < i; ++j) x[i] -= at(i, j) * x[j];
  for (int i = n_ - 1; i >= 0; --i) {
    for (int j = i + 1; j <= std::min(i + p_, n_ - 1); ++j) x[i] -= at(i, j) * x[j];
    x[i] /= at(i, i);
  }
}

template <class T>
void CyclicBandedSolver::solve_impl(std::span<T> rhs) const {
  if (static_cast<int>(rhs.size()) != n_) throw std::invalid_argument("cyclic banded: size mismatch");
  band_solve<T>(rhs);
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  Eigen::Map<Vec> y(rhs.data(), n_);
  Vec t = vt_.template cast<T>() * y;
  Vec s = capacitance_.solve(t.real()).template cast<T>();
  if constexpr (!std::is_same_v<T, double>) {
    Eigen::VectorXd im = capacitance_.solve(t.imag());
    s += T(0.0, 1.0) * im.template cast<T>();
  }
  y -= z_.template cast<T>() * s;
}

void CyclicBandedSolver::solve(std::span<double> rhs) const { solve_impl<double>(rhs); }
void CyclicBandedSolver::solve(std::span<std::complex<double>> rhs) const {
  solve_impl<std::complex<double>>(rhs);
}

}  // namespace rhflow
