#ifndef RHFLOW_BANDED_HPP
#define RHFLOW_BANDED_HPP

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace rhflow {

/// Direct solver for periodic banded systems: A(i, (i+o) mod N) for |o| <= p.
/// The band without wraparound is factored by unpivoted LU (the matrices that
/// reach this are symmetric positive definite after row scaling); the corner
/// blocks are folded in with a rank-2p Woodbury correction.
class CyclicBandedSolver {
 public:
  CyclicBandedSolver() = default;
  /// bands holds N rows of 2p+1 entries, entry [i*(2p+1) + o + p] = A(i, i+o).
  CyclicBandedSolver(int n, int p, std::span<const double> bands);

  int size() const { return n_; }

  void solve(std::span<double> rhs) const;
  void solve(std::span<std::complex<double>> rhs) const;

 private:
  template <class T>
  void band_solve(std::span<T> x) const;
  template <class T>
  void solve_impl(std::span<T> rhs) const;

  int n_ = 0;
  int p_ = 0;
  std::vector<double> lu_;          // N x (2p+1) band of the LU factors
  std::vector<int> corner_rows_;    // rows carrying wraparound entries
  Eigen::MatrixXd z_;               // B^{-1} U, N x 2p
  Eigen::MatrixXd vt_;              // corner rows, 2p x N
  Eigen::PartialPivLU<Eigen::MatrixXd> capacitance_;
};

}  // namespace rhflow

#endif  // RHFLOW_BANDED_HPP
