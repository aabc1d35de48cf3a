#ifndef RHFLOW_GRID_HPP
#define RHFLOW_GRID_HPP

#include <array>
#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace rhflow {

/// Samples of a quantity that depends on x1 only (one value per x1 grid
/// line). Metric coefficients, the scalar map and every curvature quantity of
/// the reduced geometry live in this form.
using Profile = std::vector<double>;

/// Structured periodic grid on the n-torus, n in {2, 3}. Axis 0 is x1, the
/// only direction the reduced geometry depends on; the remaining axes are
/// symmetry directions.
class PeriodicGrid {
 public:
  PeriodicGrid() = default;
  PeriodicGrid(int dim, std::array<int, 3> points, std::array<double, 3> lengths);

  /// Grid with every axis of length 2*pi.
  static PeriodicGrid torus(int dim, std::array<int, 3> points);

  int dim() const { return dim_; }
  int points(int axis) const { return points_[axis]; }
  double length(int axis) const { return lengths_[axis]; }
  double spacing(int axis) const { return lengths_[axis] / points_[axis]; }
  double coordinate(int axis, int i) const { return i * spacing(axis); }

  std::size_t size() const;
  /// Number of points sharing one x1 index.
  std::size_t row_size() const;
  std::size_t index(int i, int j, int k = 0) const {
    return (static_cast<std::size_t>(i) * points_[1] + j) * points_[2] + k;
  }
  /// Multi-index of a flat index.
  std::array<int, 3> unflatten(std::size_t idx) const;
  /// Product of spacings.
  double cell_volume() const;

  /// Same grid with every point count multiplied by `factor`.
  PeriodicGrid refined(int factor) const;

  bool operator==(const PeriodicGrid& other) const = default;

 private:
  int dim_ = 2;
  std::array<int, 3> points_{16, 16, 1};
  std::array<double, 3> lengths_{1.0, 1.0, 1.0};
};

/// Values on every point of a grid, row-major with x1 slowest.
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(const PeriodicGrid& grid, double value = 0.0);
  ScalarField(const PeriodicGrid& grid, std::vector<double> values);

  /// Samples f(x1, x2, x3) at the grid points.
  static ScalarField sample(const PeriodicGrid& grid,
                            const std::function<double(double, double, double)>& f);
  /// Broadcasts an x1 profile along the symmetry directions.
  static ScalarField from_profile(const PeriodicGrid& grid, std::span<const double> profile);

  const PeriodicGrid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(int i, int j, int k = 0) { return values_[grid_.index(i, j, k)]; }
  double at(int i, int j, int k = 0) const { return values_[grid_.index(i, j, k)]; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  /// The contiguous block of values sharing x1 index i.
  std::span<const double> row(int i) const;
  std::span<double> row(int i);

  double max() const;
  double min() const;
  double max_abs() const;
  bool all_finite() const;

  ScalarField& operator+=(const ScalarField& other);
  ScalarField& operator-=(const ScalarField& other);
  ScalarField& operator*=(double s);

 private:
  PeriodicGrid grid_;
  std::vector<double> values_;
};

ScalarField operator+(ScalarField a, const ScalarField& b);
ScalarField operator-(ScalarField a, const ScalarField& b);
ScalarField operator*(ScalarField a, double s);

/// Fourth-order central difference of a periodic sequence with spacing h.
/// order is 1 or 2.
std::vector<double> periodic_derivative(std::span<const double> f, double h, int order);

/// Fourth-order central difference along `axis` with periodic wraparound.
ScalarField derivative(const ScalarField& field, int axis, int order);

/// Mixed derivative d^2 f / dx_a dx_b (a != b) from composed first derivatives.
ScalarField mixed_derivative(const ScalarField& field, int axis_a, int axis_b);

/// Riemann sum of field * volume_element * cell volume.
double integrate(const ScalarField& field, const ScalarField& volume_element);
/// Same with an x1-only volume element.
double integrate(const ScalarField& field, std::span<const double> volume_element);

/// Tensor-product cubic Lagrange interpolation at coordinates x (periodic).
double interpolate(const ScalarField& f, std::array<double, 3> x);

/// Periodic cubic spline through equispaced samples on [0, length).
class PeriodicSpline {
 public:
  PeriodicSpline() = default;
  PeriodicSpline(std::span<const double> values, double length);

  double operator()(double x) const;
  double derivative(double x) const;

 private:
  std::vector<double> y_;
  std::vector<double> m_;  // second derivatives at the knots
  double h_ = 1.0;
  double length_ = 1.0;
};

/// Fourier coefficients along the symmetry directions, one block of modes per
/// x1 index. Layout matches ScalarField; the coefficient for mode (m2, m3) of
/// row i sits at grid.index(i, m2, m3). Transformed axes are those requested
/// at construction of the ModeTransform that produced it.
struct ModeStack {
  PeriodicGrid grid;
  std::vector<std::complex<double>> coefficients;
};

/// Discrete Fourier transform along a subset of the symmetry axes (1, 2).
/// Forward is normalised by 1/(number of transformed points), so a unit delta
/// maps to a flat spectrum of magnitude 1/N; inverse is the plain sum.
class ModeTransform {
 public:
  ModeTransform(const PeriodicGrid& grid, std::vector<int> axes);
  ~ModeTransform();
  ModeTransform(const ModeTransform&) = delete;
  ModeTransform& operator=(const ModeTransform&) = delete;
  ModeTransform(ModeTransform&&) noexcept;
  ModeTransform& operator=(ModeTransform&&) noexcept;

  const PeriodicGrid& grid() const;
  const std::vector<int>& axes() const;

  ModeStack forward(const ScalarField& field) const;
  ScalarField inverse(const ModeStack& modes) const;

  /// In-place variants over raw coefficient buffers laid out like ModeStack.
  void forward_inplace(std::span<std::complex<double>> data) const;
  void inverse_inplace(std::span<std::complex<double>> data) const;

  /// Signed angular wavenumber 2*pi*m/L of index m along `axis`.
  double wavenumber(int axis, int m) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rhflow

#endif  // RHFLOW_GRID_HPP
