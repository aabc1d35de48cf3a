#include "rhflow/grid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace rhflow {

PeriodicGrid::PeriodicGrid(int dim, std::array<int, 3> points, std::array<double, 3> lengths)
    : dim_(dim), points_(points), lengths_(lengths) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("grid dimension must be 2 or 3");
  for (int a = 0; a < dim; ++a) {
    if (points[a] < 16 || points[a] % 2 != 0)
      throw std::invalid_argument("axis " + std::to_string(a) +
                                  ": point count must be even and at least 16");
    if (!(lengths[a] > 0.0)) throw std::invalid_argument("axis lengths must be positive");
  }
  if (dim == 2) {
    points_[2] = 1;
    lengths_[2] = 1.0;
  }
}

PeriodicGrid PeriodicGrid::torus(int dim, std::array<int, 3> points) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  return PeriodicGrid(dim, points, {two_pi, two_pi, two_pi});
}

std::size_t PeriodicGrid::size() const {
  return static_cast<std::size_t>(points_[0]) * points_[1] * points_[2];
}

std::size_t PeriodicGrid::row_size() const {
  return static_cast<std::size_t>(points_[1]) * points_[2];
}

std::array<int, 3> PeriodicGrid::unflatten(std::size_t idx) const {
  const int k = static_cast<int>(idx % points_[2]);
  idx /= points_[2];
  const int j = static_cast<int>(idx % points_[1]);
  const int i = static_cast<int>(idx / points_[1]);
  return {i, j, k};
}

double PeriodicGrid::cell_volume() const {
  double v = 1.0;
  for (int a = 0; a < dim_; ++a) v *= spacing(a);
  return v;
}

PeriodicGrid PeriodicGrid::refined(int factor) const {
  std::array<int, 3> p = points_;
  for (int a = 0; a < dim_; ++a) p[a] *= factor;
  return PeriodicGrid(dim_, p, lengths_);
}

ScalarField::ScalarField(const PeriodicGrid& grid, double value)
    : grid_(grid), values_(grid.size(), value) {}

ScalarField::ScalarField(const PeriodicGrid& grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size()) throw std::invalid_argument("field size does not match grid");
}

ScalarField ScalarField::sample(const PeriodicGrid& grid,
                                const std::function<double(double, double, double)>& f) {
  ScalarField out(grid);
  for (int i = 0; i < grid.points(0); ++i)
    for (int j = 0; j < grid.points(1); ++j)
      for (int k = 0; k < grid.points(2); ++k)
        out.at(i, j, k) = f(grid.coordinate(0, i), grid.coordinate(1, j),
                            grid.dim() == 3 ? grid.coordinate(2, k) : 0.0);
  return out;
}

ScalarField ScalarField::from_profile(const PeriodicGrid& grid, std::span<const double> profile) {
  if (profile.size() != static_cast<std::size_t>(grid.points(0)))
    throw std::invalid_argument("profile length does not match x1 axis");
  ScalarField out(grid);
  const std::size_t rs = grid.row_size();
  for (int i = 0; i < grid.points(0); ++i)
    std::fill_n(out.values_.begin() + i * rs, rs, profile[i]);
  return out;
}

std::span<const double> ScalarField::row(int i) const {
  const std::size_t rs = grid_.row_size();
  return std::span<const double>(values_).subspan(i * rs, rs);
}

std::span<double> ScalarField::row(int i) {
  const std::size_t rs = grid_.row_size();
  return std::span<double>(values_).subspan(i * rs, rs);
}

double ScalarField::max() const { return *std::max_element(values_.begin(), values_.end()); }
double ScalarField::min() const { return *std::min_element(values_.begin(), values_.end()); }

double ScalarField::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

bool ScalarField::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

ScalarField& ScalarField::operator+=(const ScalarField& other) {
  if (!(grid_ == other.grid_)) throw std::invalid_argument("grid mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ScalarField& ScalarField::operator-=(const ScalarField& other) {
  if (!(grid_ == other.grid_)) throw std::invalid_argument("grid mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

ScalarField& ScalarField::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
ScalarField operator*(ScalarField a, double s) { return a *= s; }

std::vector<double> periodic_derivative(std::span<const double> f, double h, int order) {
  const int n = static_cast<int>(f.size());
  std::vector<double> out(n);
  auto at = [&](int i) { return f[((i % n) + n) % n]; };
  if (order == 1) {
    const double c = 1.0 / (12.0 * h);
    for (int i = 0; i < n; ++i)
      out[i] = c * (8.0 * (at(i + 1) - at(i - 1)) - (at(i + 2) - at(i - 2)));
  } else if (order == 2) {
    const double c = 1.0 / (12.0 * h * h);
    for (int i = 0; i < n; ++i)
      out[i] = c * (16.0 * ((at(i - 1) - at(i)) + (at(i + 1) - at(i))) -
                    ((at(i - 2) - at(i)) + (at(i + 2) - at(i))));
  } else {
    throw std::invalid_argument("derivative order must be 1 or 2");
  }
  return out;
}

ScalarField derivative(const ScalarField& field, int axis, int order) {
  const PeriodicGrid& g = field.grid();
  if (axis < 0 || axis >= g.dim()) throw std::out_of_range("derivative axis out of range");
  if (order != 1 && order != 2) throw std::invalid_argument("derivative order must be 1 or 2");
  const double h = g.spacing(axis);
  const int n = g.points(axis);
  ScalarField out(g);
  for (int i = 0; i < g.points(0); ++i)
    for (int j = 0; j < g.points(1); ++j)
      for (int k = 0; k < g.points(2); ++k) {
        const std::array<int, 3> idx{i, j, k};
        auto at = [&](int o) {
          std::array<int, 3> s = idx;
          s[axis] = (idx[axis] + o + n) % n;
          return field.at(s[0], s[1], s[2]);
        };
        const double f0 = at(0);
        // Differences are grouped so that constants give exactly zero.
        if (order == 1)
          out.at(i, j, k) = (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h);
        else
          out.at(i, j, k) = (16.0 * ((at(-1) - f0) + (at(1) - f0)) - ((at(-2) - f0) + (at(2) - f0))) /
                            (12.0 * h * h);
      }
  return out;
}

ScalarField mixed_derivative(const ScalarField& field, int axis_a, int axis_b) {
  return derivative(derivative(field, axis_a, 1), axis_b, 1);
}

double integrate(const ScalarField& field, const ScalarField& volume_element) {
  if (!(field.grid() == volume_element.grid())) throw std::invalid_argument("integrate: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i) acc += field[i] * volume_element[i];
  return acc * field.grid().cell_volume();
}

double integrate(const ScalarField& field, std::span<const double> volume_element) {
  const PeriodicGrid& g = field.grid();
  if (volume_element.size() != static_cast<std::size_t>(g.points(0)))
    throw std::invalid_argument("integrate: shape mismatch");
  double acc = 0.0;
  for (int i = 0; i < g.points(0); ++i) {
    double row = 0.0;
    for (double v : field.row(i)) row += v;
    acc += row * volume_element[i];
  }
  return acc * g.cell_volume();
}

struct ModeTransform::Impl {
  PeriodicGrid grid;
  std::vector<int> axes;
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  double norm = 1.0;

  ~Impl() {
    if (forward) fftw_destroy_plan(forward);
    if (backward) fftw_destroy_plan(backward);
  }
};

ModeTransform::ModeTransform(const PeriodicGrid& grid, std::vector<int> axes)
    : impl_(std::make_unique<Impl>()) {
  if (axes.empty()) throw std::invalid_argument("mode transform needs at least one axis");
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  for (int a : axes)
    if (a < 1 || a >= grid.dim())
      throw std::invalid_argument("axis " + std::to_string(a) + " is not a symmetry axis");
  impl_->grid = grid;
  impl_->axes = axes;

  const std::array<int, 3> stride{static_cast<int>(grid.row_size()), grid.points(2), 1};
  std::vector<fftw_iodim> dims, loops;
  for (int a = 0; a < grid.dim(); ++a) {
    fftw_iodim d{grid.points(a), stride[a], stride[a]};
    if (std::find(axes.begin(), axes.end(), a) != axes.end()) {
      dims.push_back(d);
      impl_->norm *= grid.points(a);
    } else {
      loops.push_back(d);
    }
  }
  std::vector<std::complex<double>> scratch(grid.size());
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
  impl_->forward = fftw_plan_guru_dft(static_cast<int>(dims.size()), dims.data(),
                                      static_cast<int>(loops.size()), loops.data(), buf, buf,
                                      FFTW_FORWARD, FFTW_ESTIMATE);
  impl_->backward = fftw_plan_guru_dft(static_cast<int>(dims.size()), dims.data(),
                                       static_cast<int>(loops.size()), loops.data(), buf, buf,
                                       FFTW_BACKWARD, FFTW_ESTIMATE);
  if (!impl_->forward || !impl_->backward) throw std::runtime_error("FFTW planning failed");
}

ModeTransform::~ModeTransform() = default;
ModeTransform::ModeTransform(ModeTransform&&) noexcept = default;
ModeTransform& ModeTransform::operator=(ModeTransform&&) noexcept = default;

const PeriodicGrid& ModeTransform::grid() const { return impl_->grid; }
const std::vector<int>& ModeTransform::axes() const { return impl_->axes; }

void ModeTransform::forward_inplace(std::span<std::complex<double>> data) const {
  if (data.size() != impl_->grid.size()) throw std::invalid_argument("mode transform: size mismatch");
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(impl_->forward, buf, buf);
  const double s = 1.0 / impl_->norm;
  for (auto& c : data) c *= s;
}

void ModeTransform::inverse_inplace(std::span<std::complex<double>> data) const {
  if (data.size() != impl_->grid.size()) throw std::invalid_argument("mode transform: size mismatch");
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(impl_->backward, buf, buf);
}

ModeStack ModeTransform::forward(const ScalarField& field) const {
  if (!(field.grid() == impl_->grid)) throw std::invalid_argument("mode transform: grid mismatch");
  ModeStack out{impl_->grid, std::vector<std::complex<double>>(field.size())};
  for (std::size_t i = 0; i < field.size(); ++i) out.coefficients[i] = field[i];
  forward_inplace(out.coefficients);
  return out;
}

ScalarField ModeTransform::inverse(const ModeStack& modes) const {
  std::vector<std::complex<double>> data = modes.coefficients;
  inverse_inplace(data);
  ScalarField out(impl_->grid);
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = data[i].real();
  return out;
}

double ModeTransform::wavenumber(int axis, int m) const {
  const int n = impl_->grid.points(axis);
  const int signed_m = m <= n / 2 ? m : m - n;
  return 2.0 * std::numbers::pi * signed_m / impl_->grid.length(axis);
}

}  // namespace rhflow

#include "rhflow/banded.hpp"

namespace rhflow {

PeriodicSpline::PeriodicSpline(std::span<const double> values, double length)
    : y_(values.begin(), values.end()), length_(length) {
  const int n = static_cast<int>(y_.size());
  if (n < 6) throw std::invalid_argument("periodic spline needs at least 6 knots");
  h_ = length / n;
  std::vector<double> bands(3 * n);
  m_.resize(n);
  for (int i = 0; i < n; ++i) {
    bands[3 * i] = 1.0;
    bands[3 * i + 1] = 4.0;
    bands[3 * i + 2] = 1.0;
    m_[i] = 6.0 * (y_[(i + 1) % n] - 2.0 * y_[i] + y_[(i + n - 1) % n]) / (h_ * h_);
  }
  CyclicBandedSolver(n, 1, bands).solve(std::span<double>(m_));
}

namespace {

struct SplineSegment {
  int i0, i1;
  double t;  // position inside the cell, in [0, h)
};

SplineSegment locate(double x, double length, double h, int n) {
  double xr = std::fmod(x, length);
  if (xr < 0) xr += length;
  int i0 = static_cast<int>(std::floor(xr / h));
  if (i0 >= n) i0 = n - 1;
  return {i0, (i0 + 1) % n, xr - i0 * h};
}

}  // namespace

double PeriodicSpline::operator()(double x) const {
  const int n = static_cast<int>(y_.size());
  auto [i0, i1, t] = locate(x, length_, h_, n);
  const double s = h_ - t;
  return (m_[i0] * s * s * s + m_[i1] * t * t * t) / (6.0 * h_) +
         (y_[i0] / h_ - m_[i0] * h_ / 6.0) * s + (y_[i1] / h_ - m_[i1] * h_ / 6.0) * t;
}

double PeriodicSpline::derivative(double x) const {
  const int n = static_cast<int>(y_.size());
  auto [i0, i1, t] = locate(x, length_, h_, n);
  const double s = h_ - t;
  return (-m_[i0] * s * s + m_[i1] * t * t) / (2.0 * h_) - (y_[i0] / h_ - m_[i0] * h_ / 6.0) +
         (y_[i1] / h_ - m_[i1] * h_ / 6.0);
}

double interpolate(const ScalarField& f, std::array<double, 3> x) {
  const PeriodicGrid& g = f.grid();
  std::array<std::array<int, 4>, 3> idx{};
  std::array<std::array<double, 4>, 3> w{};
  for (int a = 0; a < 3; ++a) {
    if (a >= g.dim()) {
      idx[a] = {0, 0, 0, 0};
      w[a] = {1.0, 0.0, 0.0, 0.0};
      continue;
    }
    const int n = g.points(a);
    const double u = x[a] / g.spacing(a);
    const double base = std::floor(u);
    const double t = u - base;
    const int b = static_cast<int>(base);
    for (int m = 0; m < 4; ++m) idx[a][m] = (((b - 1 + m) % n) + n) % n;
    // cubic Lagrange weights on nodes -1, 0, 1, 2
    w[a] = {-t * (t - 1.0) * (t - 2.0) / 6.0, (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0, (t + 1.0) * t * (t - 1.0) / 6.0};
  }
  const int m2 = g.dim() >= 2 ? 4 : 1, m3 = g.dim() == 3 ? 4 : 1;
  double sum = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < m2; ++j)
      for (int k = 0; k < m3; ++k)
        sum += w[0][i] * w[1][j] * w[2][k] * f.at(idx[0][i], idx[1][j], idx[2][k]);
  return sum;
}

}  // namespace rhflow
