#ifndef RHFLOW_GEOMETRY_HPP
#define RHFLOW_GEOMETRY_HPP

#include <array>
#include <vector>

#include "rhflow/grid.hpp"

namespace rhflow {

/// Diagonal metric diag(a_1(x1), ..., a_n(x1)) on the torus of `grid`.
class ReducedMetric {
 public:
  ReducedMetric() = default;
  /// Throws PreconditionViolated if some coefficient is not positive.
  ReducedMetric(const PeriodicGrid& grid, std::vector<Profile> coefficients);

  static ReducedMetric flat(const PeriodicGrid& grid);

  const PeriodicGrid& grid() const { return grid_; }
  int dim() const { return grid_.dim(); }
  int n1() const { return grid_.points(0); }
  const Profile& a(int i) const { return a_[i]; }
  const std::vector<Profile>& coefficients() const { return a_; }

  /// sqrt(det g) = prod sqrt(a_i) along x1.
  Profile sqrt_g() const;
  /// Total volume.
  double volume() const;
  /// c * g.
  ReducedMetric scaled(double c) const;
  double min_coefficient() const;

 private:
  PeriodicGrid grid_;
  std::vector<Profile> a_;
};

/// phi(x1) with values in the real line.
struct ScalarMap {
  Profile phi;
};

/// Christoffel symbols and Ricci curvature of a reduced metric. Index j runs
/// over the symmetry axes 1..n-1; slot 0 of the per-axis vectors is unused.
struct Curvature {
  Profile g111;                   ///< Gamma^1_11 = a1'/(2 a1)
  std::vector<Profile> g1jj;      ///< Gamma^1_jj = -aj'/(2 a1)
  std::vector<Profile> gj1j;      ///< Gamma^j_1j = aj'/(2 aj)
  std::vector<Profile> ric;       ///< R_ii (lower indices), all i
  Profile scalar;                 ///< R
  Profile sqrt_g;
};

Curvature curvature(const ReducedMetric& metric);

/// Coupled quantities of (g, phi) at coupling alpha.
struct CoupledQuantities {
  double alpha = 0.0;
  Curvature curv;
  Profile dphi;                   ///< phi'
  Profile energy;                 ///< |grad phi|^2 = phi'^2 / a1
  Profile tension;                ///< Laplacian of phi
  Profile S;                      ///< R - alpha |grad phi|^2
  std::vector<Profile> S_ii;      ///< R_ii - alpha d_i phi d_i phi
  /// -Ric <= k1 g, -Sij <= k2 g, |grad S|^2 <= k3, |S| <= k4.
  double k1 = 0.0, k2 = 0.0, k3 = 0.0, k4 = 0.0;
  /// Extreme eigenvalues of S_ij relative to g over the grid.
  double sij_min_eig = 0.0, sij_max_eig = 0.0;
};

/// Throws PreconditionViolated when alpha < 0.
CoupledQuantities coupled_quantities(const ReducedMetric& metric, const ScalarMap& map,
                                     double alpha);

/// Pointwise |S_ij|^2 = sum_i S_ii^2 / a_i^2.
Profile sij_norm_sq(const ReducedMetric& metric, const CoupledQuantities& q);

/// Band coefficients of the conservative fourth-order x1 operator
/// f -> (1/w) d1(q d1 f) with w = sqrt g and q = w / a1. Returns N1 rows of
/// seven entries (offsets -3..3). Multiplying row i by w_i gives a symmetric
/// matrix.
std::vector<double> x1_operator_bands(std::span<const double> w, std::span<const double> q,
                                      double h);

/// Applies the operator of x1_operator_bands to a periodic sequence.
std::vector<double> apply_x1_operator(std::span<const double> w, std::span<const double> q,
                                      double h, std::span<const double> f);

/// Laplace-Beltrami operator on an x1 profile.
Profile laplacian_profile(const ReducedMetric& metric, std::span<const double> f);

/// Laplace-Beltrami operator on a full-grid field: conservative x1 part plus
/// fourth-order differences along the symmetry axes.
ScalarField laplacian(const ReducedMetric& metric, const ScalarField& f);

/// Components d_i f.
std::array<ScalarField, 3> gradient(const ScalarField& f);

/// |grad f|^2_g.
ScalarField gradient_norm_sq(const ReducedMetric& metric, const std::array<ScalarField, 3>& df);

/// Symmetric 2-tensor field with lower indices; comp[i][j] valid for i, j < n.
struct TensorField {
  std::array<std::array<ScalarField, 3>, 3> comp;
};

/// Hess f = d_i d_j f - Gamma^k_ij d_k f.
TensorField hessian(const ReducedMetric& metric, const Curvature& curv, const ScalarField& f);

/// |T|^2_g for a tensor field under a diagonal metric.
ScalarField tensor_norm_sq(const ReducedMetric& metric, const TensorField& t);

struct BianchiResult {
  double residual = 0.0;  ///< sup |4 div(S)(X) - 2 dS(X) + 4 alpha tau(phi) dphi(X)|
  Profile lhs;            ///< 4 div(S)(X) - 2 dS(X)
  Profile rhs;            ///< -4 alpha tau(phi) dphi(X)
  Profile D;              ///< 2 alpha (tau(phi) - X phi)^2 - alpha' |grad phi|^2
};

/// Contracted Bianchi identity for the coupled tensor along X = X1(x1) d_1.
BianchiResult bianchi_residual(const ReducedMetric& metric, const ScalarMap& map, double alpha,
                               double alpha_prime, std::span<const double> x1_component);

/// Geodesic distance to the grid point `source` by second-order fast marching.
/// Points within `exact_radius` (coordinate distance) of the source are
/// initialised from the length of the straight coordinate segment.
ScalarField geodesic_distance(const ReducedMetric& metric, std::array<int, 3> source,
                              double exact_radius = 0.0);

}  // namespace rhflow

#endif  // RHFLOW_GEOMETRY_HPP
