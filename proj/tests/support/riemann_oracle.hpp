// Brute-force curvature of a general (full-tensor) metric on a periodic grid.
// Written with plain index loops over the textbook formulas so it shares no
// code with the library's diagonal closed forms.
#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

struct TensorGrid {
  int dim = 2;
  std::array<int, 3> n{1, 1, 1};
  std::array<double, 3> h{1, 1, 1};
  std::size_t size() const { return static_cast<std::size_t>(n[0]) * n[1] * n[2]; }
  std::size_t idx(int i, int j, int k) const {
    auto w = [](int v, int m) { return ((v % m) + m) % m; };
    return (static_cast<std::size_t>(w(i, n[0])) * n[1] + w(j, n[1])) * n[2] + w(k, n[2]);
  }
};

using Mat = Eigen::Matrix3d;

// Fourth-order central first derivative along axis `a` of a scalar sampled by `get`.
template <class Get>
double d1(const TensorGrid& g, Get get, int i, int j, int k, int a) {
  std::array<int, 3> p{i, j, k};
  auto at = [&](int o) {
    std::array<int, 3> q = p;
    q[a] += o;
    return get(g.idx(q[0], q[1], q[2]));
  };
  return (at(-2) - 8 * at(-1) + 8 * at(1) - at(2)) / (12.0 * g.h[a]);
}

struct Curv {
  std::vector<Mat> ricci;
  std::vector<double> scalar;
};

inline Curv curvature(const TensorGrid& g, const std::vector<Mat>& metric) {
  const int n = g.dim;
  const std::size_t N = g.size();
  std::vector<Mat> inv(N);
  for (std::size_t p = 0; p < N; ++p) {
    Mat m = Mat::Identity();
    m.topLeftCorner(n, n) = metric[p].topLeftCorner(n, n);
    inv[p] = m.inverse();
  }
  // dg[p][a](i,j) = d_a g_ij
  std::vector<std::array<Mat, 3>> dg(N);
  for (int i = 0; i < g.n[0]; ++i)
    for (int j = 0; j < g.n[1]; ++j)
      for (int k = 0; k < g.n[2]; ++k) {
        const std::size_t p = g.idx(i, j, k);
        for (int a = 0; a < n; ++a) {
          dg[p][a] = Mat::Zero();
          for (int r = 0; r < n; ++r)
            for (int s = 0; s < n; ++s)
              dg[p][a](r, s) = d1(g, [&](std::size_t q) { return metric[q](r, s); }, i, j, k, a);
        }
      }
  // gam[p][kk](i,j) = Gamma^kk_ij
  std::vector<std::array<Mat, 3>> gam(N);
  for (std::size_t p = 0; p < N; ++p)
    for (int kk = 0; kk < n; ++kk) {
      gam[p][kk] = Mat::Zero();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double s = 0;
          for (int l = 0; l < n; ++l)
            s += 0.5 * inv[p](kk, l) * (dg[p][i](j, l) + dg[p][j](i, l) - dg[p][l](i, j));
          gam[p][kk](i, j) = s;
        }
    }
  Curv out;
  out.ricci.assign(N, Mat::Zero());
  out.scalar.assign(N, 0.0);
  for (int i0 = 0; i0 < g.n[0]; ++i0)
    for (int j0 = 0; j0 < g.n[1]; ++j0)
      for (int k0 = 0; k0 < g.n[2]; ++k0) {
        const std::size_t p = g.idx(i0, j0, k0);
        Mat ric = Mat::Zero();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int k = 0; k < n; ++k) {
              s += d1(g, [&](std::size_t q) { return gam[q][k](i, j); }, i0, j0, k0, k);
              s -= d1(g, [&](std::size_t q) { return gam[q][k](i, k); }, i0, j0, k0, j);
              for (int l = 0; l < n; ++l) {
                s += gam[p][k](k, l) * gam[p][l](i, j);
                s -= gam[p][k](j, l) * gam[p][l](i, k);
              }
            }
            ric(i, j) = s;
          }
        out.ricci[p] = ric;
        double R = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) R += inv[p](i, j) * ric(i, j);
        out.scalar[p] = R;
      }
  return out;
}

}  // namespace oracle
