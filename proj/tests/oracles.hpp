#pragma once

// Deliberately naive reference implementations used to cross-check the library.

#include <cmath>
#include <vector>

#include "rdist/core/tensor.hpp"

namespace rdist::oracle {

inline std::vector<double> mse(const Tensor& a, const Tensor& b) {
  std::vector<double> out;
  for (int n = 0; n < a.n(); ++n) {
    double s = 0;
    int count = 0;
    for (int c = 0; c < a.c(); ++c) {
      for (int y = 0; y < a.h(); ++y) {
        for (int x = 0; x < a.w(); ++x) {
          const double d = double(a.at(n, c, y, x)) - double(b.at(n, c, y, x));
          s += d * d;
          ++count;
        }
      }
    }
    out.push_back(s / count);
  }
  return out;
}

// Gaussian-window SSIM evaluated window by window, no separable filtering.
inline std::vector<double> ssim(const Tensor& a, const Tensor& b, int win = 11, double sigma = 1.5) {
  std::vector<double> g(win);
  double gs = 0;
  for (int i = 0; i < win; ++i) {
    const double d = i - (win - 1) / 2.0;
    g[i] = std::exp(-d * d / (2 * sigma * sigma));
    gs += g[i];
  }
  for (double& v : g) v /= gs;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  std::vector<double> out;
  for (int n = 0; n < a.n(); ++n) {
    double total = 0;
    for (int c = 0; c < a.c(); ++c) {
      double acc = 0;
      int windows = 0;
      for (int y0 = 0; y0 + win <= a.h(); ++y0) {
        for (int x0 = 0; x0 + win <= a.w(); ++x0) {
          double ma = 0, mb = 0;
          for (int i = 0; i < win; ++i) {
            for (int j = 0; j < win; ++j) {
              ma += g[i] * g[j] * a.at(n, c, y0 + i, x0 + j);
              mb += g[i] * g[j] * b.at(n, c, y0 + i, x0 + j);
            }
          }
          double va = 0, vb = 0, cov = 0;
          for (int i = 0; i < win; ++i) {
            for (int j = 0; j < win; ++j) {
              const double da = a.at(n, c, y0 + i, x0 + j) - ma;
              const double db = b.at(n, c, y0 + i, x0 + j) - mb;
              va += g[i] * g[j] * da * da;
              vb += g[i] * g[j] * db * db;
              cov += g[i] * g[j] * da * db;
            }
          }
          acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
          ++windows;
        }
      }
      total += acc / windows;
    }
    out.push_back(total / a.c());
  }
  return out;
}

inline double normal_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
}

// Composite Simpson rule on [lo, hi] with `intervals` (even) panels.
template <class F>
double simpson(F f, double lo, double hi, int intervals) {
  const double h = (hi - lo) / intervals;
  double s = f(lo) + f(hi);
  for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
  return s * h / 3.0;
}

// KL(p || q) for scalar Gaussians by direct quadrature of p log(p/q).
inline double kl_numeric(double mu_p, double s_p, double mu_q, double s_q) {
  const double lo = mu_p - 12 * s_p, hi = mu_p + 12 * s_p;
  return simpson(
      [&](double x) {
        const double p = normal_pdf(x, mu_p, s_p);
        if (p <= 0) return 0.0;
        // log(p/q) written out so tails do not underflow to log(0/0).
        const double zp = (x - mu_p) / s_p, zq = (x - mu_q) / s_q;
        return p * (std::log(s_q / s_p) - 0.5 * zp * zp + 0.5 * zq * zq);
      },
      lo, hi, 20000);
}

}  // namespace rdist::oracle
