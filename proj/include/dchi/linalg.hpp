#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dchi/errors.hpp"
#include "dchi/mat.hpp"

namespace dchi {

inline constexpr double kDefaultTol = 1e-9;
inline constexpr int kDefaultMaxIter = 10000;

namespace detail {

// Deterministic start vector with all components nonzero and no symmetry.
inline Vec start_vector(std::size_t n) {
  Vec v(n);
  std::uint64_t s = 0x9E3779B97F4A7C15ull;
  for (auto& x : v) {
    s += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    x = 0.5 + static_cast<double>(z >> 11) * 0x1.0p-53;
  }
  const double nrm = norm2(v);
  for (auto& x : v) x /= nrm;
  return v;
}

// 1-based square scratch matrix for the EISPACK-style routines below.
class Scratch {
 public:
  explicit Scratch(const Mat& a) : n_(a.rows()), d_((n_ + 1) * (n_ + 1), 0.0) {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) (*this)(i + 1, j + 1) = a(i, j);
  }
  double& operator()(std::size_t i, std::size_t j) { return d_[i * (n_ + 1) + j]; }
  std::size_t n() const { return n_; }

 private:
  std::size_t n_;
  std::vector<double> d_;
};

// Diagonal similarity scaling by powers of two; eigenvalues are unchanged.
inline void balance(Scratch& a) {
  constexpr double radix = 2.0;
  constexpr double sqrdx = radix * radix;
  const std::size_t n = a.n();
  bool done = false;
  while (!done) {
    done = true;
    for (std::size_t i = 1; i <= n; ++i) {
      double r = 0.0, c = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (j == i) continue;
        c += std::abs(a(j, i));
        r += std::abs(a(i, j));
      }
      if (c == 0.0 || r == 0.0) continue;
      double g = r / radix;
      double f = 1.0;
      const double s = c + r;
      while (c < g) {
        f *= radix;
        c *= sqrdx;
      }
      g = r * radix;
      while (c > g) {
        f /= radix;
        c /= sqrdx;
      }
      if ((c + r) / f < 0.95 * s) {
        done = false;
        g = 1.0 / f;
        for (std::size_t j = 1; j <= n; ++j) a(i, j) *= g;
        for (std::size_t j = 1; j <= n; ++j) a(j, i) *= f;
      }
    }
  }
}

// Reduction to upper Hessenberg form by stabilized elementary similarity transforms.
inline void to_hessenberg(Scratch& a) {
  const std::size_t n = a.n();
  for (std::size_t m = 2; m < n; ++m) {
    double x = 0.0;
    std::size_t piv = m;
    for (std::size_t j = m; j <= n; ++j) {
      if (std::abs(a(j, m - 1)) > std::abs(x)) {
        x = a(j, m - 1);
        piv = j;
      }
    }
    if (piv != m) {
      for (std::size_t j = m - 1; j <= n; ++j) std::swap(a(piv, j), a(m, j));
      for (std::size_t j = 1; j <= n; ++j) std::swap(a(j, piv), a(j, m));
    }
    if (x != 0.0) {
      for (std::size_t i = m + 1; i <= n; ++i) {
        double y = a(i, m - 1);
        if (y == 0.0) continue;
        y /= x;
        a(i, m - 1) = y;
        for (std::size_t j = m; j <= n; ++j) a(i, j) -= y * a(m, j);
        for (std::size_t j = 1; j <= n; ++j) a(j, m) += y * a(j, i);
      }
    }
  }
  for (std::size_t i = 3; i <= n; ++i)
    for (std::size_t j = 1; j + 1 < i; ++j) a(i, j) = 0.0;
}

inline double sign_of(double a, double b) { return b >= 0.0 ? std::abs(a) : -std::abs(a); }

// Francis double-shift QR on an upper Hessenberg matrix. Returns false when the
// per-eigenvalue or total iteration budget is exhausted.
inline bool hessenberg_qr(Scratch& a, std::vector<std::complex<double>>& out, int max_iter) {
  const int n = static_cast<int>(a.n());
  std::vector<double> wr(n + 1, 0.0), wi(n + 1, 0.0);
  double anorm = 0.0;
  for (int i = 1; i <= n; ++i)
    for (int j = std::max(i - 1, 1); j <= n; ++j) anorm += std::abs(a(i, j));

  int nn = n;
  double t = 0.0;
  int total = 0;
  double p = 0, q = 0, r = 0, s = 0, w = 0, x = 0, y = 0, z = 0;
  while (nn >= 1) {
    int its = 0;
    int l = 0;
    do {
      for (l = nn; l >= 2; --l) {
        s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
        if (s == 0.0) s = anorm;
        if (std::abs(a(l, l - 1)) + s == s) {
          a(l, l - 1) = 0.0;
          break;
        }
      }
      x = a(nn, nn);
      if (l == nn) {
        wr[nn] = x + t;
        wi[nn--] = 0.0;
      } else {
        y = a(nn - 1, nn - 1);
        w = a(nn, nn - 1) * a(nn - 1, nn);
        if (l == nn - 1) {
          p = 0.5 * (y - x);
          q = p * p + w;
          z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_of(z, p);
            wr[nn - 1] = wr[nn] = x + z;
            if (z != 0.0) wr[nn] = x - w / z;
            wi[nn - 1] = wi[nn] = 0.0;
          } else {
            wr[nn - 1] = wr[nn] = x + p;
            wi[nn - 1] = -(wi[nn] = z);
          }
          nn -= 2;
        } else {
          if (its >= 60 || total >= max_iter) return false;
          if (its == 10 || its == 20 || its == 40) {
            // exceptional shift
            t += x;
            for (int i = 1; i <= nn; ++i) a(i, i) -= x;
            s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
            y = x = 0.75 * s;
            w = -0.4375 * s * s;
          }
          ++its;
          ++total;
          int m = nn - 2;
          for (; m >= l; --m) {
            z = a(m, m);
            r = x - z;
            s = y - z;
            p = (r * s - w) / a(m + 1, m) + a(m, m + 1);
            q = a(m + 1, m + 1) - z - r - s;
            r = a(m + 2, m + 1);
            s = std::abs(p) + std::abs(q) + std::abs(r);
            p /= s;
            q /= s;
            r /= s;
            if (m == l) break;
            const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
            const double v =
                std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) + std::abs(a(m + 1, m + 1)));
            if (u + v == v) break;
          }
          for (int i = m + 2; i <= nn; ++i) {
            a(i, i - 2) = 0.0;
            if (i != m + 2) a(i, i - 3) = 0.0;
          }
          for (int k = m; k <= nn - 1; ++k) {
            if (k != m) {
              p = a(k, k - 1);
              q = a(k + 1, k - 1);
              r = 0.0;
              if (k != nn - 1) r = a(k + 2, k - 1);
              if ((x = std::abs(p) + std::abs(q) + std::abs(r)) != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            if ((s = sign_of(std::sqrt(p * p + q * q + r * r), p)) != 0.0) {
              if (k == m) {
                if (l != m) a(k, k - 1) = -a(k, k - 1);
              } else {
                a(k, k - 1) = -s * x;
              }
              p += s;
              x = p / s;
              y = q / s;
              z = r / s;
              q /= p;
              r /= p;
              for (int j = k; j <= nn; ++j) {
                p = a(k, j) + q * a(k + 1, j);
                if (k != nn - 1) {
                  p += r * a(k + 2, j);
                  a(k + 2, j) -= p * z;
                }
                a(k + 1, j) -= p * y;
                a(k, j) -= p * x;
              }
              const int mmin = nn < k + 3 ? nn : k + 3;
              for (int i = l; i <= mmin; ++i) {
                p = x * a(i, k) + y * a(i, k + 1);
                if (k != nn - 1) {
                  p += z * a(i, k + 2);
                  a(i, k + 2) -= p * r;
                }
                a(i, k + 1) -= p * q;
                a(i, k) -= p;
              }
            }
          }
        }
      }
    } while (l < nn - 1);
  }
  out.clear();
  out.reserve(n);
  for (int i = 1; i <= n; ++i) out.emplace_back(wr[i], wi[i]);
  return true;
}

}  // namespace detail

/// All eigenvalues of a square matrix (balancing, Hessenberg reduction,
/// shifted QR). Throws NonConvergence if the QR sweep budget runs out.
inline std::vector<std::complex<double>> eigenvalues(const Mat& a, int max_iter = kDefaultMaxIter) {
  if (!a.square()) throw std::invalid_argument("eigenvalues: matrix must be square");
  if (a.rows() == 0) return {};
  detail::Scratch s(a);
  detail::balance(s);
  detail::to_hessenberg(s);
  std::vector<std::complex<double>> ev;
  if (!detail::hessenberg_qr(s, ev, max_iter)) {
    throw NonConvergence("eigenvalues: shifted QR did not converge", std::numeric_limits<double>::quiet_NaN());
  }
  return ev;
}

/// Spectral radius through the full eigenvalue route only.
inline double spectral_radius_qr(const Mat& a, int max_iter = kDefaultMaxIter) {
  double rho = 0.0;
  for (const auto& l : eigenvalues(a, max_iter)) rho = std::max(rho, std::abs(l));
  return rho;
}

/// Spectral radius. Power iteration is tried first and accepted only when the
/// Rayleigh pair passes an eigen-residual check; complex or tied dominant
/// eigenvalues fall through to the QR route.
inline double spectral_radius(const Mat& a, double tol = kDefaultTol, int max_iter = kDefaultMaxIter) {
  if (!a.square()) throw std::invalid_argument("spectral_radius: matrix must be square");
  const std::size_t n = a.rows();
  if (n == 0) return 0.0;
  if (n == 1) return std::abs(a(0, 0));

  Vec x = detail::start_vector(n);
  double best = 0.0;
  const int power_iters = std::min(max_iter, 200 + 10 * static_cast<int>(n));
  bool degenerate = false;
  for (int it = 0; it < power_iters; ++it) {
    Vec y = a * x;
    const double ny = norm2(y);
    if (ny == 0.0) {
      degenerate = true;
      break;
    }
    best = ny;
    const double lambda = dot(x, y);
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = y[i] - lambda * x[i];
      res += d * d;
    }
    if (std::sqrt(res) <= tol * std::max(ny, 1e-300) && it > 2) return std::abs(lambda);
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / ny;
  }
  (void)degenerate;
  try {
    return spectral_radius_qr(a, max_iter);
  } catch (const NonConvergence&) {
    throw NonConvergence("spectral_radius: no convergence after " + std::to_string(max_iter) + " iterations",
                         best);
  }
}

/// Largest singular value by power iteration on a^T a.
inline double two_norm(const Mat& a, double tol = kDefaultTol, int max_iter = kDefaultMaxIter) {
  const std::size_t n = a.cols();
  if (n == 0 || a.rows() == 0) return 0.0;
  if (max_abs(a) == 0.0) return 0.0;
  const Mat at = a.transpose();
  Vec x = detail::start_vector(n);
  double lambda = 0.0;
  double prev = -1.0;
  for (int it = 0; it < max_iter; ++it) {
    Vec y = at * (a * x);
    lambda = dot(x, y);
    const double ny = norm2(y);
    if (ny == 0.0) return 0.0;
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = y[i] - lambda * x[i];
      res += d * d;
    }
    res = std::sqrt(res);
    const bool settled = prev >= 0.0 && std::abs(lambda - prev) <= tol * lambda;
    if (settled && res <= std::sqrt(tol) * lambda) return std::sqrt(lambda);
    prev = lambda;
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / ny;
  }
  throw NonConvergence("two_norm: power iteration did not converge", std::sqrt(std::max(lambda, 0.0)));
}

/// Singular values in descending order (one-sided Jacobi).
inline Vec singular_values(const Mat& a, int max_sweeps = 100) {
  Mat w = a.cols() > a.rows() ? a.transpose() : a;
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  constexpr double eps = 1e-15;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += w(i, p) * w(i, p);
          beta += w(i, q) * w(i, q);
          gamma += w(i, p) * w(i, q);
        }
        if (std::abs(gamma) <= eps * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w(i, p);
          const double wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
      }
    }
    if (!rotated) break;
  }
  Vec sv(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += w(i, j) * w(i, j);
    sv[j] = std::sqrt(s);
  }
  std::sort(sv.begin(), sv.end(), std::greater<>());
  return sv;
}

/// Numeric rank: singular values at or below rel_tol * sigma_max count as zero.
inline std::size_t numeric_rank(const Mat& a, double rel_tol = 1e-8) {
  const Vec sv = singular_values(a);
  if (sv.empty() || sv.front() == 0.0) return 0;
  return static_cast<std::size_t>(
      std::count_if(sv.begin(), sv.end(), [&](double s) { return s > rel_tol * sv.front(); }));
}

namespace detail {

inline bool try_cholesky_psd(const Mat& a, Mat& l) {
  const std::size_t n = a.rows();
  l = Mat(n, n);
  const double scale = std::max(max_abs(a), std::numeric_limits<double>::min());
  const double zero_tol = 1e-14 * scale;
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (d < -zero_tol) return false;
    if (d <= zero_tol) {
      // semidefinite pivot: the rest of the column must vanish
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = a(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
        if (std::abs(s) > 1e-9 * scale) return false;
      }
      continue;
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return true;
}

}  // namespace detail

/// Lower factor L with L L^T = a for symmetric PSD a. Singular input is
/// handled directly; on failure a 1e-12*trace diagonal jitter is tried once.
inline Mat cholesky_psd(const Mat& a) {
  if (!a.square()) throw FactorizationFailure("cholesky_psd: matrix must be square");
  if (!is_symmetric(a)) throw FactorizationFailure("cholesky_psd: matrix is not symmetric");
  Mat l;
  if (detail::try_cholesky_psd(a, l)) return l;
  Mat jittered = a;
  const double jitter = 1e-12 * std::abs(trace(a));
  for (std::size_t i = 0; i < a.rows(); ++i) jittered(i, i) += jitter;
  if (detail::try_cholesky_psd(jittered, l)) return l;
  throw FactorizationFailure("cholesky_psd: covariance is not positive semidefinite");
}

/// Steady state Xi of Xi = abar Xi abar^T + sigma by squared-operator doubling.
inline Mat solve_discrete_lyapunov(const Mat& abar, const Mat& sigma, double tol = 1e-8) {
  if (!abar.square() || !sigma.square() || abar.rows() != sigma.rows())
    throw std::invalid_argument("solve_discrete_lyapunov: abar and sigma must be square and conform");
  const double rho = spectral_radius(abar);
  if (rho >= 1.0) {
    throw Divergence("solve_discrete_lyapunov: spectral radius " + std::to_string(rho) + " >= 1", rho);
  }
  Mat x = sigma;
  Mat ak = abar;
  for (int it = 0; it < 128; ++it) {
    const Mat inc = ak * x * ak.transpose();
    x += inc;
    ak = ak * ak;
    if (max_abs(inc) <= 1e-17 * std::max(max_abs(x), 1e-300) || max_abs(ak) == 0.0) break;
  }
  x = symmetrized(x);
  Mat residual = x - abar * x * abar.transpose() - sigma;
  double res = frobenius_norm(residual);
  // a few plain fixed-point passes polish rounding left by the doubling sweep
  for (int it = 0; it < 8 && res >= tol; ++it) {
    x = symmetrized(abar * x * abar.transpose() + sigma);
    residual = x - abar * x * abar.transpose() - sigma;
    res = frobenius_norm(residual);
  }
  if (res >= tol) {
    throw NonConvergence("solve_discrete_lyapunov: residual " + std::to_string(res) + " above tolerance", res);
  }
  return x;
}

}  // namespace dchi
