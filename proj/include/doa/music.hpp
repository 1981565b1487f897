#pragma once
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doa/array.hpp"
#include "doa/cmat.hpp"
#include "doa/error.hpp"
#include "doa/scenario.hpp"
#include "doa/simulate.hpp"

namespace doa {

struct EigResult {
  std::vector<double> values;  // ascending
  CMat vectors;                // column j pairs with values[j]
};

// Cyclic Jacobi for complex Hermitian matrices. Each rotation zeroes one
// off-diagonal pair with a unitary 2x2 transform; sweeps repeat until the
// off-diagonal mass is negligible. Plenty accurate and fast at M <= 16.
inline EigResult hermitian_eig(const CMat& r) {
  if (r.rows != r.cols) throw InvalidArgument("hermitian_eig: not square");
  const std::size_t m = r.rows;
  const double fro = frobenius_norm(r);
  if (hermitian_error(r) > 1e-8 * std::max(1.0, fro))
    throw InvalidArgument("hermitian_eig: matrix is not Hermitian");

  CMat a = r;
  CMat v = CMat::identity(m);

  auto off_norm_sq = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) s += std::norm(a(i, j));
    return s;
  };

  const double stop = std::max(1e-300, 1e-26 * fro * fro);
  for (int sweep = 0; sweep < 100 && off_norm_sq() > stop; ++sweep) {
    for (std::size_t p = 0; p < m; ++p) {
      for (std::size_t q = p + 1; q < m; ++q) {
        const cplx apq = a(p, q);
        const double r_abs = std::abs(apq);
        if (r_abs == 0.0) continue;
        const cplx phase = apq / r_abs;
        const double tau = (a(q, q).real() - a(p, p).real()) / (2.0 * r_abs);
        const double tsign = tau >= 0.0 ? 1.0 : -1.0;
        const double t =
            tau == 0.0 ? 1.0
                       : tsign / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const cplx s_bar = t * c * phase;        // G[p][q]
        const cplx s = std::conj(s_bar);         // -G[q][p]

        // columns p, q of A (A <- A G)
        for (std::size_t k = 0; k < m; ++k) {
          const cplx akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s_bar * akp + c * akq;
        }
        // rows p, q of A (A <- G^H A)
        for (std::size_t k = 0; k < m; ++k) {
          const cplx apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s_bar * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        a(p, p) = a(p, p).real();
        a(q, q) = a(q, q).real();

        // accumulate eigenvectors (V <- V G)
        for (std::size_t k = 0; k < m; ++k) {
          const cplx vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s_bar * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
    return a(x, x).real() < a(y, y).real();
  });

  EigResult out;
  out.values.resize(m);
  out.vectors = CMat(m, m);
  for (std::size_t j = 0; j < m; ++j) {
    out.values[j] = a(idx[j], idx[j]).real();
    for (std::size_t i = 0; i < m; ++i) out.vectors(i, j) = v(i, idx[j]);
  }
  return out;
}

struct MusicConfig {
  double grid_1d = 0.05;     // degrees
  double grid_theta = 1.0;   // 2-D azimuth step
  double grid_phi = 0.5;     // 2-D elevation step
};

struct Spectrum1d {
  std::vector<double> angles;
  std::vector<double> values;
};

namespace detail {

// Noise subspace: eigenvectors of the M-K smallest eigenvalues.
inline CMat noise_subspace(const CMat& scm, int k) {
  const std::size_t m = scm.rows;
  if (k < 1 || static_cast<std::size_t>(k) >= m)
    throw InvalidArgument("MUSIC needs K < M");
  const EigResult eig = hermitian_eig(scm);
  const std::size_t nn = m - static_cast<std::size_t>(k);
  CMat un(m, nn);
  for (std::size_t j = 0; j < nn; ++j)
    for (std::size_t i = 0; i < m; ++i) un(i, j) = eig.vectors(i, j);
  return un;
}

// |Un^H a|^2, the null-spectrum denominator.
inline double null_power(const CMat& un, const CVec& a) {
  double s = 0.0;
  for (std::size_t j = 0; j < un.cols; ++j) {
    cplx acc = 0.0;
    for (std::size_t i = 0; i < un.rows; ++i)
      acc += std::conj(un(i, j)) * a[i];
    s += std::norm(acc);
  }
  return s;
}

inline double spectrum_floor(std::size_t m) {
  return 1e-12 * static_cast<double>(m);
}

// Parabolic vertex through three reciprocal-spectrum samples around a peak.
inline double parabolic_offset(double ym, double y0, double yp) {
  const double denom = ym - 2.0 * y0 + yp;
  if (denom <= 0.0) return 0.0;
  const double d = 0.5 * (ym - yp) / denom;
  return std::clamp(d, -0.5, 0.5);
}

}  // namespace detail

inline Spectrum1d music_spectrum_1d(const CMat& scm, const ArrayGeometry& g,
                                    int k, double grid_step,
                                    const Fov& fov = ula_fov()) {
  if (g.kind != ArrayKind::ula)
    throw InvalidArgument("music_spectrum_1d expects a ULA");
  if (grid_step <= 0.0) throw InvalidArgument("grid step must be positive");
  const CMat un = detail::noise_subspace(scm, k);
  const double floor_v = detail::spectrum_floor(g.elements);

  Spectrum1d sp;
  const std::size_t n = static_cast<std::size_t>(
                            std::floor((fov.theta_max - fov.theta_min) /
                                       grid_step + 1e-9)) + 1;
  sp.angles.resize(n);
  sp.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = fov.theta_min + grid_step * static_cast<double>(i);
    sp.angles[i] = theta;
    const CVec a = steering_ula(g, theta);
    sp.values[i] = 1.0 / (detail::null_power(un, a) + floor_v);
  }
  return sp;
}

struct PeakResult {
  std::vector<double> angles;
  bool miss = false;  // fewer than K usable peaks
};

// Interior local maxima (strictly above both neighbours), strongest first,
// refined by a parabolic fit on the reciprocal spectrum.
inline PeakResult music_peaks(const Spectrum1d& sp, int k) {
  if (sp.values.empty()) throw InvalidArgument("music_peaks: empty spectrum");
  std::vector<std::size_t> maxima;
  for (std::size_t i = 1; i + 1 < sp.values.size(); ++i)
    if (sp.values[i] > sp.values[i - 1] && sp.values[i] > sp.values[i + 1])
      maxima.push_back(i);
  std::sort(maxima.begin(), maxima.end(), [&](std::size_t a, std::size_t b) {
    return sp.values[a] > sp.values[b];
  });

  PeakResult out;
  const double step =
      sp.angles.size() > 1 ? sp.angles[1] - sp.angles[0] : 1.0;
  for (std::size_t r = 0; r < maxima.size() && r < static_cast<std::size_t>(k);
       ++r) {
    const std::size_t i = maxima[r];
    const double ym = 1.0 / sp.values[i - 1];
    const double y0 = 1.0 / sp.values[i];
    const double yp = 1.0 / sp.values[i + 1];
    out.angles.push_back(sp.angles[i] +
                         step * detail::parabolic_offset(ym, y0, yp));
  }
  out.miss = out.angles.size() < static_cast<std::size_t>(k);
  std::sort(out.angles.begin(), out.angles.end());
  return out;
}

struct Peaks2d {
  std::vector<double> thetas, phis;
  bool miss = false;
};

// 2-D MUSIC over a theta x phi grid for a UCA, 8-neighbourhood maxima,
// per-axis parabolic refinement.
inline Peaks2d music_2d(const CMat& scm, const ArrayGeometry& g, int k,
                        const MusicConfig& cfg, const Fov& fov = uca_fov()) {
  if (g.kind != ArrayKind::uca) throw InvalidArgument("music_2d expects a UCA");
  if (cfg.grid_theta <= 0.0 || cfg.grid_phi <= 0.0)
    throw InvalidArgument("grid step must be positive");
  const CMat un = detail::noise_subspace(scm, k);
  const double floor_v = detail::spectrum_floor(g.elements);

  const std::size_t nt = static_cast<std::size_t>(
                             std::floor((fov.theta_max - fov.theta_min) /
                                        cfg.grid_theta + 1e-9)) + 1;
  const std::size_t np = static_cast<std::size_t>(
                             std::floor((fov.phi_max - fov.phi_min) /
                                        cfg.grid_phi + 1e-9)) + 1;
  std::vector<double> val(nt * np);
  for (std::size_t it = 0; it < nt; ++it) {
    const double theta = fov.theta_min + cfg.grid_theta * double(it);
    for (std::size_t ip = 0; ip < np; ++ip) {
      const double phi = fov.phi_min + cfg.grid_phi * double(ip);
      const CVec a = steering_uca(g, theta, phi);
      val[it * np + ip] = 1.0 / (detail::null_power(un, a) + floor_v);
    }
  }

  struct Peak {
    std::size_t it, ip;
    double v;
  };
  std::vector<Peak> peaks;
  for (std::size_t it = 1; it + 1 < nt; ++it)
    for (std::size_t ip = 1; ip + 1 < np; ++ip) {
      const double v = val[it * np + ip];
      bool is_max = true;
      for (int dt = -1; dt <= 1 && is_max; ++dt)
        for (int dp = -1; dp <= 1; ++dp) {
          if (dt == 0 && dp == 0) continue;
          const std::size_t jt = it + std::size_t(long(dt));
          const std::size_t jp = ip + std::size_t(long(dp));
          if (val[jt * np + jp] >= v) {
            is_max = false;
            break;
          }
        }
      if (is_max) peaks.push_back({it, ip, v});
    }
  std::sort(peaks.begin(), peaks.end(),
            [](const Peak& a, const Peak& b) { return a.v > b.v; });

  Peaks2d out;
  for (std::size_t r = 0; r < peaks.size() && r < std::size_t(k); ++r) {
    const auto [it, ip, v] = peaks[r];
    const double yt_m = 1.0 / val[(it - 1) * np + ip];
    const double yt_0 = 1.0 / v;
    const double yt_p = 1.0 / val[(it + 1) * np + ip];
    const double yp_m = 1.0 / val[it * np + ip - 1];
    const double yp_p = 1.0 / val[it * np + ip + 1];
    out.thetas.push_back(fov.theta_min + cfg.grid_theta * double(it) +
                         cfg.grid_theta *
                             detail::parabolic_offset(yt_m, yt_0, yt_p));
    out.phis.push_back(fov.phi_min + cfg.grid_phi * double(ip) +
                       cfg.grid_phi *
                           detail::parabolic_offset(yp_m, yt_0, yp_p));
  }
  out.miss = out.thetas.size() < std::size_t(k);
  return out;
}

// Convenience front end used by the evaluation harness.
inline std::pair<DoaLabel, bool> music_estimate(const CMat& scm,
                                                const ArrayGeometry& g, int k,
                                                const MusicConfig& cfg,
                                                const Fov& fov) {
  DoaLabel est;
  bool miss = false;
  if (g.kind == ArrayKind::ula) {
    const Spectrum1d sp = music_spectrum_1d(scm, g, k, cfg.grid_1d, fov);
    const PeakResult pk = music_peaks(sp, k);
    est.thetas = pk.angles;
    miss = pk.miss;
  } else {
    const Peaks2d pk = music_2d(scm, g, k, cfg, fov);
    est.thetas = pk.thetas;
    est.phis = pk.phis;
    miss = pk.miss;
  }
  return {est, miss};
}

}  // namespace doa
