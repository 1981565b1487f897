#pragma once
#include <cmath>
#include <vector>

#include "doa/array.hpp"
#include "doa/cmat.hpp"
#include "doa/error.hpp"

namespace doa {

// Coupling between adjacent sensors, 0.3 * exp(j 60 deg).
inline cplx default_gamma() { return 0.3 * std::polar(1.0, deg2rad(60.0)); }

struct ImperfectionFlags {
  bool pos = false;
  bool gain = false;
  bool phase = false;
  bool mc = false;

  static ImperfectionFlags all(bool on) { return {on, on, on, on}; }
  bool any() const { return pos || gain || phase || mc; }
};

// rho-scaled bias vectors plus the mutual-coupling matrix. Phase biases are
// kept in radians; degrees appear only at public boundaries.
struct ImperfectionSpec {
  double rho = 0.0;
  ImperfectionFlags flags;
  cplx gamma = default_gamma();
  bool mc_zero_diag = false;

  std::vector<double> e_pos;                // ULA, wavelengths
  std::vector<double> e_pos_x, e_pos_y;     // UCA per-axis, wavelengths
  std::vector<double> e_gain;
  std::vector<double> e_phase;              // radians
  CMat e_mc;                                // M x M

  static ImperfectionSpec none(std::size_t m) {
    ImperfectionSpec s;
    s.e_pos.assign(m, 0.0);
    s.e_pos_x.assign(m, 0.0);
    s.e_pos_y.assign(m, 0.0);
    s.e_gain.assign(m, 0.0);
    s.e_phase.assign(m, 0.0);
    s.e_mc = CMat(m, m);
    return s;
  }
};

// Bias pattern [0, a, ..., a, b, ..., b]: entry 0 is 0, entries
// 1..ceil((M-1)/2) take `a`, the rest take `b`.
inline std::vector<double> bias_pattern(std::size_t m, double a, double b) {
  std::vector<double> v(m, 0.0);
  const std::size_t split = m / 2;  // == ceil((M-1)/2)
  for (std::size_t i = 1; i < m; ++i) v[i] = (i <= split) ? a : b;
  return v;
}

namespace detail {

inline CMat mc_matrix_ula(std::size_t m, double rho, cplx gamma,
                          bool zero_diag) {
  // Powers of gamma by lag, Toeplitz fill.
  std::vector<cplx> pow(m);
  pow[0] = 1.0;
  for (std::size_t k = 1; k < m; ++k) pow[k] = pow[k - 1] * gamma;
  CMat e(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t lag = i > j ? i - j : j - i;
      e(i, j) = rho * pow[lag];
    }
  if (zero_diag)
    for (std::size_t i = 0; i < m; ++i) e(i, i) = 0.0;
  return e;
}

// UCA coupling decays with inter-element chord distance; the exponent is
// the chord measured in units of the smallest chord.
inline CMat mc_matrix_uca(const ArrayGeometry& g, double rho, cplx gamma,
                          bool zero_diag) {
  const std::size_t m = g.elements;
  const double chord_min = 2.0 * g.radius * std::sin(kPi / double(m));
  CMat e(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t lag = i > j ? i - j : j - i;
      const double chord =
          2.0 * g.radius * std::sin(kPi * double(lag) / double(m));
      const long k = std::lround(chord / chord_min);
      e(i, j) = rho * std::pow(gamma, static_cast<double>(k));
    }
  if (zero_diag)
    for (std::size_t i = 0; i < m; ++i) e(i, i) = 0.0;
  return e;
}

}  // namespace detail

inline ImperfectionSpec build_imperfections(const ArrayGeometry& g, double rho,
                                            ImperfectionFlags flags,
                                            cplx gamma = default_gamma(),
                                            bool mc_zero_diag = false) {
  if (!(rho >= 0.0 && rho <= 1.0))
    throw InvalidArgument("rho must lie in [0, 1]");
  const std::size_t m = g.elements;

  ImperfectionSpec s = ImperfectionSpec::none(m);
  s.rho = rho;
  s.flags = flags;
  s.gamma = gamma;
  s.mc_zero_diag = mc_zero_diag;
  if (rho == 0.0) return s;  // all-zero biases by contract

  const auto pos_pat = bias_pattern(m, -0.2, 0.2);
  const auto gain_pat = bias_pattern(m, 0.2, -0.2);
  const auto phase_pat = bias_pattern(m, -30.0, 30.0);  // degrees

  if (g.kind == ArrayKind::ula) {
    for (std::size_t i = 0; i < m; ++i)
      s.e_pos[i] = rho * pos_pat[i] * g.spacing;
    s.e_mc = detail::mc_matrix_ula(m, rho, gamma, mc_zero_diag);
  } else {
    const double chord_min = 2.0 * g.radius * std::sin(kPi / double(m));
    for (std::size_t i = 0; i < m; ++i) {
      s.e_pos_x[i] = rho * pos_pat[i] * chord_min;
      s.e_pos_y[i] = rho * pos_pat[i] * chord_min;
    }
    s.e_mc = detail::mc_matrix_uca(g, rho, gamma, mc_zero_diag);
  }
  for (std::size_t i = 0; i < m; ++i) {
    s.e_gain[i] = rho * gain_pat[i];
    s.e_phase[i] = rho * deg2rad(phase_pat[i]);
  }
  return s;
}

// Steering vector under the active imperfections:
//   a(theta, e) = (I + d_mc E_mc) (I + Diag(d_gain e_gain))
//                 Diag(exp(j d_phase e_phase)) a(theta, p + d_pos e_pos)
inline CVec perturbed_steering(const ArrayGeometry& g,
                               const ImperfectionSpec& imp, double theta_deg,
                               double phi_deg = 0.0) {
  const std::size_t m = g.elements;
  if (imp.e_gain.size() != m || imp.e_phase.size() != m)
    throw InvalidArgument("imperfection spec does not match geometry");

  CVec a(m);
  if (g.kind == ArrayKind::ula) {
    if (imp.e_pos.size() != m)
      throw InvalidArgument("imperfection spec does not match geometry");
    const double st = std::sin(deg2rad(theta_deg));
    for (std::size_t i = 0; i < m; ++i) {
      const double p = static_cast<double>(i) * g.spacing +
                       (imp.flags.pos ? imp.e_pos[i] : 0.0);
      a[i] = std::polar(1.0, -2.0 * kPi * p * st);
    }
  } else {
    if (imp.e_pos_x.size() != m || imp.e_pos_y.size() != m)
      throw InvalidArgument("imperfection spec does not match geometry");
    const double th = deg2rad(theta_deg);
    const double sp = std::sin(deg2rad(phi_deg));
    const double ct = std::cos(th), stt = std::sin(th);
    for (std::size_t i = 0; i < m; ++i) {
      const double az = g.sensor_azimuth(i);
      double px = g.radius * std::cos(az);
      double py = g.radius * std::sin(az);
      if (imp.flags.pos) {
        px += imp.e_pos_x[i];
        py += imp.e_pos_y[i];
      }
      a[i] = std::polar(1.0, -2.0 * kPi * sp * (px * ct + py * stt));
    }
  }

  for (std::size_t i = 0; i < m; ++i) {
    if (imp.flags.phase) a[i] *= std::polar(1.0, imp.e_phase[i]);
    if (imp.flags.gain) a[i] *= (1.0 + imp.e_gain[i]);
  }

  if (imp.flags.mc) {
    if (imp.e_mc.rows != m || imp.e_mc.cols != m)
      throw InvalidArgument("mutual-coupling matrix does not match geometry");
    CVec coupled = matvec(imp.e_mc, a);
    for (std::size_t i = 0; i < m; ++i) a[i] += coupled[i];
  }
  return a;
}

}  // namespace doa
