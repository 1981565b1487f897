#pragma once
#include <cmath>
#include <cstdint>

#include "doa/cmat.hpp"
#include "doa/error.hpp"

namespace doa {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * (kPi / 180.0); }
inline double rad2deg(double r) { return r * (180.0 / kPi); }

enum class ArrayKind : std::uint8_t { ula = 0, uca = 1 };

// Element layout. Lengths are in wavelengths throughout, so the carrier
// never appears explicitly.
struct ArrayGeometry {
  ArrayKind kind = ArrayKind::ula;
  std::size_t elements = 0;
  double spacing = 0.0;  // ULA inter-element spacing
  double radius = 0.0;   // UCA radius

  static ArrayGeometry make_ula(std::size_t m, double d) {
    ArrayGeometry g{ArrayKind::ula, m, d, 0.0};
    g.validate();
    return g;
  }
  static ArrayGeometry make_uca(std::size_t m, double r) {
    ArrayGeometry g{ArrayKind::uca, m, 0.0, r};
    g.validate();
    return g;
  }

  void validate() const {
    if (elements < 2) throw InvalidArgument("array needs at least 2 elements");
    if (kind == ArrayKind::ula && spacing <= 0.0)
      throw InvalidArgument("ULA spacing must be positive");
    if (kind == ArrayKind::uca && radius <= 0.0)
      throw InvalidArgument("UCA radius must be positive");
  }

  // UCA sensor azimuth of element m.
  double sensor_azimuth(std::size_t m) const {
    return 2.0 * kPi * static_cast<double>(m) / static_cast<double>(elements);
  }
};

// ULA response: element m = exp(-j 2*pi*d*m*sin(theta)).
inline CVec steering_ula(const ArrayGeometry& g, double theta_deg) {
  if (g.kind != ArrayKind::ula)
    throw InvalidArgument("steering_ula: geometry is not a ULA");
  const double st = std::sin(deg2rad(theta_deg));
  CVec a(g.elements);
  for (std::size_t m = 0; m < g.elements; ++m) {
    const double phase = -2.0 * kPi * g.spacing * static_cast<double>(m) * st;
    a[m] = std::polar(1.0, phase);
  }
  return a;
}

// UCA response: element m = exp(-j 2*pi*R*cos(phi_m - theta)*sin(phi)),
// theta azimuth, phi elevation.
inline CVec steering_uca(const ArrayGeometry& g, double theta_deg,
                         double phi_deg) {
  if (g.kind != ArrayKind::uca)
    throw InvalidArgument("steering_uca: geometry is not a UCA");
  const double th = deg2rad(theta_deg);
  const double sp = std::sin(deg2rad(phi_deg));
  CVec a(g.elements);
  for (std::size_t m = 0; m < g.elements; ++m) {
    const double phase =
        -2.0 * kPi * g.radius * std::cos(g.sensor_azimuth(m) - th) * sp;
    a[m] = std::polar(1.0, phase);
  }
  return a;
}

inline CVec steering(const ArrayGeometry& g, double theta_deg,
                     double phi_deg = 0.0) {
  return g.kind == ArrayKind::ula ? steering_ula(g, theta_deg)
                                  : steering_uca(g, theta_deg, phi_deg);
}

}  // namespace doa
