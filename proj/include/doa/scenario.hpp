#pragma once
#include <optional>
#include <string>
#include <vector>

#include "doa/array.hpp"
#include "doa/error.hpp"

namespace doa {

struct Fov {
  double theta_min = -60.0, theta_max = 60.0;
  double phi_min = 0.0, phi_max = 0.0;

  bool contains_theta(double t) const {
    return t >= theta_min && t <= theta_max;
  }
  bool contains_phi(double p) const { return p >= phi_min && p <= phi_max; }
};

inline Fov ula_fov() { return {-60.0, 60.0, 0.0, 0.0}; }
inline Fov uca_fov() { return {-180.0, 180.0, 0.0, 60.0}; }

enum class DoaSpecKind : std::uint8_t { uniform, equidistant, deterministic };

struct DoaSpec {
  DoaSpecKind kind = DoaSpecKind::uniform;
  double min_sep = 3.0;              // uniform only, degrees
  std::vector<double> thetas, phis;  // deterministic only

  static DoaSpec make_uniform(double min_sep = 3.0) {
    return {DoaSpecKind::uniform, min_sep, {}, {}};
  }
  static DoaSpec make_equidistant() {
    return {DoaSpecKind::equidistant, 0.0, {}, {}};
  }
  static DoaSpec make_deterministic(std::vector<double> thetas,
                                    std::vector<double> phis = {}) {
    return {DoaSpecKind::deterministic, 0.0, std::move(thetas),
            std::move(phis)};
  }
};

struct SignalScenario {
  ArrayGeometry geometry;
  int sources = 1;
  double snr_db = 0.0;
  int snapshots = 1;
  DoaSpec doa;
  Fov fov;

  bool two_d() const { return geometry.kind == ArrayKind::uca; }

  void validate() const {
    geometry.validate();
    if (sources < 1) throw InvalidArgument("source count must be positive");
    if (snapshots < 1) throw InvalidArgument("snapshot count must be positive");
  }
};

// Benchmark presets:
//   scen1 ULA(8,3), scen2 ULA(8,7), scen3 ULA(16,3), scen4 UCA(12,5),
//   scen1-desk = scen1 shrunk for quick desktop runs (SNR 0 dB).
// ULA spacing is half a wavelength; the UCA radius puts adjacent elements
// half a wavelength apart (chord).
inline std::optional<SignalScenario> scenario_preset(const std::string& name) {
  const double d = 0.5;
  if (name == "scen1")
    return SignalScenario{ArrayGeometry::make_ula(8, d), 3, -5.0, 10,
                          DoaSpec::make_uniform(), ula_fov()};
  if (name == "scen1-desk")
    return SignalScenario{ArrayGeometry::make_ula(8, d), 3, 0.0, 10,
                          DoaSpec::make_uniform(), ula_fov()};
  if (name == "scen2")
    return SignalScenario{ArrayGeometry::make_ula(8, d), 7, -5.0, 10,
                          DoaSpec::make_uniform(), ula_fov()};
  if (name == "scen3")
    return SignalScenario{ArrayGeometry::make_ula(16, d), 3, -5.0, 10,
                          DoaSpec::make_uniform(), ula_fov()};
  if (name == "scen4") {
    const double r = 0.25 / std::sin(kPi / 12.0);
    return SignalScenario{ArrayGeometry::make_uca(12, r), 5, -5.0, 50,
                          DoaSpec::make_uniform(), uca_fov()};
  }
  return std::nullopt;
}

inline SignalScenario require_preset(const std::string& name) {
  auto s = scenario_preset(name);
  if (!s) throw InvalidArgument("unknown scenario preset: " + name);
  return *s;
}

}  // namespace doa
