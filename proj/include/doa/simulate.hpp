#pragma once
#include <cmath>
#include <cstdint>
#include <vector>

#include "doa/cmat.hpp"
#include "doa/error.hpp"
#include "doa/imperfection.hpp"
#include "doa/rng.hpp"
#include "doa/scenario.hpp"

namespace doa {

struct DoaLabel {
  std::vector<double> thetas;  // degrees
  std::vector<double> phis;    // degrees, 2-D only

  bool two_d() const { return !phis.empty(); }
};

inline constexpr int kUniformRetryCap = 10000;

namespace detail {

inline bool min_sep_ok(const std::vector<double>& t, double min_sep) {
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = i + 1; j < t.size(); ++j)
      if (std::abs(t[i] - t[j]) < min_sep) return false;
  return true;
}

}  // namespace detail

// Draw one DOA label. Uniform rejection-samples until the pairwise
// separation holds; equidistant spans the closed sector; deterministic
// echoes the configured angles.
inline DoaLabel sample_doas(const DoaSpec& spec, const Fov& fov, int k,
                            bool two_d, Rng& rng) {
  if (k < 1) throw InvalidArgument("source count must be positive");
  DoaLabel label;
  switch (spec.kind) {
    case DoaSpecKind::uniform: {
      bool ok = false;
      for (int attempt = 0; attempt < kUniformRetryCap && !ok; ++attempt) {
        label.thetas.clear();
        for (int i = 0; i < k; ++i)
          label.thetas.push_back(rng.uniform(fov.theta_min, fov.theta_max));
        ok = detail::min_sep_ok(label.thetas, spec.min_sep);
      }
      if (!ok)
        throw InfeasibleSpec("uniform DOA sampling: separation infeasible");
      if (two_d) {
        for (int i = 0; i < k; ++i)
          label.phis.push_back(rng.uniform(fov.phi_min, fov.phi_max));
      }
      break;
    }
    case DoaSpecKind::equidistant: {
      for (int i = 0; i < k; ++i) {
        const double f =
            k == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(k - 1);
        label.thetas.push_back(fov.theta_min +
                               f * (fov.theta_max - fov.theta_min));
        if (two_d)
          label.phis.push_back(fov.phi_min + f * (fov.phi_max - fov.phi_min));
      }
      break;
    }
    case DoaSpecKind::deterministic: {
      if (static_cast<int>(spec.thetas.size()) != k)
        throw InvalidArgument("deterministic DOA list does not match K");
      if (two_d && static_cast<int>(spec.phis.size()) != k)
        throw InvalidArgument("deterministic phi list does not match K");
      for (double t : spec.thetas)
        if (!fov.contains_theta(t))
          throw InvalidArgument("deterministic DOA outside field of view");
      for (double p : spec.phis)
        if (!fov.contains_phi(p))
          throw InvalidArgument("deterministic elevation outside field of view");
      label.thetas = spec.thetas;
      if (two_d) label.phis = spec.phis;
      break;
    }
  }
  return label;
}

inline double noise_variance(double snr_db) {
  return std::pow(10.0, -snr_db / 10.0);
}

inline CMat steering_matrix(const ArrayGeometry& g, const ImperfectionSpec& imp,
                            const DoaLabel& label) {
  const std::size_t m = g.elements;
  const std::size_t k = label.thetas.size();
  CMat a(m, k);
  for (std::size_t s = 0; s < k; ++s) {
    const double phi = label.two_d() ? label.phis[s] : 0.0;
    CVec col = imp.flags.any() && imp.rho > 0.0
                   ? perturbed_steering(g, imp, label.thetas[s], phi)
                   : steering(g, label.thetas[s], phi);
    for (std::size_t i = 0; i < m; ++i) a(i, s) = col[i];
  }
  return a;
}

struct SnapshotSet {
  CMat y;  // M x T
  DoaLabel label;
};

// Y = A(theta, e) S + N. Sources are i.i.d. unit-power circular complex
// Gaussian, noise variance 10^(-SNR/10). DOA sampling and the signal/noise
// draws use distinct sub-streams of `seed`, so a deterministic label leaves
// the signal stream unchanged.
inline SnapshotSet simulate_snapshots(const SignalScenario& sc,
                                      const ImperfectionSpec& imp,
                                      std::uint64_t seed) {
  sc.validate();
  Rng doa_rng(mix_seed(seed, 1));
  Rng sig_rng(mix_seed(seed, 2));

  SnapshotSet out;
  out.label = sample_doas(sc.doa, sc.fov, sc.sources, sc.two_d(), doa_rng);

  const std::size_t m = sc.geometry.elements;
  const std::size_t k = static_cast<std::size_t>(sc.sources);
  const std::size_t t = static_cast<std::size_t>(sc.snapshots);
  const CMat a = steering_matrix(sc.geometry, imp, out.label);
  const double sigma = std::sqrt(noise_variance(sc.snr_db));

  out.y = CMat(m, t);
  CVec s(k);
  for (std::size_t col = 0; col < t; ++col) {
    for (std::size_t i = 0; i < k; ++i) s[i] = sig_rng.cnormal();
    for (std::size_t row = 0; row < m; ++row) {
      cplx acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += a(row, i) * s[i];
      out.y(row, col) = acc;
    }
    for (std::size_t row = 0; row < m; ++row)
      out.y(row, col) += sigma * sig_rng.cnormal();
  }
  return out;
}

// R = (1/T) sum_t y(t) y(t)^H
inline CMat sample_covariance(const CMat& y) {
  if (y.cols < 1) throw InvalidArgument("need at least one snapshot");
  const std::size_t m = y.rows, t = y.cols;
  CMat r(m, m);
  for (std::size_t col = 0; col < t; ++col) {
    for (std::size_t i = 0; i < m; ++i) {
      const cplx yi = y(i, col);
      for (std::size_t j = 0; j < m; ++j)
        r(i, j) += yi * std::conj(y(j, col));
    }
  }
  const double inv_t = 1.0 / static_cast<double>(t);
  for (cplx& v : r.a) v *= inv_t;
  return r;
}

struct DatasetRecord {
  DoaLabel label;
  CMat scm;
};

inline DatasetRecord generate_record(const SignalScenario& sc,
                                     const ImperfectionSpec& imp,
                                     std::uint64_t record_seed) {
  SnapshotSet snap = simulate_snapshots(sc, imp, record_seed);
  return {std::move(snap.label), sample_covariance(snap.y)};
}

}  // namespace doa
