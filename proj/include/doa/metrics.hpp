#pragma once
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "doa/error.hpp"
#include "doa/hungarian.hpp"
#include "doa/simulate.hpp"

namespace doa {

inline constexpr double kErrorCapDeg = 30.0;
inline constexpr double kAccuracyTolDeg = 10.0;

namespace detail {

// Association distance between a truth source and an estimate: absolute
// azimuth error, or the mean of the azimuth and elevation errors in 2-D.
inline double pair_error(const DoaLabel& truth, std::size_t i,
                         const DoaLabel& est, std::size_t j) {
  const double dt = std::abs(truth.thetas[i] - est.thetas[j]);
  if (!truth.two_d()) return dt;
  const double dp = std::abs(truth.phis[i] - est.phis[j]);
  return 0.5 * (dt + dp);
}

inline std::vector<std::size_t> sorted_by_theta(
    const std::vector<double>& thetas) {
  std::vector<std::size_t> idx(thetas.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return thetas[a] < thetas[b]; });
  return idx;
}

}  // namespace detail

// Hungarian association on cap-clipped costs; truth entries left unmatched
// (estimator returned fewer sources) are charged the cap.
inline std::vector<double> match_errors(const DoaLabel& truth,
                                        const DoaLabel& est,
                                        double cap = kErrorCapDeg) {
  const std::size_t n = truth.thetas.size();
  if (n == 0) throw InvalidArgument("match_errors: empty truth");
  const std::size_t m = est.thetas.size();

  std::vector<double> errors(n, cap);
  if (m == 0) return errors;

  std::vector<double> cost(n * m, cap);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      cost[i * m + j] = std::min(detail::pair_error(truth, i, est, j), cap);
  const Assignment a = hungarian_padded(cost, n, m, cap);
  for (std::size_t i = 0; i < n; ++i) {
    if (a.row_to_col[i] >= 0)
      errors[i] = cost[i * m + static_cast<std::size_t>(a.row_to_col[i])];
  }
  return errors;
}

// Sorted index-wise pairing; shortfall padded at the cap.
inline std::vector<double> raw_errors(const DoaLabel& truth,
                                      const DoaLabel& est,
                                      double cap = kErrorCapDeg) {
  const std::size_t n = truth.thetas.size();
  if (n == 0) throw InvalidArgument("raw_errors: empty truth");
  const auto ti = detail::sorted_by_theta(truth.thetas);
  const auto ei = detail::sorted_by_theta(est.thetas);
  std::vector<double> errors(n, cap);
  for (std::size_t r = 0; r < std::min(n, est.thetas.size()); ++r)
    errors[r] = std::min(detail::pair_error(truth, ti[r], est, ei[r]), cap);
  return errors;
}

// Optimal SubPattern Assignment with cutoff c and order p. With
// m = |est| <= n = |truth| (sides swapped otherwise):
//   OSPA = ((1/n) (min over injections sum min(d, c)^p + c^p (n - m)))^(1/p)
inline double ospa(const DoaLabel& truth, const DoaLabel& est,
                   double c = kErrorCapDeg, int p = 1) {
  if (p != 1 && p != 2) throw InvalidArgument("ospa: order must be 1 or 2");
  const DoaLabel* big = &truth;
  const DoaLabel* small = &est;
  if (big->thetas.size() < small->thetas.size()) std::swap(big, small);
  const std::size_t n = big->thetas.size();
  const std::size_t m = small->thetas.size();
  if (n == 0) return 0.0;

  const double cp = std::pow(c, p);
  std::vector<double> cost(n * n, cp);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double d = std::min(detail::pair_error(*big, i, *small, j), c);
      cost[i * n + j] = std::pow(d, p);
    }
  const Assignment a = hungarian(cost, n);
  return std::pow(a.cost / static_cast<double>(n), 1.0 / p);
}

// Ceiling-index empirical quantile: 1-based element ceil(q * n) of the
// sorted sample.
inline double ecdf_quantile(std::vector<double> errors, double q) {
  if (errors.empty()) throw InvalidArgument("ecdf_quantile: empty sample");
  if (!(q > 0.0 && q < 1.0)) throw InvalidArgument("ecdf_quantile: q in (0,1)");
  std::sort(errors.begin(), errors.end());
  const std::size_t n = errors.size();
  std::size_t idx = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(n)));
  idx = std::min(std::max<std::size_t>(idx, 1), n);
  return errors[idx - 1];
}

struct MetricsReport {
  double miss_prob = 0.0;
  double ospa_linear = 0.0;
  double ospa_square = 0.0;
  double rmse_raw = 0.0, rmse_matched = 0.0;
  double mae_raw = 0.0, mae_matched = 0.0;
  double acc_raw = 0.0, acc_matched = 0.0;
  double ecdf_q10_raw = 0.0, ecdf_q90_raw = 0.0;
  double ecdf_q10_matched = 0.0, ecdf_q90_matched = 0.0;
  std::uint64_t trial_count = 0;
};

// Pools per-source errors across trials; OSPA is averaged per trial.
inline MetricsReport compute_report(const std::vector<DoaLabel>& truths,
                                    const std::vector<DoaLabel>& ests,
                                    const std::vector<char>& miss_flags,
                                    double cap = kErrorCapDeg,
                                    double tolerance = kAccuracyTolDeg) {
  const std::size_t trials = truths.size();
  if (trials == 0) throw InvalidArgument("compute_report: empty batch");
  if (ests.size() != trials || miss_flags.size() != trials)
    throw InvalidArgument("compute_report: batch size mismatch");

  std::vector<double> raw_pool, matched_pool;
  double ospa1 = 0.0, ospa2 = 0.0;
  std::size_t misses = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto raw = raw_errors(truths[t], ests[t], cap);
    const auto matched = match_errors(truths[t], ests[t], cap);
    raw_pool.insert(raw_pool.end(), raw.begin(), raw.end());
    matched_pool.insert(matched_pool.end(), matched.begin(), matched.end());
    ospa1 += ospa(truths[t], ests[t], cap, 1);
    ospa2 += ospa(truths[t], ests[t], cap, 2);
    if (miss_flags[t]) ++misses;
  }

  auto rmse = [](const std::vector<double>& e) {
    double s = 0.0;
    for (double v : e) s += v * v;
    return std::sqrt(s / static_cast<double>(e.size()));
  };
  auto mae = [](const std::vector<double>& e) {
    double s = 0.0;
    for (double v : e) s += v;
    return s / static_cast<double>(e.size());
  };
  auto acc = [tolerance](const std::vector<double>& e) {
    std::size_t ok = 0;
    for (double v : e)
      if (v <= tolerance) ++ok;
    return static_cast<double>(ok) / static_cast<double>(e.size());
  };

  MetricsReport r;
  r.trial_count = trials;
  r.miss_prob = static_cast<double>(misses) / static_cast<double>(trials);
  r.ospa_linear = ospa1 / static_cast<double>(trials);
  r.ospa_square = ospa2 / static_cast<double>(trials);
  r.rmse_raw = rmse(raw_pool);
  r.rmse_matched = rmse(matched_pool);
  r.mae_raw = mae(raw_pool);
  r.mae_matched = mae(matched_pool);
  r.acc_raw = acc(raw_pool);
  r.acc_matched = acc(matched_pool);
  r.ecdf_q10_raw = ecdf_quantile(raw_pool, 0.1);
  r.ecdf_q90_raw = ecdf_quantile(raw_pool, 0.9);
  r.ecdf_q10_matched = ecdf_quantile(matched_pool, 0.1);
  r.ecdf_q90_matched = ecdf_quantile(matched_pool, 0.9);
  return r;
}

inline nlohmann::json report_json(const MetricsReport& r,
                                  const std::string& method,
                                  const std::string& scenario,
                                  std::uint64_t seed,
                                  const std::string& config_hash) {
  return nlohmann::json{{"miss_prob", r.miss_prob},
                        {"ospa_linear", r.ospa_linear},
                        {"ospa_square", r.ospa_square},
                        {"rmse_raw", r.rmse_raw},
                        {"rmse_matched", r.rmse_matched},
                        {"mae_raw", r.mae_raw},
                        {"mae_matched", r.mae_matched},
                        {"acc_raw", r.acc_raw},
                        {"acc_matched", r.acc_matched},
                        {"ecdf_q10_raw", r.ecdf_q10_raw},
                        {"ecdf_q90_raw", r.ecdf_q90_raw},
                        {"ecdf_q10_matched", r.ecdf_q10_matched},
                        {"ecdf_q90_matched", r.ecdf_q90_matched},
                        {"trial_count", r.trial_count},
                        {"method", method},
                        {"scenario", scenario},
                        {"seed", seed},
                        {"config_hash", config_hash}};
}

}  // namespace doa
