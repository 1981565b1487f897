#pragma once
#include <cmath>
#include <vector>

#include "doa/error.hpp"
#include "doa/hungarian.hpp"

namespace doa {

// Assignment truth index -> estimate index minimizing the summed squared
// error; ties resolve to whichever optimum the solver reaches first.
inline std::vector<int> pit_assignment(const std::vector<double>& theta,
                                       const std::vector<double>& theta_hat,
                                       const std::vector<double>* phi = nullptr,
                                       const std::vector<double>* phi_hat =
                                           nullptr) {
  const std::size_t k = theta.size();
  if (theta_hat.size() != k)
    throw InvalidArgument("pit: angle count mismatch");
  if ((phi == nullptr) != (phi_hat == nullptr))
    throw InvalidArgument("pit: inconsistent 2-D arguments");
  if (phi && (phi->size() != k || phi_hat->size() != k))
    throw InvalidArgument("pit: angle count mismatch");

  std::vector<double> cost(k * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double dt = theta[i] - theta_hat[j];
      double c = dt * dt;
      if (phi) {
        const double dp = (*phi)[i] - (*phi_hat)[j];
        c += dp * dp;
      }
      cost[i * k + j] = c;
    }
  return hungarian(cost, k).row_to_col;
}

// min over permutations P of sqrt(|theta - P theta_hat|^2 / K)
inline double pit_loss_1d(const std::vector<double>& theta,
                          const std::vector<double>& theta_hat) {
  const auto perm = pit_assignment(theta, theta_hat);
  double ss = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double d = theta[i] - theta_hat[static_cast<std::size_t>(perm[i])];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(theta.size()));
}

// One shared permutation couples azimuth and elevation:
// min over P of sqrt((|theta - P theta_hat|^2 + |phi - P phi_hat|^2) / 2K)
inline double pit_loss_2d(const std::vector<double>& theta,
                          const std::vector<double>& phi,
                          const std::vector<double>& theta_hat,
                          const std::vector<double>& phi_hat) {
  const auto perm = pit_assignment(theta, theta_hat, &phi, &phi_hat);
  double ss = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const std::size_t j = static_cast<std::size_t>(perm[i]);
    const double dt = theta[i] - theta_hat[j];
    const double dp = phi[i] - phi_hat[j];
    ss += dt * dt + dp * dp;
  }
  return std::sqrt(ss / (2.0 * static_cast<double>(theta.size())));
}

}  // namespace doa
