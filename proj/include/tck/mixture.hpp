#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "tck/dataset.hpp"

namespace tck {

inline constexpr double kBetaClamp = 1e-6;  // stored beta stays in [eps, 1-eps]

struct MixtureHyperparams {
  double a0 = 0.1;   // prior kernel decay
  double b0 = 0.1;   // prior kernel scale
  double c0 = 1.0;   // Beta prior
  double d0 = 1.0;
  double n0 = 0.01;  // variance prior strength (>= 0)
};

/// Empirical prior statistics plus the squared-exponential kernel matrix
/// backing the mean prior. The per-variable prior covariance is
/// S_v = s_v * kernel; its inverse and log-determinant are cached.
struct PriorStats {
  Eigen::MatrixXd mean;        // V x T, per-timestep observed means
  Eigen::VectorXd stddev;      // length V, pooled observed stds (positive)
  Eigen::MatrixXd kernel;      // T x T, jittered
  Eigen::MatrixXd kernel_inv;  // T x T
  double kernel_logdet = 0.0;
};

struct MixtureParams {
  Eigen::VectorXd theta;             // G, simplex
  std::vector<Eigen::MatrixXd> mu;   // G matrices of V x T
  Eigen::MatrixXd sigma2;            // G x V, positive
  std::vector<Eigen::MatrixXd> beta; // G matrices of V x T; empty when the
                                     // Bernoulli mode is disabled

  int n_components() const { return static_cast<int>(theta.size()); }
  bool has_bernoulli() const { return !beta.empty(); }
};

/// Row-stochastic N x G responsibilities.
using Posteriors = Eigen::MatrixXd;

struct StoppingRule {
  int max_iterations = 25;
  double rel_tolerance = 1e-6;
};

struct FitResult {
  MixtureParams params;
  PriorStats priors;
  Posteriors posteriors;           // E-step under the final params
  std::vector<double> objective;   // penalized log posterior per iteration
  int iterations = 0;
};

// --- Operations ------------------------------------------------------------

PriorStats compute_prior_stats(const MtsDataset& dataset, double a0, double b0);

// Sum of Gaussian log factors over observed cells plus, when beta is
// non-null, Bernoulli log factors over all cells.
double log_component_density(const MtsRecord& record,
                             const Eigen::MatrixXd& mu,
                             const Eigen::VectorXd& sigma2,
                             const Eigen::MatrixXd* beta);

Posteriors e_step(const MtsDataset& dataset, const MixtureParams& params);

MixtureParams m_step(const MtsDataset& dataset, const Posteriors& posteriors,
                     const PriorStats& priors, const MixtureHyperparams& hp,
                     const MixtureParams& previous);

// Observed-data log-likelihood plus log priors (monitored MAP-EM objective).
double penalized_log_posterior(const MtsDataset& dataset, const MixtureParams& params,
                               const PriorStats& priors, const MixtureHyperparams& hp);

MixtureParams initialize_params(const MtsDataset& dataset, int n_components,
                                const PriorStats& priors, const MixtureHyperparams& hp,
                                bool use_bernoulli, std::uint64_t seed);

FitResult fit_map_em(const MtsDataset& dataset, int n_components,
                     const MixtureHyperparams& hp, const StoppingRule& stop,
                     std::uint64_t seed, bool use_bernoulli = true);

}  // namespace tck
