#include "tck/mixture.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

#include "tck/rng.hpp"

namespace tck {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

}  // namespace

PriorStats compute_prior_stats(const MtsDataset& dataset, double a0, double b0) {
  if (!(a0 > 0.0) || !(b0 > 0.0)) fail("prior kernel hyperparameters must be positive");
  const Eigen::Index v = dataset.n_variables();
  const Eigen::Index t = dataset.length();

  PriorStats out;
  out.mean.resize(v, t);
  out.stddev.resize(v);

  for (Eigen::Index i = 0; i < v; ++i) {
    double pooled_sum = 0.0, pooled_sumsq = 0.0;
    std::int64_t pooled_count = 0;
    Eigen::VectorXd col_sum = Eigen::VectorXd::Zero(t);
    Eigen::VectorXd col_count = Eigen::VectorXd::Zero(t);
    for (const auto& rec : dataset.records)
      for (Eigen::Index j = 0; j < t; ++j)
        if (rec.mask(i, j)) {
          const double x = rec.values(i, j);
          pooled_sum += x;
          pooled_sumsq += x * x;
          ++pooled_count;
          col_sum(j) += x;
          col_count(j) += 1.0;
        }
    if (pooled_count == 0)
      fail("variable " + std::to_string(i) + " has no observed cells");
    const double pooled_mean = pooled_sum / pooled_count;
    const double var = std::max(0.0, pooled_sumsq / pooled_count - pooled_mean * pooled_mean);
    out.stddev(i) = var > 0.0 ? std::sqrt(var) : 1.0;
    for (Eigen::Index j = 0; j < t; ++j)
      out.mean(i, j) = col_count(j) > 0.0 ? col_sum(j) / col_count(j) : pooled_mean;
  }

  out.kernel.resize(t, t);
  for (Eigen::Index r = 0; r < t; ++r)
    for (Eigen::Index c = 0; c < t; ++c) {
      const double d = static_cast<double>(r - c);
      out.kernel(r, c) = b0 * std::exp(-a0 * d * d);
    }
  out.kernel.diagonal().array() += 1e-8 * b0;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(out.kernel);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    fail("prior kernel matrix is not positive definite after jitter");
  out.kernel_inv = ldlt.solve(Eigen::MatrixXd::Identity(t, t));
  out.kernel_logdet = ldlt.vectorD().array().log().sum();
  return out;
}

double log_component_density(const MtsRecord& record,
                             const Eigen::MatrixXd& mu,
                             const Eigen::VectorXd& sigma2,
                             const Eigen::MatrixXd* beta) {
  const Eigen::Index v = mu.rows();
  const Eigen::Index t = mu.cols();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v; ++i) {
    const double s2 = sigma2(i);
    if (!(s2 > 0.0)) fail("non-positive variance");
    const double log_norm = -0.5 * (kLog2Pi + std::log(s2));
    const double inv2s2 = 0.5 / s2;
    for (Eigen::Index j = 0; j < t; ++j) {
      if (record.mask(i, j)) {
        const double x = record.values(i, j);
        if (!std::isfinite(x)) fail("non-finite observed value in record " + record.id);
        const double d = x - mu(i, j);
        acc += log_norm - d * d * inv2s2;
      }
      if (beta) {
        const double b = (*beta)(i, j);
        acc += record.mask(i, j) ? std::log(b) : std::log1p(-b);
      }
    }
  }
  return acc;
}

Posteriors e_step(const MtsDataset& dataset, const MixtureParams& params) {
  const int g_count = params.n_components();
  const Eigen::Index n = dataset.size();
  Posteriors pi(n, g_count);
  Eigen::VectorXd log_theta = params.theta.array().max(0.0).log().matrix();

  for (Eigen::Index rec_i = 0; rec_i < n; ++rec_i) {
    Eigen::VectorXd logs(g_count);
    for (int g = 0; g < g_count; ++g)
      logs(g) = log_theta(g) +
                log_component_density(dataset.records[rec_i], params.mu[g],
                                      params.sigma2.row(g).transpose(),
                                      params.has_bernoulli() ? &params.beta[g] : nullptr);
    const double m = logs.maxCoeff();
    if (!(m > -kInf))
      fail("posterior underflow for record " + dataset.records[rec_i].id);
    const Eigen::ArrayXd w = (logs.array() - m).exp();
    pi.row(rec_i) = (w / w.sum()).matrix().transpose();
  }
  return pi;
}

MixtureParams m_step(const MtsDataset& dataset, const Posteriors& posteriors,
                     const PriorStats& priors, const MixtureHyperparams& hp,
                     const MixtureParams& previous) {
  const int g_count = previous.n_components();
  const Eigen::Index n = dataset.size();
  const Eigen::Index v = priors.mean.rows();
  const Eigen::Index t = priors.mean.cols();
  const bool bern = previous.has_bernoulli();

  MixtureParams out;
  out.theta.resize(g_count);
  out.mu.assign(g_count, Eigen::MatrixXd(v, t));
  out.sigma2.resize(g_count, v);
  if (bern) out.beta.assign(g_count, Eigen::MatrixXd(v, t));

  for (int g = 0; g < g_count; ++g) {
    const double pi_sum = posteriors.col(g).sum();

    for (Eigen::Index i = 0; i < v; ++i) {
      // mu: T x T linear system with the previous iteration's variance.
      const double inv_s2_prev = 1.0 / previous.sigma2(g, i);
      Eigen::VectorXd weight = Eigen::VectorXd::Zero(t);   // sum_n pi r
      Eigen::VectorXd wx = Eigen::VectorXd::Zero(t);       // sum_n pi r x
      for (Eigen::Index rec_i = 0; rec_i < n; ++rec_i) {
        const double p = posteriors(rec_i, g);
        const auto& rec = dataset.records[rec_i];
        for (Eigen::Index j = 0; j < t; ++j)
          if (rec.mask(i, j)) {
            weight(j) += p;
            wx(j) += p * rec.values(i, j);
          }
      }
      Eigen::MatrixXd lhs = priors.kernel_inv / priors.stddev(i);
      lhs.diagonal() += inv_s2_prev * weight;
      const Eigen::VectorXd rhs =
          (priors.kernel_inv / priors.stddev(i)) * priors.mean.row(i).transpose() +
          inv_s2_prev * wx;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(lhs);
      if (ldlt.info() != Eigen::Success)
        fail("singular mean-update system for component " + std::to_string(g) +
             ", variable " + std::to_string(i));
      out.mu[g].row(i) = ldlt.solve(rhs).transpose();

      // sigma^2 with the freshly updated mu.
      double ss = 0.0, w_total = 0.0;
      for (Eigen::Index rec_i = 0; rec_i < n; ++rec_i) {
        const double p = posteriors(rec_i, g);
        const auto& rec = dataset.records[rec_i];
        for (Eigen::Index j = 0; j < t; ++j)
          if (rec.mask(i, j)) {
            const double d = rec.values(i, j) - out.mu[g](i, j);
            ss += p * d * d;
            w_total += p;
          }
      }
      const double s_v2 = priors.stddev(i) * priors.stddev(i);
      const double denom = hp.n0 + w_total;
      out.sigma2(g, i) = denom > 0.0 ? (hp.n0 * s_v2 + ss) / denom : s_v2;
      out.sigma2(g, i) = std::max(out.sigma2(g, i), 1e-12);

      if (bern) {
        for (Eigen::Index j = 0; j < t; ++j) {
          double obs_weight = 0.0;
          for (Eigen::Index rec_i = 0; rec_i < n; ++rec_i)
            if (dataset.records[rec_i].mask(i, j)) obs_weight += posteriors(rec_i, g);
          const double p = hp.c0 - 1.0 + obs_weight;
          const double q = hp.d0 - 1.0 + (pi_sum - obs_weight);
          double b;
          if (p > 0.0 && q > 0.0) {
            b = std::clamp(p / (p + q), kBetaClamp, 1.0 - kBetaClamp);
          } else {
            // Beta concentrations below 1 push the MAP to the boundary.
            b = p < q ? kBetaClamp : 1.0 - kBetaClamp;
          }
          out.beta[g](i, j) = b;
        }
      }
    }
    out.theta(g) = pi_sum / static_cast<double>(n);
  }
  return out;
}

double penalized_log_posterior(const MtsDataset& dataset, const MixtureParams& params,
                               const PriorStats& priors, const MixtureHyperparams& hp) {
  const int g_count = params.n_components();
  const Eigen::Index v = priors.mean.rows();
  const Eigen::Index t = priors.mean.cols();

  double loglik = 0.0;
  for (const auto& rec : dataset.records) {
    Eigen::VectorXd logs(g_count);
    for (int g = 0; g < g_count; ++g)
      logs(g) = std::log(std::max(params.theta(g), 0.0)) +
                log_component_density(rec, params.mu[g], params.sigma2.row(g).transpose(),
                                      params.has_bernoulli() ? &params.beta[g] : nullptr);
    const double m = logs.maxCoeff();
    loglik += m + std::log((logs.array() - m).exp().sum());
  }

  double logprior = 0.0;
  for (int g = 0; g < g_count; ++g) {
    for (Eigen::Index i = 0; i < v; ++i) {
      const double s_v = priors.stddev(i);
      const Eigen::VectorXd diff = params.mu[g].row(i).transpose() - priors.mean.row(i).transpose();
      const double quad = diff.dot((priors.kernel_inv * diff)) / s_v;
      logprior += -0.5 * quad -
                  0.5 * (static_cast<double>(t) * (kLog2Pi + std::log(s_v)) + priors.kernel_logdet);
      const double s2 = params.sigma2(g, i);
      logprior += -(hp.n0 / 2.0) * std::log(s2) - hp.n0 * s_v * s_v / (2.0 * s2);
      if (params.has_bernoulli())
        for (Eigen::Index j = 0; j < t; ++j) {
          const double b = params.beta[g](i, j);
          logprior += (hp.c0 - 1.0) * std::log(b) + (hp.d0 - 1.0) * std::log1p(-b);
        }
    }
  }
  return loglik + logprior;
}

MixtureParams initialize_params(const MtsDataset& dataset, int n_components,
                                const PriorStats& priors, const MixtureHyperparams& hp,
                                bool use_bernoulli, std::uint64_t seed) {
  const Eigen::Index n = dataset.size();
  const Eigen::Index v = priors.mean.rows();
  const Eigen::Index t = priors.mean.cols();
  std::mt19937_64 gen(seed);

  MixtureParams params;
  params.theta = Eigen::VectorXd::Constant(n_components, 1.0 / n_components);
  params.sigma2.resize(n_components, v);
  for (int g = 0; g < n_components; ++g)
    params.sigma2.row(g) = (priors.stddev.array() * priors.stddev.array()).transpose();

  // Anchor component means on distinct records, masked cells filled from the
  // empirical means. Falls back to replacement when G exceeds N.
  std::vector<int> anchors;
  if (n_components <= n) {
    anchors = sample_without_replacement(gen, static_cast<int>(n), n_components);
  } else {
    for (int g = 0; g < n_components; ++g)
      anchors.push_back(static_cast<int>(uniform_int(gen, 0, n - 1)));
  }
  params.mu.reserve(n_components);
  for (int g = 0; g < n_components; ++g) {
    const auto& rec = dataset.records[anchors[g]];
    Eigen::MatrixXd mu = priors.mean;
    for (Eigen::Index i = 0; i < v; ++i)
      for (Eigen::Index j = 0; j < t; ++j)
        if (rec.mask(i, j)) mu(i, j) = rec.values(i, j);
    params.mu.push_back(std::move(mu));
  }

  if (use_bernoulli) {
    const double prior_mean =
        std::clamp(hp.c0 / (hp.c0 + hp.d0), kBetaClamp, 1.0 - kBetaClamp);
    params.beta.reserve(n_components);
    for (int g = 0; g < n_components; ++g) {
      Eigen::MatrixXd beta(v, t);
      for (Eigen::Index i = 0; i < v; ++i)
        for (Eigen::Index j = 0; j < t; ++j)
          beta(i, j) = std::clamp(prior_mean * uniform(gen, 0.95, 1.05),
                                  kBetaClamp, 1.0 - kBetaClamp);
      params.beta.push_back(std::move(beta));
    }
  }
  return params;
}

FitResult fit_map_em(const MtsDataset& dataset, int n_components,
                     const MixtureHyperparams& hp, const StoppingRule& stop,
                     std::uint64_t seed, bool use_bernoulli) {
  if (n_components < 1) fail("n_components must be >= 1");
  if (dataset.records.empty()) fail("cannot fit an empty dataset");
  if (n_components > dataset.size())
    std::cerr << "warning: G=" << n_components << " exceeds N=" << dataset.size() << "\n";

  FitResult result;
  result.priors = compute_prior_stats(dataset, hp.a0, hp.b0);
  const PriorStats& priors = result.priors;
  result.params = initialize_params(dataset, n_components, priors, hp, use_bernoulli, seed);

  double prev_obj = -kInf;
  for (int iter = 0; iter < stop.max_iterations; ++iter) {
    const Posteriors pi = e_step(dataset, result.params);
    result.params = m_step(dataset, pi, priors, hp, result.params);
    const double obj = penalized_log_posterior(dataset, result.params, priors, hp);
    result.objective.push_back(obj);
    result.iterations = iter + 1;
    if (std::isfinite(prev_obj) &&
        std::abs(obj - prev_obj) < stop.rel_tolerance * (std::abs(prev_obj) + 1e-12))
      break;
    prev_obj = obj;
  }
  result.posteriors = e_step(dataset, result.params);
  return result;
}

}  // namespace tck
