#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "tck/dataset.hpp"
#include "tck/mixture.hpp"

namespace tck {

enum class KernelMode { IM, TCK, B, ZERO };

std::string to_string(KernelMode mode);
KernelMode kernel_mode_from_string(const std::string& name);

struct HyperparamRanges {
  double a0_min = 0.001, a0_max = 1.0;
  double b0_min = 0.005, b0_max = 0.2;
  double n0_min = 0.001, n0_max = 0.2;
  // c0, d0 are sampled from [cd_min/N, cd_max/N].
  double cd_min = 0.1, cd_max = 2.0;
};

struct EnsembleConfig {
  int q_inits = 15;            // Q
  int components_min = -1;     // I_C lower bound; -1 = max(2, ceil(N/200))
  int components_max = -1;     // I_C upper bound; -1 = components_min + 20
  double subsample_fraction = 0.8;
  int min_segment_length = 6;
  int min_attributes = 1;
  HyperparamRanges ranges;
  std::uint64_t seed = 0;
  KernelMode mode = KernelMode::IM;
  int workers = 1;
  StoppingRule stopping;

  std::pair<int, int> component_range(Eigen::Index n) const;
};

/// One randomized base model: its restriction indices, hyperparameters and,
/// once trained, fitted parameters plus posteriors for every training record.
struct BaseModelSpec {
  int q1 = 0;                 // initialization index
  int n_components = 0;       // q2
  MixtureHyperparams hp;
  int t_start = 0;
  int t_len = 0;
  std::vector<int> attributes;
  std::vector<int> samples;   // training subset, indices into the dataset
  std::uint64_t model_seed = 0;
};

struct BaseModelRealization {
  BaseModelSpec spec;
  PriorStats priors;
  MixtureParams params;
  Eigen::MatrixXd train_posteriors;  // N x G, all training records
  int iterations = 0;
  double objective = 0.0;  // final penalized log posterior
  bool ok = false;
  std::string error;
};

struct GramMatrix {
  Eigen::MatrixXd entries;  // N x N in-sample, N x M cross
  bool in_sample = true;
  int models = 0;           // successful base models (the diagonal value)
};

struct TrainedKernel {
  KernelMode mode = KernelMode::IM;
  StandardizationStats stats;   // from the raw training data
  Eigen::Index n_variables = 0; // raw V, before mode preprocessing
  Eigen::Index length = 0;
  Eigen::Index n_train = 0;
  std::vector<BaseModelRealization> models;

  int successful_models() const;
};

// --- Operations ------------------------------------------------------------

std::vector<BaseModelSpec> sample_ensemble_plan(const EnsembleConfig& config,
                                                Eigen::Index n, Eigen::Index v,
                                                Eigen::Index t);

// Standardizes, applies the mode's preprocessing (indicator concatenation for
// B, zero imputation for ZERO), fits every base model on its restricted view
// and accumulates the normalized-posterior cosine Gram. Failed models are
// skipped with a warning.
std::pair<TrainedKernel, GramMatrix> train_tck_im(const MtsDataset& dataset,
                                                  const EnsembleConfig& config);

// Out-of-sample kernel between the N training records and M test records.
GramMatrix kernel_test(const TrainedKernel& trained, const MtsDataset& test);

// Recomputes the in-sample Gram from the stored training posteriors.
GramMatrix in_sample_gram(const TrainedKernel& trained);

GramMatrix linear_kernel(const MtsDataset& dataset);

void save_model(const TrainedKernel& trained, const std::string& path);
TrainedKernel load_model(const std::string& path);

void save_gram(const GramMatrix& gram, const std::string& path);
GramMatrix load_gram(const std::string& path);

}  // namespace tck
