#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "tck/dataset.hpp"
#include "tck/kernel.hpp"

namespace tck {

/// Centering statistics and retained eigenpairs of the double-centered
/// training Gram matrix.
struct KpcaState {
  Eigen::VectorXd row_means;  // length N
  double grand_mean = 0.0;
  Eigen::VectorXd eigenvalues;   // d, descending
  Eigen::MatrixXd eigenvectors;  // N x d
  int dim = 0;
};

struct FoldMetrics {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  bool degenerate = false;  // some 0/0 ratio was reported as 0
};

struct EvalReport {
  std::vector<FoldMetrics> folds;
  FoldMetrics mean;
  FoldMetrics stderr_;  // standard error over folds/repeats

  void aggregate();
};

struct KfoldProtocol {
  int folds = 5;
};

struct UndersampleHoldoutProtocol {
  double negatives_per_positive = 2.0;
  double test_fraction = 0.2;
  int repeats = 10;
};

struct PipelineOptions {
  int embedding_dim = 3;
  std::vector<int> k_grid = {1, 3, 5, 7, 9, 11, 15, 21};
  int select_k_folds = 5;
  int positive_label = -1;  // -1 = minority class
};

// --- Operations ------------------------------------------------------------

std::pair<KpcaState, Eigen::MatrixXd> kpca_fit(const GramMatrix& gram, int dim);

Eigen::MatrixXd kpca_project(const KpcaState& state, const GramMatrix& cross);

std::vector<int> knn_classify(const Eigen::MatrixXd& train_embed,
                              const std::vector<int>& train_labels,
                              const Eigen::MatrixXd& test_embed, int k);

int select_k_cv(const Eigen::MatrixXd& embed, const std::vector<int>& labels,
                const std::vector<int>& k_grid, int positive_label,
                int folds = 5, std::uint64_t seed = 0);

FoldMetrics metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                    int positive_label);

EvalReport evaluate_pipeline_kfold(const MtsDataset& dataset, const EnsembleConfig& config,
                                   const KfoldProtocol& protocol, const PipelineOptions& options,
                                   std::uint64_t seed);

EvalReport evaluate_pipeline_undersample(const MtsDataset& dataset, const EnsembleConfig& config,
                                         const UndersampleHoldoutProtocol& protocol,
                                         const PipelineOptions& options, std::uint64_t seed);

// Single stratified train/test split through the full kernel+KPCA+kNN
// pipeline; used by the benchmark grid.
FoldMetrics evaluate_holdout(const MtsDataset& dataset, const EnsembleConfig& config,
                             const PipelineOptions& options, double test_fraction,
                             std::uint64_t seed);

// Stratified fold assignment: returns per-record fold index in [0, folds).
std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed);

int minority_label(const std::vector<int>& labels);

void export_embedding_csv(const Eigen::MatrixXd& embedding, const std::vector<std::string>& ids,
                          const std::vector<int>& labels, const std::string& path);

void export_embedding_svg(const Eigen::MatrixXd& embedding, const std::vector<int>& labels,
                          const std::string& path);

void save_report(const EvalReport& report, const std::string& path);

}  // namespace tck
