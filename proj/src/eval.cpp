#include "tck/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "tck/rng.hpp"

namespace tck {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::pair<KpcaState, Eigen::MatrixXd> kpca_fit_impl(const GramMatrix& gram, int dim,
                                                    bool clip_dim) {
  const Eigen::MatrixXd& k = gram.entries;
  if (k.rows() != k.cols()) fail("kpca_fit expects an in-sample Gram matrix");
  const Eigen::Index n = k.rows();
  if (dim < 1 || dim > n) fail("embedding dimension out of range");

  KpcaState state;
  state.row_means = k.rowwise().mean();
  state.grand_mean = k.mean();

  Eigen::MatrixXd centered = k;
  centered.colwise() -= state.row_means;
  centered.rowwise() -= state.row_means.transpose();
  centered.array() += state.grand_mean;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(centered);
  if (solver.info() != Eigen::Success) fail("eigendecomposition failed");
  const Eigen::VectorXd evals = solver.eigenvalues();  // ascending
  const double trace = std::max(evals.array().abs().sum(), 0.0);

  int rank = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (evals(i) > 1e-10 * trace) ++rank;
  if (rank < dim) {
    if (!clip_dim)
      fail("requested embedding dimension " + std::to_string(dim) +
           " exceeds achievable rank " + std::to_string(rank));
    dim = rank;
  }
  if (dim == 0) fail("centered kernel has rank 0");

  state.dim = dim;
  state.eigenvalues.resize(dim);
  state.eigenvectors.resize(n, dim);
  for (int d = 0; d < dim; ++d) {
    const Eigen::Index src = n - 1 - d;  // descending order
    state.eigenvalues(d) = evals(src);
    Eigen::VectorXd vec = solver.eigenvectors().col(src);
    Eigen::Index argmax = 0;
    vec.array().abs().maxCoeff(&argmax);
    if (vec(argmax) < 0.0) vec = -vec;
    state.eigenvectors.col(d) = vec;
  }

  Eigen::MatrixXd embedding = state.eigenvectors;
  for (int d = 0; d < dim; ++d) embedding.col(d) *= std::sqrt(state.eigenvalues(d));
  return {std::move(state), std::move(embedding)};
}

struct SplitDataset {
  MtsDataset data;
  std::vector<int> labels;
};

SplitDataset subset(const MtsDataset& dataset, const std::vector<int>& indices) {
  SplitDataset out;
  out.data.variable_names = dataset.variable_names;
  for (int i : indices) {
    out.data.records.push_back(dataset.records[i]);
    out.labels.push_back(dataset.labels[i]);
    out.data.labels.push_back(dataset.labels[i]);
  }
  return out;
}

FoldMetrics run_split(const MtsDataset& dataset, const std::vector<int>& train_idx,
                      const std::vector<int>& test_idx, const EnsembleConfig& config,
                      const PipelineOptions& options, int positive_label,
                      std::uint64_t fold_seed) {
  SplitDataset train = subset(dataset, train_idx);
  SplitDataset test = subset(dataset, test_idx);

  EnsembleConfig cfg = config;
  cfg.seed = fold_seed;
  auto [trained, gram] = train_tck_im(train.data, cfg);
  auto [kpca, train_embed] = kpca_fit_impl(gram, options.embedding_dim, /*clip_dim=*/true);

  const int k = select_k_cv(train_embed, train.labels, options.k_grid, positive_label,
                            options.select_k_folds, derive_seed(fold_seed, 17));

  const GramMatrix cross = kernel_test(trained, test.data);
  const Eigen::MatrixXd test_embed = kpca_project(kpca, cross);
  const std::vector<int> pred = knn_classify(train_embed, train.labels, test_embed, k);
  return metrics(test.labels, pred, positive_label);
}

double fold_se(const std::vector<double>& values) {
  const size_t n = values.size();
  if (n < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<double>(n));
}

}  // namespace

void EvalReport::aggregate() {
  const size_t n = folds.size();
  if (n == 0) return;
  auto field = [&](double FoldMetrics::*member) {
    std::vector<double> vals;
    vals.reserve(n);
    for (const auto& f : folds) vals.push_back(f.*member);
    const double m = std::accumulate(vals.begin(), vals.end(), 0.0) / n;
    return std::make_pair(m, fold_se(vals));
  };
  std::tie(mean.sensitivity, stderr_.sensitivity) = field(&FoldMetrics::sensitivity);
  std::tie(mean.specificity, stderr_.specificity) = field(&FoldMetrics::specificity);
  std::tie(mean.precision, stderr_.precision) = field(&FoldMetrics::precision);
  std::tie(mean.f1, stderr_.f1) = field(&FoldMetrics::f1);
  std::tie(mean.accuracy, stderr_.accuracy) = field(&FoldMetrics::accuracy);
  for (const auto& f : folds) mean.degenerate = mean.degenerate || f.degenerate;
}

std::pair<KpcaState, Eigen::MatrixXd> kpca_fit(const GramMatrix& gram, int dim) {
  return kpca_fit_impl(gram, dim, /*clip_dim=*/false);
}

Eigen::MatrixXd kpca_project(const KpcaState& state, const GramMatrix& cross) {
  const Eigen::MatrixXd& k = cross.entries;
  if (k.rows() != state.row_means.size())
    fail("cross kernel rows do not match the training size");
  const Eigen::Index m = k.cols();
  Eigen::MatrixXd centered = k;
  const Eigen::RowVectorXd col_means = k.colwise().mean();
  centered.colwise() -= state.row_means;
  centered.rowwise() -= col_means;
  centered.array() += state.grand_mean;

  Eigen::MatrixXd out(m, state.dim);
  for (int d = 0; d < state.dim; ++d)
    out.col(d) = (centered.transpose() * state.eigenvectors.col(d)) /
                 std::sqrt(state.eigenvalues(d));
  return out;
}

std::vector<int> knn_classify(const Eigen::MatrixXd& train_embed,
                              const std::vector<int>& train_labels,
                              const Eigen::MatrixXd& test_embed, int k) {
  const Eigen::Index n = train_embed.rows();
  if (n == 0) fail("empty training set");
  if (k < 1 || k > n) fail("k out of range");
  if (static_cast<Eigen::Index>(train_labels.size()) != n) fail("label count mismatch");

  std::vector<int> pred(test_embed.rows());
  std::vector<std::pair<double, int>> dist(n);
  for (Eigen::Index q = 0; q < test_embed.rows(); ++q) {
    for (Eigen::Index i = 0; i < n; ++i)
      dist[i] = {(train_embed.row(i) - test_embed.row(q)).squaredNorm(), static_cast<int>(i)};
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());

    std::map<int, std::pair<int, double>> votes;  // label -> (count, summed distance)
    for (int j = 0; j < k; ++j) {
      auto& v = votes[train_labels[dist[j].second]];
      v.first += 1;
      v.second += std::sqrt(dist[j].first);
    }
    int best_label = votes.begin()->first;
    auto best = votes.begin()->second;
    for (const auto& [label, v] : votes) {
      if (v.first > best.first ||
          (v.first == best.first && (v.second < best.second ||
                                     (v.second == best.second && label < best_label)))) {
        best_label = label;
        best = v;
      }
    }
    pred[q] = best_label;
  }
  return pred;
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed) {
  if (folds < 2) fail("folds must be >= 2");
  std::map<int, std::vector<int>> by_label;
  for (size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(static_cast<int>(i));
  std::vector<int> assignment(labels.size(), 0);
  std::mt19937_64 gen(derive_seed(seed, 0xf01d));
  int offset = 0;
  for (auto& [label, idx] : by_label) {
    for (size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[static_cast<size_t>(uniform_int(gen, 0, static_cast<int>(i) - 1))]);
    for (size_t i = 0; i < idx.size(); ++i)
      assignment[idx[i]] = static_cast<int>((i + offset) % folds);
    offset += static_cast<int>(idx.size());
  }
  return assignment;
}

int minority_label(const std::vector<int>& labels) {
  std::map<int, int> counts;
  for (int y : labels) ++counts[y];
  int best = counts.begin()->first;
  for (const auto& [label, c] : counts)
    if (c < counts[best]) best = label;
  return best;
}

int select_k_cv(const Eigen::MatrixXd& embed, const std::vector<int>& labels,
                const std::vector<int>& k_grid, int positive_label, int folds,
                std::uint64_t seed) {
  if (k_grid.empty()) fail("empty k grid");
  if (k_grid.size() == 1) return k_grid.front();
  const auto assignment = stratified_folds(labels, folds, seed);

  int best_k = -1;
  double best_f1 = -1.0;
  for (int k : k_grid) {
    double total = 0.0;
    int used = 0;
    for (int f = 0; f < folds; ++f) {
      std::vector<int> tr, te;
      for (size_t i = 0; i < labels.size(); ++i)
        (assignment[i] == f ? te : tr).push_back(static_cast<int>(i));
      if (te.empty() || tr.empty() || k > static_cast<int>(tr.size())) continue;
      Eigen::MatrixXd etr(tr.size(), embed.cols()), ete(te.size(), embed.cols());
      std::vector<int> ltr, lte;
      for (size_t i = 0; i < tr.size(); ++i) {
        etr.row(i) = embed.row(tr[i]);
        ltr.push_back(labels[tr[i]]);
      }
      for (size_t i = 0; i < te.size(); ++i) {
        ete.row(i) = embed.row(te[i]);
        lte.push_back(labels[te[i]]);
      }
      const auto pred = knn_classify(etr, ltr, ete, k);
      total += metrics(lte, pred, positive_label).f1;
      ++used;
    }
    if (used == 0) continue;
    const double mean_f1 = total / used;
    if (mean_f1 > best_f1 + 1e-12) {  // ties keep the smaller k
      best_f1 = mean_f1;
      best_k = k;
    }
  }
  if (best_k < 0) fail("no feasible k in the grid");
  return best_k;
}

FoldMetrics metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                    int positive_label) {
  if (y_true.empty() || y_true.size() != y_pred.size()) fail("metrics: length mismatch");
  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (size_t i = 0; i < y_true.size(); ++i) {
    const bool actual = y_true[i] == positive_label;
    const bool predicted = y_pred[i] == positive_label;
    if (actual && predicted) ++tp;
    else if (!actual && predicted) ++fp;
    else if (actual && !predicted) ++fn;
    else ++tn;
  }
  FoldMetrics m;
  auto ratio = [&m](double num, double den) {
    if (den == 0.0) {
      m.degenerate = true;
      return 0.0;
    }
    return num / den;
  };
  m.sensitivity = ratio(tp, tp + fn);
  m.specificity = ratio(tn, tn + fp);
  m.precision = ratio(tp, tp + fp);
  m.f1 = (m.precision + m.sensitivity) > 0.0
             ? 2.0 * m.precision * m.sensitivity / (m.precision + m.sensitivity)
             : (m.degenerate = true, 0.0);
  m.accuracy = (tp + tn) / static_cast<double>(y_true.size());
  return m;
}

EvalReport evaluate_pipeline_kfold(const MtsDataset& dataset, const EnsembleConfig& config,
                                   const KfoldProtocol& protocol, const PipelineOptions& options,
                                   std::uint64_t seed) {
  if (!dataset.has_labels()) fail("evaluation requires labels");
  const int positive = options.positive_label > 0 ? options.positive_label
                                                  : minority_label(dataset.labels);
  const auto assignment = stratified_folds(dataset.labels, protocol.folds, seed);

  EvalReport report;
  for (int f = 0; f < protocol.folds; ++f) {
    std::vector<int> tr, te;
    for (size_t i = 0; i < dataset.labels.size(); ++i)
      (assignment[i] == f ? te : tr).push_back(static_cast<int>(i));
    if (te.empty()) continue;
    report.folds.push_back(
        run_split(dataset, tr, te, config, options, positive, derive_seed(seed, 100 + f)));
  }
  report.aggregate();
  return report;
}

EvalReport evaluate_pipeline_undersample(const MtsDataset& dataset, const EnsembleConfig& config,
                                         const UndersampleHoldoutProtocol& protocol,
                                         const PipelineOptions& options, std::uint64_t seed) {
  if (!dataset.has_labels()) fail("evaluation requires labels");
  const int positive = options.positive_label > 0 ? options.positive_label
                                                  : minority_label(dataset.labels);
  std::vector<int> pos_idx, neg_idx;
  for (size_t i = 0; i < dataset.labels.size(); ++i)
    (dataset.labels[i] == positive ? pos_idx : neg_idx).push_back(static_cast<int>(i));
  if (pos_idx.empty() || neg_idx.empty()) fail("undersampling needs both classes");

  EvalReport report;
  for (int rep = 0; rep < protocol.repeats; ++rep) {
    const std::uint64_t rep_seed = derive_seed(seed, 500 + rep);
    std::mt19937_64 gen(rep_seed);

    const int n_neg = std::min<int>(
        static_cast<int>(neg_idx.size()),
        static_cast<int>(std::lround(protocol.negatives_per_positive * pos_idx.size())));
    const auto pick = sample_without_replacement(gen, static_cast<int>(neg_idx.size()), n_neg);
    std::vector<int> pool = pos_idx;
    for (int p : pick) pool.push_back(neg_idx[p]);

    std::vector<int> pool_labels;
    for (int i : pool) pool_labels.push_back(dataset.labels[i]);
    const int holdout_folds =
        std::max(2, static_cast<int>(std::lround(1.0 / protocol.test_fraction)));
    const auto assignment = stratified_folds(pool_labels, holdout_folds, derive_seed(rep_seed, 3));

    std::vector<int> tr, te;
    for (size_t i = 0; i < pool.size(); ++i)
      (assignment[i] == 0 ? te : tr).push_back(pool[i]);
    report.folds.push_back(
        run_split(dataset, tr, te, config, options, positive, derive_seed(rep_seed, 7)));
  }
  report.aggregate();
  return report;
}

FoldMetrics evaluate_holdout(const MtsDataset& dataset, const EnsembleConfig& config,
                             const PipelineOptions& options, double test_fraction,
                             std::uint64_t seed) {
  if (!dataset.has_labels()) fail("evaluation requires labels");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("test fraction must be in (0,1)");
  const int positive = options.positive_label > 0 ? options.positive_label
                                                  : minority_label(dataset.labels);
  const int folds = std::max(2, static_cast<int>(std::lround(1.0 / test_fraction)));
  const auto assignment = stratified_folds(dataset.labels, folds, seed);
  std::vector<int> tr, te;
  for (size_t i = 0; i < dataset.labels.size(); ++i)
    (assignment[i] == 0 ? te : tr).push_back(static_cast<int>(i));
  return run_split(dataset, tr, te, config, options, positive, derive_seed(seed, 7));
}

void export_embedding_csv(const Eigen::MatrixXd& embedding, const std::vector<std::string>& ids,
                          const std::vector<int>& labels, const std::string& path) {
  std::ofstream f(path);
  if (!f) fail("cannot open '" + path + "' for writing");
  f << "id";
  for (Eigen::Index d = 0; d < embedding.cols(); ++d) f << ",dim" << (d + 1);
  f << ",label\n";
  char buf[64];
  for (Eigen::Index i = 0; i < embedding.rows(); ++i) {
    f << (i < static_cast<Eigen::Index>(ids.size()) ? ids[i] : std::to_string(i));
    for (Eigen::Index d = 0; d < embedding.cols(); ++d) {
      std::snprintf(buf, sizeof(buf), "%.17g", embedding(i, d));
      f << "," << buf;
    }
    f << ",";
    if (i < static_cast<Eigen::Index>(labels.size())) f << labels[i];
    f << "\n";
  }
  if (!f) fail("write failure on '" + path + "'");
}

void export_embedding_svg(const Eigen::MatrixXd& embedding, const std::vector<int>& labels,
                          const std::string& path) {
  if (embedding.cols() < 2) fail("svg scatter needs an embedding of dimension >= 2");
  std::ofstream f(path);
  if (!f) fail("cannot open '" + path + "' for writing");

  const double w = 640, h = 480, margin = 40;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  if (embedding.rows() > 0) {
    x_min = embedding.col(0).minCoeff();
    x_max = embedding.col(0).maxCoeff();
    y_min = embedding.col(1).minCoeff();
    y_max = embedding.col(1).maxCoeff();
  }
  if (x_max - x_min < 1e-12) x_max = x_min + 1.0;
  if (y_max - y_min < 1e-12) y_max = y_min + 1.0;
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                           "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};

  f << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  f << "  <rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h
    << "\" fill=\"white\" stroke=\"black\"/>\n";
  for (Eigen::Index i = 0; i < embedding.rows(); ++i) {
    const double px = margin + (embedding(i, 0) - x_min) / (x_max - x_min) * (w - 2 * margin);
    const double py = h - margin - (embedding(i, 1) - y_min) / (y_max - y_min) * (h - 2 * margin);
    const int label = i < static_cast<Eigen::Index>(labels.size()) ? labels[i] : 0;
    const char* color = palette[((label % 8) + 8) % 8];
    f << "  <circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"3\" fill=\"" << color
      << "\" fill-opacity=\"0.8\"/>\n";
  }
  f << "</svg>\n";
  if (!f) fail("write failure on '" + path + "'");
}

void save_report(const EvalReport& report, const std::string& path) {
  std::ofstream f(path);
  if (!f) fail("cannot open '" + path + "' for writing");
  char buf[160];
  auto line = [&](const char* name, double mean, double se) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f\n", name, mean, se);
    f << buf;
  };
  line("sensitivity", report.mean.sensitivity, report.stderr_.sensitivity);
  line("specificity", report.mean.specificity, report.stderr_.specificity);
  line("precision", report.mean.precision, report.stderr_.precision);
  line("f1", report.mean.f1, report.stderr_.f1);
  line("accuracy", report.mean.accuracy, report.stderr_.accuracy);
  if (!f) fail("write failure on '" + path + "'");
}

}  // namespace tck
