#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "tck/eval.hpp"
#include "tck/rng.hpp"
#include "tck/synth.hpp"
#include "test_util.hpp"

using namespace tck;

namespace {

// PSD Gram built from explicit feature vectors so eigenstructure has a
// ground truth.
GramMatrix feature_gram(const Eigen::MatrixXd& x) {
  GramMatrix g;
  g.entries = x * x.transpose();
  g.in_sample = true;
  g.models = 1;
  return g;
}

Eigen::MatrixXd random_features(int n, int d, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = normal01(gen);
  return x;
}

}  // namespace

TEST_CASE("KPCA reconstructs the double-centered Gram at full rank") {
  const int n = 12, d = 4;
  const Eigen::MatrixXd x = random_features(n, d, 3);
  const GramMatrix gram = feature_gram(x);
  const auto [state, embed] = kpca_fit(gram, d);
  REQUIRE(state.dim == d);
  // independent centering oracle
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  const Eigen::MatrixXd centered =
      gram.entries - ones * gram.entries - gram.entries * ones + ones * gram.entries * ones;
  const Eigen::MatrixXd recon = state.eigenvectors *
                                state.eigenvalues.asDiagonal() *
                                state.eigenvectors.transpose();
  CHECK((centered - recon).cwiseAbs().maxCoeff() < 1e-8);
  // embedding gram equals the centered gram
  CHECK((embed * embed.transpose() - centered).cwiseAbs().maxCoeff() < 1e-8);
  // eigenvalues descending and positive
  for (int i = 1; i < d; ++i) CHECK(state.eigenvalues(i) <= state.eigenvalues(i - 1));
  CHECK(state.eigenvalues(d - 1) > 0.0);
}

TEST_CASE("projecting the training columns reproduces the embedding") {
  const Eigen::MatrixXd x = random_features(15, 3, 9);
  const GramMatrix gram = feature_gram(x);
  const auto [state, embed] = kpca_fit(gram, 3);
  GramMatrix cross;
  cross.entries = gram.entries;
  cross.in_sample = false;
  cross.models = gram.models;
  const Eigen::MatrixXd projected = kpca_project(state, cross);
  CHECK((projected - embed).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("KPCA truncates to the requested dimension") {
  const Eigen::MatrixXd x = random_features(10, 5, 21);
  const auto [state, embed] = kpca_fit(feature_gram(x), 2);
  CHECK(state.dim == 2);
  CHECK(embed.cols() == 2);
}

TEST_CASE("kNN with k=1 memorizes distinct training points") {
  const Eigen::MatrixXd x = random_features(20, 3, 33);
  std::vector<int> labels;
  for (int i = 0; i < 20; ++i) labels.push_back(1 + i % 3);
  const auto pred = knn_classify(x, labels, x, 1);
  CHECK(pred == labels);
}

TEST_CASE("kNN vote ties break deterministically") {
  Eigen::MatrixXd train(2, 1);
  train << 0.0, 2.0;
  Eigen::MatrixXd test(1, 1);
  test << 0.9;  // closer to label 1
  CHECK(knn_classify(train, {1, 2}, test, 2)[0] == 1);
  test << 1.1;
  CHECK(knn_classify(train, {1, 2}, test, 2)[0] == 2);
  test << 1.0;  // equidistant: smaller label wins
  CHECK(knn_classify(train, {1, 2}, test, 2)[0] == 1);
}

TEST_CASE("classification metrics match the confusion-matrix fixture") {
  // TP=3 FP=1 FN=1 TN=5 with positive label 1
  const std::vector<int> y_true = {1, 1, 1, 1, 2, 2, 2, 2, 2, 2};
  const std::vector<int> y_pred = {1, 1, 1, 2, 1, 2, 2, 2, 2, 2};
  const FoldMetrics m = metrics(y_true, y_pred, 1);
  CHECK(std::abs(m.sensitivity - 0.75) < 1e-12);
  CHECK(std::abs(m.specificity - 5.0 / 6.0) < 1e-12);
  CHECK(std::abs(m.precision - 0.75) < 1e-12);
  CHECK(std::abs(m.f1 - 0.75) < 1e-12);
  CHECK(std::abs(m.accuracy - 0.8) < 1e-12);
  CHECK_FALSE(m.degenerate);
}

TEST_CASE("degenerate ratios report zero and set the flag") {
  const FoldMetrics m = metrics({2, 2}, {2, 2}, 1);  // no positives anywhere
  CHECK(m.sensitivity == 0.0);
  CHECK(m.precision == 0.0);
  CHECK(m.f1 == 0.0);
  CHECK(m.accuracy == 1.0);
  CHECK(m.degenerate);
}

TEST_CASE("stratified folds balance every label") {
  std::vector<int> labels;
  for (int i = 0; i < 30; ++i) labels.push_back(i < 20 ? 1 : 2);
  const auto folds = stratified_folds(labels, 5, 7);
  REQUIRE(folds.size() == 30);
  for (int f = 0; f < 5; ++f) {
    int pos = 0, neg = 0;
    for (int i = 0; i < 30; ++i)
      if (folds[i] == f) (labels[i] == 1 ? pos : neg)++;
    CHECK(pos == 4);
    CHECK(neg == 2);
  }
}

TEST_CASE("minority label and k selection basics") {
  CHECK(minority_label({1, 1, 1, 2, 2}) == 2);
  const Eigen::MatrixXd x = random_features(24, 2, 77);
  std::vector<int> labels;
  for (int i = 0; i < 24; ++i) labels.push_back(1 + i % 2);
  const int k = select_k_cv(x, labels, {1, 3, 5}, 2, 4, 11);
  CHECK((k == 1 || k == 3 || k == 5));
  CHECK(select_k_cv(x, labels, {1, 3, 5}, 2, 4, 11) == k);
}

TEST_CASE("full pipeline separates an easy labeled toy problem") {
  const MtsDataset ds = make_gaussian_toy(60, 2, 12, 2, 2.0, 19);
  EnsembleConfig cfg;
  cfg.q_inits = 2;
  cfg.components_min = 2;
  cfg.components_max = 3;
  cfg.seed = 19;
  PipelineOptions opt;
  opt.embedding_dim = 2;
  opt.k_grid = {1, 3};
  const EvalReport report = evaluate_pipeline_kfold(ds, cfg, KfoldProtocol{3}, opt, 19);
  REQUIRE(report.folds.size() == 3);
  CHECK(report.mean.accuracy > 0.8);
  CHECK(report.stderr_.accuracy >= 0.0);
}

TEST_CASE("undersampled holdout evaluation runs end to end") {
  auto ds = make_gaussian_toy(50, 2, 10, 2, 2.0, 23);
  // make class 2 the minority
  MtsDataset skewed;
  skewed.variable_names = ds.variable_names;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] == 2 && skewed.labels.size() % 3 == 0 && i % 2 == 0) continue;
    skewed.records.push_back(ds.records[i]);
    skewed.labels.push_back(ds.labels[i]);
  }
  EnsembleConfig cfg;
  cfg.q_inits = 2;
  cfg.components_min = 2;
  cfg.components_max = 2;
  cfg.seed = 23;
  PipelineOptions opt;
  opt.embedding_dim = 2;
  opt.k_grid = {1, 3};
  const EvalReport report = evaluate_pipeline_undersample(
      skewed, cfg, UndersampleHoldoutProtocol{2.0, 0.25, 3}, opt, 23);
  REQUIRE(report.folds.size() == 3);
  CHECK(report.mean.accuracy > 0.5);
}

TEST_CASE("embedding exports produce well-formed files") {
  const Eigen::MatrixXd embed = random_features(5, 3, 41);
  const std::vector<std::string> ids = {"a", "b", "c", "d", "e"};
  const std::vector<int> labels = {1, 2, 1, 2, 1};
  const std::string csv = "test_eval_embed.csv";
  export_embedding_csv(embed, ids, labels, csv);
  {
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "id,dim1,dim2,dim3,label");
    int rows = 0;
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 5);
  }
  std::remove(csv.c_str());

  const std::string svg = "test_eval_embed.svg";
  export_embedding_svg(embed, labels, svg);
  {
    std::ifstream in(svg);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(all.find("<svg") != std::string::npos);
    CHECK(all.find("circle") != std::string::npos);
  }
  std::remove(svg.c_str());
}

TEST_CASE("report files list every aggregated metric") {
  EvalReport report;
  FoldMetrics a;
  a.sensitivity = 1.0;
  a.specificity = 0.5;
  a.precision = 0.8;
  a.f1 = 0.7;
  a.accuracy = 0.75;
  report.folds = {a, a};
  report.aggregate();
  CHECK(report.mean.f1 == doctest::Approx(0.7));
  CHECK(report.stderr_.f1 == doctest::Approx(0.0));
  const std::string path = "test_eval_report.csv";
  save_report(report, path);
  std::ifstream in(path);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(all.find("sensitivity") != std::string::npos);
  CHECK(all.find("accuracy") != std::string::npos);
  std::remove(path.c_str());
}
