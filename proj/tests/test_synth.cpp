#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "tck/synth.hpp"
#include "test_util.hpp"

using namespace tck;

TEST_CASE("length transform hits the reference fixtures exactly") {
  CHECK(transformed_length(315) == 25);
  CHECK(transformed_length(205) == 23);
  CHECK(transformed_length(198) == 25);
  CHECK(transformed_length(29) == 15);
  CHECK(transformed_length(25) == 25);
  CHECK(transformed_length(1) == 1);
}

TEST_CASE("window means match a hand-computed reduction") {
  MtsDataset ds;
  ds.variable_names = {"x"};
  MtsRecord rec;
  rec.id = "0";
  rec.values.resize(1, 30);
  rec.mask.resize(1, 30);
  for (int t = 0; t < 30; ++t) {
    rec.values(0, t) = t;
    rec.mask(0, t) = true;
  }
  rec.values(0, 1) = kMissingValue;
  rec.mask(0, 1) = false;
  ds.records.push_back(rec);

  // T_max=30: ceil(30/25)=2, output length ceil(30/2)=15, windows of 2
  const MtsDataset out = transform_lengths(ds);
  REQUIRE(out.length() == 15);
  CHECK(out.records[0].values(0, 0) == doctest::Approx(0.0));  // only t=0 observed
  CHECK(out.records[0].values(0, 1) == doctest::Approx(2.5));  // mean of {2,3}
  CHECK(out.records[0].values(0, 14) == doctest::Approx(28.5));
}

TEST_CASE("native lengths mask trailing cells") {
  MtsDataset ds;
  ds.variable_names = {"x"};
  for (int i = 0; i < 2; ++i) {
    MtsRecord rec;
    rec.id = std::to_string(i);
    rec.values = Eigen::MatrixXd::Constant(1, 30, 1.0);
    rec.mask = Mask::Constant(1, 30, true);
    ds.records.push_back(rec);
  }
  const MtsDataset out = transform_lengths(ds, {30, 4});
  REQUIRE(out.length() == 15);
  CHECK(out.records[0].mask.all());
  CHECK(out.records[1].mask(0, 0));
  CHECK(out.records[1].mask(0, 1));
  CHECK_FALSE(out.records[1].mask(0, 2));  // native cells 4..29 never existed
  CHECK_FALSE(out.records[1].mask(0, 14));
}

TEST_CASE("missingness injection only removes cells and is deterministic") {
  const MtsDataset ds = make_gaussian_toy(80, 3, 15, 2, 1.0, 5);
  const auto [inj1, rep1] = inject_label_rate(ds, 0.4, 9);
  const auto [inj2, rep2] = inject_label_rate(ds, 0.4, 9);
  REQUIRE(inj1.size() == ds.size());
  CHECK(inj1.labels == ds.labels);
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    CHECK((inj1.records[i].mask == inj2.records[i].mask).all());
    for (int a = 0; a < 3; ++a)
      for (int t = 0; t < 15; ++t) {
        if (inj1.records[i].mask(a, t)) {
          CHECK(ds.records[i].mask(a, t));
          CHECK(inj1.records[i].values(a, t) == ds.records[i].values(a, t));
        }
      }
  }
  CHECK(rep1.missing_rate > 0.0);
  CHECK(rep1.missing_rate == doctest::Approx(rep2.missing_rate));
}

TEST_CASE("realized label correlation lands on the target per variable") {
  const MtsDataset ds = make_gaussian_toy(400, 4, 18, 2, 1.0, 13);
  for (const double rho : {0.3, 0.6}) {
    const auto [inj, report] = inject_label_rate(ds, rho, 21);
    REQUIRE(report.realized_correlation.size() == 4);
    for (double c : report.realized_correlation) CHECK(std::abs(c - rho) <= 0.01);
  }
}

TEST_CASE("threshold scheme only drops above-mean cells") {
  const MtsDataset ds = make_gaussian_toy(100, 2, 12, 2, 1.0, 3);
  // per-variable observed means of the source data
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(2);
  for (const auto& rec : ds.records)
    for (int a = 0; a < 2; ++a)
      for (int t = 0; t < 12; ++t) {
        mean(a) += rec.values(a, t);
        count(a) += 1.0;
      }
  mean.array() /= count.array();

  const auto [inj, report] = inject_mnar_threshold(ds, 0.4, 8);
  for (Eigen::Index i = 0; i < ds.size(); ++i)
    for (int a = 0; a < 2; ++a)
      for (int t = 0; t < 12; ++t)
        if (!inj.records[i].mask(a, t))
          CHECK(ds.records[i].values(a, t) > mean(a));
  for (double c : report.realized_correlation) CHECK(std::abs(c - 0.4) <= 0.01);
}

TEST_CASE("unreachable correlation targets are rejected with the maximum") {
  const MtsDataset ds = make_gaussian_toy(60, 2, 10, 2, 1.0, 7);
  CHECK_THROWS_AS((void)inject_label_rate(ds, 0.99, 3), InfeasibleError);
  try {
    (void)inject_label_rate(ds, 0.99, 3);
  } catch (const InfeasibleError& e) {
    CHECK(std::string(e.what()).find("maximum achievable") != std::string::npos);
  }
}

TEST_CASE("injection requires labels") {
  MtsDataset ds = make_gaussian_toy(20, 2, 10, 2, 1.0, 2);
  ds.labels.clear();
  CHECK_THROWS((void)inject_label_rate(ds, 0.3, 1));
}

TEST_CASE("toy generator produces balanced fully observed classes") {
  const MtsDataset ds = make_gaussian_toy(90, 3, 14, 3, 1.5, 17);
  REQUIRE(ds.size() == 90);
  CHECK(ds.n_variables() == 3);
  CHECK(ds.length() == 14);
  int counts[4] = {0, 0, 0, 0};
  for (int label : ds.labels) {
    REQUIRE(label >= 1);
    REQUIRE(label <= 3);
    counts[label]++;
  }
  CHECK(counts[1] == 30);
  CHECK(counts[2] == 30);
  CHECK(counts[3] == 30);
  for (const auto& rec : ds.records) CHECK(rec.mask.all());
  // classes are separated: between-class mean gap exceeds the within noise
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(14), m2 = Eigen::VectorXd::Zero(14);
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] == 1) m1 += ds.records[i].values.row(0).transpose() / 30.0;
    if (ds.labels[i] == 2) m2 += ds.records[i].values.row(0).transpose() / 30.0;
  }
  CHECK((m1 - m2).norm() > 1.0);
}

TEST_CASE("injection reports serialize every tuned quantity") {
  const MtsDataset ds = make_gaussian_toy(80, 2, 12, 2, 1.0, 29);
  const auto [inj, report] = inject_label_rate(ds, 0.5, 31);
  const std::string path = "test_synth_report.txt";
  save_injection_report(report, path);
  std::ifstream in(path);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(all.find("missing_rate") != std::string::npos);
  CHECK(all.find("E_1") != std::string::npos);
  CHECK(all.find("correlation_2") != std::string::npos);
  std::remove(path.c_str());
}
