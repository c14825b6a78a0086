#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cstdio>
#include <fstream>

#include "tck/kernel.hpp"
#include "test_util.hpp"

using namespace tck;

namespace {

EnsembleConfig small_config(std::uint64_t seed, KernelMode mode = KernelMode::IM) {
  EnsembleConfig cfg;
  cfg.q_inits = 2;
  cfg.components_min = 2;
  cfg.components_max = 3;
  cfg.seed = seed;
  cfg.mode = mode;
  return cfg;
}

}  // namespace

TEST_CASE("ensemble plan covers the full grid and is deterministic") {
  EnsembleConfig cfg = small_config(42);
  cfg.q_inits = 3;
  const auto plan = sample_ensemble_plan(cfg, 50, 4, 12);
  REQUIRE(plan.size() == 6);  // (3..2 components) x 3 inits
  const auto plan2 = sample_ensemble_plan(cfg, 50, 4, 12);
  for (size_t i = 0; i < plan.size(); ++i) {
    const auto& s = plan[i];
    CHECK(s.model_seed == plan2[i].model_seed);
    CHECK(s.n_components >= 2);
    CHECK(s.n_components <= 3);
    CHECK(s.t_len >= 6);
    CHECK(s.t_start + s.t_len <= 12);
    CHECK(s.attributes.size() >= 1);
    CHECK(s.attributes.size() <= 4);
    CHECK(std::is_sorted(s.attributes.begin(), s.attributes.end()));
    CHECK(s.samples.size() == 40);  // floor(0.8 * 50)
    CHECK(std::is_sorted(s.samples.begin(), s.samples.end()));
    CHECK(s.hp.a0 >= 0.001);
    CHECK(s.hp.a0 <= 1.0);
    CHECK(s.hp.b0 >= 0.005);
    CHECK(s.hp.b0 <= 0.2);
    CHECK(s.hp.c0 >= 0.1 / 50);
    CHECK(s.hp.c0 <= 2.0 / 50);
  }
  CHECK(plan[0].model_seed != plan[1].model_seed);
}

TEST_CASE("default component range scales with the dataset size") {
  EnsembleConfig cfg;
  CHECK(cfg.component_range(100) == std::pair<int, int>{2, 22});
  CHECK(cfg.component_range(600) == std::pair<int, int>{3, 23});
}

TEST_CASE("Gram matrix satisfies the ensemble invariants") {
  for (int trial = 0; trial < 5; ++trial) {
    const auto ds = testutil::random_dataset(25, 3, 10, 0.3, 1000 + trial);
    const auto [trained, gram] = train_tck_im(ds, small_config(2000 + trial));
    const int m = trained.successful_models();
    REQUIRE(m > 0);
    CHECK(gram.models == m);
    CHECK(gram.in_sample);
    const Eigen::MatrixXd& k = gram.entries;
    CHECK((k - k.transpose()).cwiseAbs().maxCoeff() < 1e-9);
    for (Eigen::Index i = 0; i < k.rows(); ++i)
      CHECK(k(i, i) == doctest::Approx(static_cast<double>(m)).epsilon(1e-9));
    CHECK(k.minCoeff() >= -1e-9);
    CHECK(k.maxCoeff() <= m + 1e-9);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * m);
  }
}

TEST_CASE("training is byte-identical across worker counts") {
  const auto ds = testutil::random_dataset(20, 2, 8, 0.25, 7);
  EnsembleConfig one = small_config(99);
  EnsembleConfig four = small_config(99);
  four.workers = 4;
  const auto [t1, g1] = train_tck_im(ds, one);
  const auto [t4, g4] = train_tck_im(ds, four);
  CHECK((g1.entries.array() == g4.entries.array()).all());
}

TEST_CASE("identical records get identical kernel rows") {
  auto ds = testutil::random_dataset(12, 2, 8, 0.3, 31);
  ds.records[5] = ds.records[2];
  ds.records[5].id = "dup";
  ds.labels[5] = ds.labels[2];
  EnsembleConfig cfg = small_config(17);
  cfg.subsample_fraction = 1.0;
  const auto [trained, gram] = train_tck_im(ds, cfg);
  for (Eigen::Index j = 0; j < gram.entries.cols(); ++j) {
    if (j == 2 || j == 5) continue;
    CHECK(gram.entries(2, j) == doctest::Approx(gram.entries(5, j)).epsilon(1e-12));
  }
}

TEST_CASE("test-phase kernel on the training set reproduces the Gram") {
  const auto ds = testutil::random_dataset(18, 2, 9, 0.3, 55);
  const auto [trained, gram] = train_tck_im(ds, small_config(5));
  const GramMatrix cross = kernel_test(trained, ds);
  CHECK_FALSE(cross.in_sample);
  CHECK((cross.entries - gram.entries).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("out-of-sample kernel handles records unseen in training") {
  const auto train = testutil::random_dataset(16, 2, 8, 0.3, 60);
  const auto test = testutil::random_dataset(6, 2, 8, 0.3, 61);
  const auto [trained, gram] = train_tck_im(train, small_config(6));
  const GramMatrix cross = kernel_test(trained, test);
  CHECK(cross.entries.rows() == 16);
  CHECK(cross.entries.cols() == 6);
  CHECK(cross.entries.minCoeff() >= -1e-9);
  CHECK(cross.entries.maxCoeff() <= gram.models + 1e-9);
}

TEST_CASE("mode preprocessing changes the kernel as specified") {
  // Fully observed data: zero imputation is a no-op, so ZERO and TCK agree
  // exactly under the same seed, while B adds constant indicators.
  const auto ds = testutil::random_dataset(14, 2, 8, 0.0, 21);
  const auto [t_tck, g_tck] = train_tck_im(ds, small_config(3, KernelMode::TCK));
  const auto [t_zero, g_zero] = train_tck_im(ds, small_config(3, KernelMode::ZERO));
  CHECK((g_tck.entries.array() == g_zero.entries.array()).all());
  const auto [t_b, g_b] = train_tck_im(ds, small_config(3, KernelMode::B));
  CHECK(g_b.entries.rows() == 14);
  const auto [t_im, g_im] = train_tck_im(ds, small_config(3, KernelMode::IM));
  CHECK((g_im.entries - g_tck.entries).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("kernel mode names round-trip") {
  for (const auto mode : {KernelMode::IM, KernelMode::TCK, KernelMode::B, KernelMode::ZERO})
    CHECK(kernel_mode_from_string(to_string(mode)) == mode);
  CHECK_THROWS(kernel_mode_from_string("bogus"));
}

TEST_CASE("model files round-trip exactly") {
  const auto ds = testutil::random_dataset(15, 2, 8, 0.3, 88);
  const auto [trained, gram] = train_tck_im(ds, small_config(12));
  const std::string path = "test_kernel_model.bin";
  save_model(trained, path);
  const TrainedKernel back = load_model(path);
  CHECK(back.mode == trained.mode);
  CHECK(back.n_train == trained.n_train);
  REQUIRE(back.models.size() == trained.models.size());
  const GramMatrix g1 = in_sample_gram(trained);
  const GramMatrix g2 = in_sample_gram(back);
  CHECK((g1.entries.array() == g2.entries.array()).all());
  const GramMatrix c1 = kernel_test(trained, ds);
  const GramMatrix c2 = kernel_test(back, ds);
  CHECK((c1.entries.array() == c2.entries.array()).all());
  std::remove(path.c_str());
}

TEST_CASE("model loading validates the header") {
  const std::string path = "test_kernel_badmagic.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE" << std::string(64, '\0');
  }
  CHECK_THROWS(load_model(path));
  std::remove(path.c_str());
}

TEST_CASE("gram files round-trip") {
  const auto ds = testutil::random_dataset(10, 2, 8, 0.3, 4);
  const auto [trained, gram] = train_tck_im(ds, small_config(8));
  const std::string path = "test_kernel_gram.txt";
  save_gram(gram, path);
  const GramMatrix back = load_gram(path);
  CHECK(back.in_sample == gram.in_sample);
  CHECK(back.models == gram.models);
  CHECK((back.entries.array() == gram.entries.array()).all());
  std::remove(path.c_str());
}

TEST_CASE("linear kernel matches a direct computation and rejects missing data") {
  const auto ds = testutil::random_dataset(6, 2, 5, 0.0, 14);
  const GramMatrix k = linear_kernel(ds);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      double dot = 0.0;
      for (int a = 0; a < 2; ++a)
        for (int t = 0; t < 5; ++t)
          dot += ds.records[i].values(a, t) * ds.records[j].values(a, t);
      CHECK(k.entries(i, j) == doctest::Approx(dot).epsilon(1e-12));
    }
  const auto holey = testutil::random_dataset(6, 2, 5, 0.3, 15);
  CHECK_THROWS(linear_kernel(holey));
}
