#include "tck/kernel.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "tck/rng.hpp"

namespace tck {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

// Restricted view of (subset of) records: attribute subset and a contiguous
// time segment. An empty `samples` means all records.
MtsDataset restrict_view(const MtsDataset& dataset, const std::vector<int>& samples,
                         const std::vector<int>& attributes, int t_start, int t_len) {
  MtsDataset out;
  std::vector<int> rows(samples);
  if (rows.empty()) {
    rows.resize(dataset.size());
    for (Eigen::Index i = 0; i < dataset.size(); ++i) rows[static_cast<size_t>(i)] = static_cast<int>(i);
  }
  out.records.reserve(rows.size());
  for (int ri : rows) {
    const auto& rec = dataset.records[ri];
    MtsRecord r;
    r.id = rec.id;
    r.values.resize(attributes.size(), t_len);
    r.mask.resize(attributes.size(), t_len);
    for (size_t a = 0; a < attributes.size(); ++a) {
      r.values.row(a) = rec.values.row(attributes[a]).segment(t_start, t_len);
      r.mask.row(a) = rec.mask.row(attributes[a]).segment(t_start, t_len);
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

MtsDataset mode_preprocess(const MtsDataset& standardized, KernelMode mode) {
  switch (mode) {
    case KernelMode::B:
      return concat_missingness_indicators(standardized);
    case KernelMode::ZERO:
      return impute(standardized, ImputeStrategy::Zero);
    default:
      return standardized;
  }
}

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& pi) {
  Eigen::MatrixXd out = pi;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0.0)
      out.row(i) /= norm;
    else
      out.row(i).setZero();
  }
  return out;
}

// --- binary model container -------------------------------------------------

constexpr char kMagic[4] = {'T', 'C', 'K', 'M'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::ofstream f;
  explicit Writer(const std::string& path) : f(path, std::ios::binary) {
    if (!f) fail("cannot open '" + path + "' for writing");
  }
  void bytes(const void* p, size_t n) { f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  template <typename T>
  void pod(T v) { bytes(&v, sizeof(T)); }
  void vec_d(const Eigen::VectorXd& v) {
    pod<std::int64_t>(v.size());
    bytes(v.data(), sizeof(double) * static_cast<size_t>(v.size()));
  }
  void mat_d(const Eigen::MatrixXd& m) {
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    bytes(m.data(), sizeof(double) * static_cast<size_t>(m.size()));
  }
  void vec_i(const std::vector<int>& v) {
    pod<std::int64_t>(static_cast<std::int64_t>(v.size()));
    bytes(v.data(), sizeof(int) * v.size());
  }
};

struct Reader {
  std::ifstream f;
  explicit Reader(const std::string& path) : f(path, std::ios::binary) {
    if (!f) fail("cannot open '" + path + "'");
  }
  void bytes(void* p, size_t n) {
    f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!f) fail("truncated model file");
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  Eigen::VectorXd vec_d() {
    const auto n = pod<std::int64_t>();
    if (n < 0 || n > (1LL << 32)) fail("corrupt model file");
    Eigen::VectorXd v(n);
    bytes(v.data(), sizeof(double) * static_cast<size_t>(n));
    return v;
  }
  Eigen::MatrixXd mat_d() {
    const auto r = pod<std::int64_t>();
    const auto c = pod<std::int64_t>();
    if (r < 0 || c < 0 || r * c > (1LL << 32)) fail("corrupt model file");
    Eigen::MatrixXd m(r, c);
    bytes(m.data(), sizeof(double) * static_cast<size_t>(m.size()));
    return m;
  }
  std::vector<int> vec_i() {
    const auto n = pod<std::int64_t>();
    if (n < 0 || n > (1LL << 32)) fail("corrupt model file");
    std::vector<int> v(static_cast<size_t>(n));
    bytes(v.data(), sizeof(int) * v.size());
    return v;
  }
};

}  // namespace

std::string to_string(KernelMode mode) {
  switch (mode) {
    case KernelMode::IM: return "IM";
    case KernelMode::TCK: return "TCK";
    case KernelMode::B: return "B";
    case KernelMode::ZERO: return "ZERO";
  }
  return "?";
}

KernelMode kernel_mode_from_string(const std::string& name) {
  if (name == "IM") return KernelMode::IM;
  if (name == "TCK") return KernelMode::TCK;
  if (name == "B") return KernelMode::B;
  if (name == "ZERO") return KernelMode::ZERO;
  fail("unknown kernel mode '" + name + "'");
}

std::pair<int, int> EnsembleConfig::component_range(Eigen::Index n) const {
  int lo = components_min;
  if (lo < 0)
    lo = std::max(2, static_cast<int>(std::ceil(static_cast<double>(n) / 200.0)));
  int hi = components_max < 0 ? lo + 20 : components_max;
  if (lo < 1 || hi < lo) fail("invalid component range");
  return {lo, hi};
}

int TrainedKernel::successful_models() const {
  int count = 0;
  for (const auto& m : models) count += m.ok ? 1 : 0;
  return count;
}

std::vector<BaseModelSpec> sample_ensemble_plan(const EnsembleConfig& config,
                                                Eigen::Index n, Eigen::Index v,
                                                Eigen::Index t) {
  if (config.q_inits < 1) fail("Q must be >= 1");
  if (config.min_segment_length > t)
    fail("min_segment_length exceeds the series length");
  if (config.min_attributes > v) fail("min_attributes exceeds V");
  if (!(config.subsample_fraction > 0.0 && config.subsample_fraction <= 1.0))
    fail("subsample_fraction must be in (0,1]");

  const auto [g_lo, g_hi] = config.component_range(n);
  const int seg_floor = std::min<int>(config.min_segment_length, static_cast<int>(t));
  const int attr_floor = std::max(1, config.min_attributes);
  const int subsample = std::min<int>(
      static_cast<int>(n),
      static_cast<int>(std::ceil(config.subsample_fraction * static_cast<double>(n))));

  std::mt19937_64 gen(derive_seed(config.seed, 0));
  std::vector<BaseModelSpec> plan;
  std::uint64_t index = 0;
  for (int g = g_lo; g <= g_hi; ++g) {
    for (int q1 = 1; q1 <= config.q_inits; ++q1) {
      BaseModelSpec spec;
      spec.q1 = q1;
      spec.n_components = g;
      spec.hp.a0 = uniform(gen, config.ranges.a0_min, config.ranges.a0_max);
      spec.hp.b0 = uniform(gen, config.ranges.b0_min, config.ranges.b0_max);
      spec.hp.n0 = uniform(gen, config.ranges.n0_min, config.ranges.n0_max);
      spec.hp.c0 = uniform(gen, config.ranges.cd_min / static_cast<double>(n),
                           config.ranges.cd_max / static_cast<double>(n));
      spec.hp.d0 = uniform(gen, config.ranges.cd_min / static_cast<double>(n),
                           config.ranges.cd_max / static_cast<double>(n));
      spec.t_len = static_cast<int>(uniform_int(gen, seg_floor, t));
      spec.t_start = static_cast<int>(uniform_int(gen, 0, t - spec.t_len));
      const int n_attr = static_cast<int>(uniform_int(gen, attr_floor, v));
      spec.attributes = sample_without_replacement(gen, static_cast<int>(v), n_attr);
      spec.samples = sample_without_replacement(gen, static_cast<int>(n), subsample);
      spec.model_seed = derive_seed(config.seed, 1000 + index);
      plan.push_back(std::move(spec));
      ++index;
    }
  }
  return plan;
}

std::pair<TrainedKernel, GramMatrix> train_tck_im(const MtsDataset& dataset,
                                                  const EnsembleConfig& config) {
  dataset.validate();
  if (dataset.size() < 2) fail("training needs at least 2 records");

  TrainedKernel trained;
  trained.mode = config.mode;
  trained.n_variables = dataset.n_variables();
  trained.length = dataset.length();
  trained.n_train = dataset.size();

  auto [std_dataset, stats] = standardize(dataset);
  trained.stats = std::move(stats);
  const MtsDataset prep = mode_preprocess(std_dataset, config.mode);
  const bool use_bernoulli = config.mode == KernelMode::IM;

  const auto plan = sample_ensemble_plan(config, prep.size(), prep.n_variables(), prep.length());
  trained.models.resize(plan.size());

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t idx = next.fetch_add(1);
      if (idx >= plan.size()) return;
      BaseModelRealization& model = trained.models[idx];
      model.spec = plan[idx];
      try {
        const MtsDataset fit_view = restrict_view(prep, model.spec.samples, model.spec.attributes,
                                                  model.spec.t_start, model.spec.t_len);
        FitResult fit = fit_map_em(fit_view, model.spec.n_components, model.spec.hp,
                                   config.stopping, model.spec.model_seed, use_bernoulli);
        const MtsDataset all_view = restrict_view(prep, {}, model.spec.attributes,
                                                  model.spec.t_start, model.spec.t_len);
        model.train_posteriors = e_step(all_view, fit.params);
        model.priors = std::move(fit.priors);
        model.params = std::move(fit.params);
        model.iterations = fit.iterations;
        model.objective = fit.objective.empty() ? 0.0 : fit.objective.back();
        model.ok = true;
      } catch (const std::exception& e) {
        model.ok = false;
        model.error = e.what();
      }
    }
  };

  const int n_threads = std::max(1, config.workers);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (size_t i = 0; i < trained.models.size(); ++i)
    if (!trained.models[i].ok)
      std::cerr << "warning: base model " << i << " (q1=" << trained.models[i].spec.q1
                << ", G=" << trained.models[i].spec.n_components
                << ") failed: " << trained.models[i].error << "\n";

  if (trained.successful_models() == 0) fail("all base models failed");
  return {std::move(trained), in_sample_gram(trained)};
}

GramMatrix in_sample_gram(const TrainedKernel& trained) {
  GramMatrix gram;
  gram.in_sample = true;
  gram.models = trained.successful_models();
  gram.entries = Eigen::MatrixXd::Zero(trained.n_train, trained.n_train);
  // Fixed accumulation order keeps output identical across worker counts.
  for (const auto& model : trained.models) {
    if (!model.ok) continue;
    const Eigen::MatrixXd p = normalize_rows(model.train_posteriors);
    gram.entries.noalias() += p * p.transpose();
  }
  return gram;
}

GramMatrix kernel_test(const TrainedKernel& trained, const MtsDataset& test) {
  test.validate();
  if (test.n_variables() != trained.n_variables && test.size() > 0)
    fail("test dataset V does not match the trained kernel");
  if (test.length() != trained.length && test.size() > 0)
    fail("test dataset T does not match the trained kernel");

  GramMatrix gram;
  gram.in_sample = false;
  gram.models = trained.successful_models();
  gram.entries = Eigen::MatrixXd::Zero(trained.n_train, test.size());
  if (test.size() == 0) return gram;

  const MtsDataset prep =
      mode_preprocess(apply_standardization(test, trained.stats), trained.mode);

  for (const auto& model : trained.models) {
    if (!model.ok) continue;
    const MtsDataset view = restrict_view(prep, {}, model.spec.attributes,
                                          model.spec.t_start, model.spec.t_len);
    const Eigen::MatrixXd test_pi = e_step(view, model.params);
    const Eigen::MatrixXd pn = normalize_rows(model.train_posteriors);
    const Eigen::MatrixXd pm = normalize_rows(test_pi);
    gram.entries.noalias() += pn * pm.transpose();
  }
  return gram;
}

GramMatrix linear_kernel(const MtsDataset& dataset) {
  dataset.validate();
  for (const auto& rec : dataset.records)
    if (!rec.mask.all()) fail("linear kernel requires a complete dataset (impute first)");
  const Eigen::Index n = dataset.size();
  Eigen::MatrixXd flat(n, dataset.n_variables() * dataset.length());
  for (Eigen::Index i = 0; i < n; ++i)
    flat.row(i) = Eigen::Map<const Eigen::VectorXd>(dataset.records[i].values.data(),
                                                    dataset.records[i].values.size());
  GramMatrix gram;
  gram.in_sample = true;
  gram.models = 1;
  gram.entries = flat * flat.transpose();
  return gram;
}

void save_model(const TrainedKernel& trained, const std::string& path) {
  if (trained.models.empty() || trained.successful_models() == 0)
    fail("nothing trained: refusing to save an empty ensemble");
  Writer w(path);
  w.bytes(kMagic, 4);
  w.pod<std::uint32_t>(kVersion);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(trained.mode));
  w.vec_d(trained.stats.mean);
  w.vec_d(trained.stats.stddev);
  w.pod<std::int64_t>(trained.n_variables);
  w.pod<std::int64_t>(trained.length);
  w.pod<std::int64_t>(trained.n_train);
  w.pod<std::uint64_t>(trained.models.size());
  for (const auto& m : trained.models) {
    w.pod<std::uint8_t>(m.ok ? 1 : 0);
    w.pod<std::int32_t>(m.spec.q1);
    w.pod<std::int32_t>(m.spec.n_components);
    w.pod<double>(m.spec.hp.a0);
    w.pod<double>(m.spec.hp.b0);
    w.pod<double>(m.spec.hp.c0);
    w.pod<double>(m.spec.hp.d0);
    w.pod<double>(m.spec.hp.n0);
    w.pod<std::int32_t>(m.spec.t_start);
    w.pod<std::int32_t>(m.spec.t_len);
    w.vec_i(m.spec.attributes);
    w.vec_i(m.spec.samples);
    w.pod<std::uint64_t>(m.spec.model_seed);
    w.pod<std::int32_t>(m.iterations);
    w.pod<double>(m.objective);
    if (!m.ok) continue;
    w.mat_d(m.priors.mean);
    w.vec_d(m.priors.stddev);
    w.mat_d(m.priors.kernel);
    w.mat_d(m.priors.kernel_inv);
    w.pod<double>(m.priors.kernel_logdet);
    w.vec_d(m.params.theta);
    for (const auto& mu : m.params.mu) w.mat_d(mu);
    w.mat_d(m.params.sigma2);
    w.pod<std::uint8_t>(m.params.has_bernoulli() ? 1 : 0);
    if (m.params.has_bernoulli())
      for (const auto& beta : m.params.beta) w.mat_d(beta);
    w.mat_d(m.train_posteriors);
  }
  if (!w.f) fail("write failure on '" + path + "'");
}

TrainedKernel load_model(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) fail("not a model file (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion)
    fail("model file version mismatch: " + std::to_string(version));

  TrainedKernel trained;
  trained.mode = static_cast<KernelMode>(r.pod<std::uint8_t>());
  trained.stats.mean = r.vec_d();
  trained.stats.stddev = r.vec_d();
  trained.n_variables = r.pod<std::int64_t>();
  trained.length = r.pod<std::int64_t>();
  trained.n_train = r.pod<std::int64_t>();
  const auto count = r.pod<std::uint64_t>();
  if (count > (1ULL << 24)) fail("corrupt model file");
  trained.models.resize(count);
  for (auto& m : trained.models) {
    m.ok = r.pod<std::uint8_t>() != 0;
    m.spec.q1 = r.pod<std::int32_t>();
    m.spec.n_components = r.pod<std::int32_t>();
    m.spec.hp.a0 = r.pod<double>();
    m.spec.hp.b0 = r.pod<double>();
    m.spec.hp.c0 = r.pod<double>();
    m.spec.hp.d0 = r.pod<double>();
    m.spec.hp.n0 = r.pod<double>();
    m.spec.t_start = r.pod<std::int32_t>();
    m.spec.t_len = r.pod<std::int32_t>();
    m.spec.attributes = r.vec_i();
    m.spec.samples = r.vec_i();
    m.spec.model_seed = r.pod<std::uint64_t>();
    m.iterations = r.pod<std::int32_t>();
    m.objective = r.pod<double>();
    if (!m.ok) continue;
    m.priors.mean = r.mat_d();
    m.priors.stddev = r.vec_d();
    m.priors.kernel = r.mat_d();
    m.priors.kernel_inv = r.mat_d();
    m.priors.kernel_logdet = r.pod<double>();
    m.params.theta = r.vec_d();
    m.params.mu.resize(m.spec.n_components);
    for (auto& mu : m.params.mu) mu = r.mat_d();
    m.params.sigma2 = r.mat_d();
    if (r.pod<std::uint8_t>() != 0) {
      m.params.beta.resize(m.spec.n_components);
      for (auto& beta : m.params.beta) beta = r.mat_d();
    }
    m.train_posteriors = r.mat_d();
  }
  if (trained.successful_models() == 0) fail("model file contains no successful base models");
  return trained;
}

void save_gram(const GramMatrix& gram, const std::string& path) {
  std::ofstream f(path);
  if (!f) fail("cannot open '" + path + "' for writing");
  f << "#gram kind=" << (gram.in_sample ? "in" : "cross") << " rows=" << gram.entries.rows()
    << " cols=" << gram.entries.cols() << " models=" << gram.models << "\n";
  char buf[64];
  for (Eigen::Index i = 0; i < gram.entries.rows(); ++i) {
    for (Eigen::Index j = 0; j < gram.entries.cols(); ++j) {
      if (j) f << ",";
      std::snprintf(buf, sizeof(buf), "%.17g", gram.entries(i, j));
      f << buf;
    }
    f << "\n";
  }
  if (!f) fail("write failure on '" + path + "'");
}

GramMatrix load_gram(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) fail("empty gram file");
  char kind[16];
  long rows = -1, cols = -1;
  int models = -1;
  if (std::sscanf(line.c_str(), "#gram kind=%15s rows=%ld cols=%ld models=%d",
                  kind, &rows, &cols, &models) != 4 || rows < 0 || cols < 0)
    fail("malformed gram header: '" + line + "'");
  GramMatrix gram;
  gram.in_sample = std::string(kind) == "in";
  gram.models = models;
  gram.entries.resize(rows, cols);
  for (long i = 0; i < rows; ++i) {
    if (!std::getline(f, line)) fail("truncated gram file");
    std::stringstream ss(line);
    std::string tok;
    for (long j = 0; j < cols; ++j) {
      if (!std::getline(ss, tok, ',')) fail("short row in gram file");
      gram.entries(i, j) = std::stod(tok);
    }
  }
  return gram;
}

}  // namespace tck
