#include "tck/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <stdexcept>

#include "tck/rng.hpp"

namespace tck {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

constexpr double kCorrTolerance = 0.01;
constexpr int kMaxBisection = 60;

double interval_low(InjectionScheme scheme, double shift, int sign, int label) {
  const double offset = shift * static_cast<double>(label - 1);
  if (scheme == InjectionScheme::LabelRate) return 0.3 + sign * offset;
  return sign < 0 ? 0.7 - offset : 0.3 + offset;
}

double interval_width(InjectionScheme scheme) {
  return scheme == InjectionScheme::LabelRate ? 0.4 : 0.3;
}

// Largest shift keeping all interval endpoints within [-0.2, 1.2] before
// clipping (mild clipping allowed, reported).
double max_shift(InjectionScheme scheme, int max_label) {
  const double span = std::max(1, max_label - 1);
  return (scheme == InjectionScheme::LabelRate ? 0.5 : 0.6) / span;
}

// gamma draws for one variable at shift E, reusing fixed uniform draws so the
// realized correlation is a continuous monotone function of E.
Eigen::VectorXd gammas_at(InjectionScheme scheme, double shift, int sign,
                          const std::vector<int>& labels, const Eigen::VectorXd& u,
                          int* clipped = nullptr) {
  const double width = interval_width(scheme);
  Eigen::VectorXd g(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double raw = interval_low(scheme, shift, sign, labels[i]) + width * u(i);
    g(i) = std::clamp(raw, 0.0, 1.0);
    if (clipped && g(i) != raw) ++*clipped;
  }
  return g;
}

double pearson(const Eigen::VectorXd& x, const std::vector<int>& y) {
  const Eigen::Index n = x.size();
  double ym = 0.0;
  for (int v : y) ym += v;
  ym /= static_cast<double>(n);
  const double xm = x.mean();
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dx = x(i) - xm;
    const double dy = y[i] - ym;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// Bisection on E for a monotone realized-|correlation| objective.
double bisect_shift(double target, double e_max,
                    const std::function<double(double)>& realized) {
  if (target <= 0.0) return 0.0;
  const double at_max = realized(e_max);
  if (target >= at_max)
    throw InfeasibleError("target correlation " + std::to_string(target) +
                          " is infeasible; maximum achievable is " + std::to_string(at_max));
  double lo = 0.0, hi = e_max, mid = e_max;
  for (int iter = 0; iter < kMaxBisection; ++iter) {
    mid = 0.5 * (lo + hi);
    const double value = realized(mid);
    if (std::abs(value - target) < 0.25 * kCorrTolerance) break;
    (value < target ? lo : hi) = mid;
  }
  return mid;
}

std::vector<int> balanced_signs(int v, std::mt19937_64& gen) {
  std::vector<int> signs;
  for (int i = 0; i < v; ++i) signs.push_back(i < v / 2 ? 1 : -1);
  if (v % 2 == 1) signs[v / 2] = uniform01(gen) < 0.5 ? 1 : -1;
  for (int i = v - 1; i > 0; --i)
    std::swap(signs[i], signs[static_cast<size_t>(uniform_int(gen, 0, i))]);
  return signs;
}

void check_injectable(const MtsDataset& dataset) {
  if (!dataset.has_labels()) fail("injection requires labels");
  std::set<int> distinct(dataset.labels.begin(), dataset.labels.end());
  if (distinct.size() < 2) fail("injection requires at least two classes");
  for (const auto& rec : dataset.records)
    if (!rec.mask.all()) fail("injection expects a fully observed dataset");
}

std::pair<MtsDataset, InjectionReport>
inject_impl(const MtsDataset& dataset, double target, std::uint64_t seed,
            InjectionScheme scheme) {
  check_injectable(dataset);
  if (!(target >= 0.0 && target < 1.0)) fail("target correlation must be in [0,1)");
  const Eigen::Index n = dataset.size();
  const Eigen::Index v = dataset.n_variables();
  const Eigen::Index t = dataset.length();
  const int max_label = *std::max_element(dataset.labels.begin(), dataset.labels.end());
  const double e_max = max_shift(scheme, max_label);

  std::mt19937_64 sign_gen(derive_seed(seed, 1));
  std::mt19937_64 u_gen(derive_seed(seed, 2));
  std::mt19937_64 cell_gen(derive_seed(seed, 3));

  InjectionReport report;
  report.signs = balanced_signs(static_cast<int>(v), sign_gen);

  Eigen::MatrixXd u(n, v);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < v; ++j) u(i, j) = uniform01(u_gen);

  // Tune the shift per variable so every realized per-variable correlation
  // lands on the target, not only the mean across variables.
  Eigen::MatrixXd gamma(n, v);
  int clipped = 0;
  for (Eigen::Index j = 0; j < v; ++j) {
    const Eigen::VectorXd uj = u.col(j);
    const int sign = report.signs[j];
    auto realized = [&](double shift) {
      return std::abs(pearson(gammas_at(scheme, shift, sign, dataset.labels, uj), dataset.labels));
    };
    const double shift = bisect_shift(target, e_max, realized);
    report.tuned_shift.push_back(shift);
    gamma.col(j) = gammas_at(scheme, shift, sign, dataset.labels, uj, &clipped);
    report.realized_correlation.push_back(realized(shift));
  }
  report.clipped_fraction = static_cast<double>(clipped) / static_cast<double>(n * v);

  Eigen::VectorXd var_mean = Eigen::VectorXd::Zero(v);
  if (scheme == InjectionScheme::MnarThreshold) {
    for (const auto& rec : dataset.records) var_mean += rec.values.rowwise().mean();
    var_mean /= static_cast<double>(n);
  }

  MtsDataset out = dataset;
  std::int64_t missing = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& rec = out.records[i];
    for (Eigen::Index j = 0; j < v; ++j)
      for (Eigen::Index k = 0; k < t; ++k) {
        const double draw = uniform01(cell_gen);  // one draw per cell, all schemes
        const bool eligible = scheme == InjectionScheme::LabelRate ||
                              dataset.records[i].values(j, k) > var_mean(j);
        if (eligible && draw < gamma(i, j)) {
          rec.values(j, k) = kMissingValue;
          rec.mask(j, k) = false;
          ++missing;
        }
      }
  }
  report.missing_rate = static_cast<double>(missing) / static_cast<double>(n * v * t);
  return {std::move(out), std::move(report)};
}

}  // namespace

int transformed_length(int t_max) {
  if (t_max < 1) fail("t_max must be positive");
  const int window = (t_max + 24) / 25;            // ceil(t_max / 25)
  return (t_max + window - 1) / window;            // ceil(t_max / window)
}

MtsDataset transform_lengths(const MtsDataset& dataset,
                             const std::vector<int>& native_lengths) {
  if (dataset.records.empty()) fail("empty dataset");
  if (!native_lengths.empty() &&
      native_lengths.size() != static_cast<size_t>(dataset.size()))
    fail("native length count does not match N");

  int t_max = 0;
  if (native_lengths.empty()) {
    t_max = static_cast<int>(dataset.length());
  } else {
    for (int len : native_lengths) {
      if (len < 1 || len > dataset.length()) fail("native length out of range");
      t_max = std::max(t_max, len);
    }
  }
  const int window = (t_max + 24) / 25;
  const int t_out = transformed_length(t_max);

  MtsDataset out;
  out.labels = dataset.labels;
  out.variable_names = dataset.variable_names;
  const Eigen::Index v = dataset.n_variables();
  out.records.reserve(dataset.records.size());
  for (size_t rec_i = 0; rec_i < dataset.records.size(); ++rec_i) {
    const auto& rec = dataset.records[rec_i];
    const int native = native_lengths.empty() ? t_max : native_lengths[rec_i];
    MtsRecord r;
    r.id = rec.id;
    r.values = Eigen::MatrixXd::Constant(v, t_out, kMissingValue);
    r.mask = Mask::Constant(v, t_out, false);
    for (Eigen::Index i = 0; i < v; ++i)
      for (int w = 0; w < t_out; ++w) {
        double sum = 0.0;
        int count = 0;
        for (int j = w * window; j < std::min((w + 1) * window, native); ++j)
          if (rec.mask(i, j)) {
            sum += rec.values(i, j);
            ++count;
          }
        if (count > 0) {
          r.values(i, w) = sum / count;
          r.mask(i, w) = true;
        }
      }
    out.records.push_back(std::move(r));
  }
  return out;
}

std::pair<MtsDataset, InjectionReport>
inject_label_rate(const MtsDataset& dataset, double target_correlation, std::uint64_t seed) {
  return inject_impl(dataset, target_correlation, seed, InjectionScheme::LabelRate);
}

std::pair<MtsDataset, InjectionReport>
inject_mnar_threshold(const MtsDataset& dataset, double target_correlation, std::uint64_t seed) {
  return inject_impl(dataset, target_correlation, seed, InjectionScheme::MnarThreshold);
}

double tune_injection_shift(const std::vector<int>& labels, const std::vector<int>& signs,
                            double target_correlation, InjectionScheme scheme,
                            std::uint64_t seed) {
  if (labels.empty() || signs.empty()) fail("labels and signs must be non-empty");
  std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) fail("labels must not be constant");
  const int max_label = *std::max_element(labels.begin(), labels.end());
  const double e_max = max_shift(scheme, max_label);

  std::mt19937_64 gen(derive_seed(seed, 2));
  const Eigen::Index n = static_cast<Eigen::Index>(labels.size());
  Eigen::MatrixXd u(n, signs.size());
  for (Eigen::Index i = 0; i < n; ++i)
    for (size_t j = 0; j < signs.size(); ++j) u(i, j) = uniform01(gen);

  auto realized = [&](double shift) {
    double total = 0.0;
    for (size_t j = 0; j < signs.size(); ++j)
      total += std::abs(pearson(gammas_at(scheme, shift, signs[j], labels, u.col(j)), labels));
    return total / static_cast<double>(signs.size());
  };
  return bisect_shift(target_correlation, e_max, realized);
}

MtsDataset make_gaussian_toy(int n, int v, int t, int n_classes, double class_separation,
                             std::uint64_t seed) {
  if (n < 1 || v < 1 || t < 1 || n_classes < 1) fail("toy dimensions must be positive");
  std::mt19937_64 gen(derive_seed(seed, 11));
  constexpr double two_pi = 6.283185307179586;

  MtsDataset out;
  for (int i = 0; i < v; ++i) out.variable_names.push_back("x" + std::to_string(i + 1));
  out.records.reserve(n);
  for (int rec_i = 0; rec_i < n; ++rec_i) {
    const int label = 1 + rec_i % n_classes;
    out.labels.push_back(label);
    MtsRecord rec;
    rec.id = "toy" + std::to_string(rec_i);
    rec.values.resize(v, t);
    rec.mask = Mask::Constant(v, t, true);
    const double phase = two_pi * static_cast<double>(label - 1) / n_classes;
    for (int i = 0; i < v; ++i)
      for (int j = 0; j < t; ++j) {
        const double curve = std::sin(two_pi * (j + 1) / t + phase + 0.4 * i) +
                             0.5 * std::cos(two_pi * 2.0 * (j + 1) / t + phase * 1.5 + 0.2 * i);
        rec.values(i, j) = class_separation * curve + normal01(gen);
      }
    out.records.push_back(std::move(rec));
  }
  return out;
}

void save_injection_report(const InjectionReport& report, const std::string& path) {
  std::ofstream f(path);
  if (!f) fail("cannot open '" + path + "' for writing");
  char buf[96];
  std::snprintf(buf, sizeof(buf), "missing_rate,%.6f\n", report.missing_rate);
  f << buf;
  std::snprintf(buf, sizeof(buf), "clipped_fraction,%.6f\n", report.clipped_fraction);
  f << buf;
  for (size_t i = 0; i < report.tuned_shift.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "E_%zu,%.6f\nsign_%zu,%d\ncorrelation_%zu,%.6f\n",
                  i + 1, report.tuned_shift[i], i + 1, report.signs[i], i + 1,
                  report.realized_correlation[i]);
    f << buf;
  }
  if (!f) fail("write failure on '" + path + "'");
}

}  // namespace tck
