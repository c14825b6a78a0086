#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tck/dataset.hpp"

namespace tck {

/// Request that cannot be satisfied for the given data (e.g. a correlation
/// target above the achievable maximum).
struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class InjectionScheme { LabelRate, MnarThreshold };

struct InjectionReport {
  std::vector<double> tuned_shift;         // E per variable
  std::vector<int> signs;                  // c_v in {-1, +1}
  std::vector<double> realized_correlation;  // |Pearson(gamma_v, y)| per variable
  double missing_rate = 0.0;               // realized, over all cells
  double clipped_fraction = 0.0;           // gamma draws clipped into [0,1]
};

// --- Operations ------------------------------------------------------------

/// Common output length for a set of series whose longest native length is
/// t_max: ceil(t_max / ceil(t_max / 25)).
int transformed_length(int t_max);

// Piecewise window-mean reduction to transformed_length(T_max). Optional
// per-record native lengths; cells past a record's native length count as
// missing. Windows with no observed cell stay missing.
MtsDataset transform_lengths(const MtsDataset& dataset,
                             const std::vector<int>& native_lengths = {});

// Scheme 1: per-record/variable missing rate gamma drawn from a
// label-shifted uniform interval; cells go missing independently.
std::pair<MtsDataset, InjectionReport>
inject_label_rate(const MtsDataset& dataset, double target_correlation, std::uint64_t seed);

// Scheme 2: same gamma machinery, but only above-mean cells can go missing
// (MNAR within each class).
std::pair<MtsDataset, InjectionReport>
inject_mnar_threshold(const MtsDataset& dataset, double target_correlation, std::uint64_t seed);

// Bisection on the shift E so the mean (over variables) of
// |Pearson(gamma_v, y)| hits the target within 0.01, using the scheme's
// gamma sampling under a fixed tuning seed.
double tune_injection_shift(const std::vector<int>& labels, const std::vector<int>& signs,
                            double target_correlation, InjectionScheme scheme,
                            std::uint64_t seed);

// Fully observed labeled toy data: class-dependent sinusoidal mean curves
// plus unit Gaussian noise, balanced labels.
MtsDataset make_gaussian_toy(int n, int v, int t, int n_classes, double class_separation,
                             std::uint64_t seed);

void save_injection_report(const InjectionReport& report, const std::string& path);

}  // namespace tck
