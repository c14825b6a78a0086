#pragma once

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace tck {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Sentinel stored under masked-out cells. No computation may read it as a
// number; everything consults the mask first.
inline constexpr double kMissingValue = std::numeric_limits<double>::quiet_NaN();

/// One sample: a V x T value matrix plus a V x T observation mask
/// (true = observed).
struct MtsRecord {
  Eigen::MatrixXd values;  // V x T
  Mask mask;               // V x T
  std::string id;

  Eigen::Index n_variables() const { return values.rows(); }
  Eigen::Index length() const { return values.cols(); }
};

/// Ordered collection of records sharing V and T, with optional integer
/// class labels in {1..N_c}.
struct MtsDataset {
  std::vector<MtsRecord> records;
  std::vector<int> labels;  // empty or size N
  std::vector<std::string> variable_names;

  Eigen::Index size() const { return static_cast<Eigen::Index>(records.size()); }
  Eigen::Index n_variables() const { return records.empty() ? 0 : records.front().n_variables(); }
  Eigen::Index length() const { return records.empty() ? 0 : records.front().length(); }
  bool has_labels() const { return !labels.empty(); }

  // Throws if shapes are ragged, name/label counts mismatch, or an observed
  // cell is non-finite.
  void validate() const;
};

/// Per-variable observed-only mean and standard deviation, pooled over all
/// samples and timesteps.
struct StandardizationStats {
  Eigen::VectorXd mean;    // length V
  Eigen::VectorXd stddev;  // length V, strictly positive
};

/// One row of the long-format event file.
struct LongEvent {
  std::string sample_id;
  double timestamp = 0.0;
  std::string variable;
  double value = 0.0;
};

struct IngestResult {
  MtsDataset dataset;
  std::int64_t dropped_late_events = 0;  // events at/after the horizon
};

enum class ImputeStrategy { Mean, Zero, Locf };

// --- Operations ------------------------------------------------------------

// Bins events into T = n_bins half-open windows of width horizon/n_bins.
// Co-binned events are averaged; empty bins stay missing. When `vocabulary`
// is empty the variable list is taken from the events in first-appearance
// order; otherwise an event naming an unknown variable is rejected.
IngestResult ingest_long_format(const std::vector<LongEvent>& events,
                                int n_bins, double horizon,
                                const std::vector<std::string>& vocabulary = {});

std::pair<MtsDataset, std::vector<std::string>>
drop_high_missing_variables(const MtsDataset& dataset, double threshold);

std::pair<Eigen::VectorXd, double> missing_rates(const MtsDataset& dataset);

// Observed-only, population-std standardization pooled per variable.
// Constant variables get stddev 1.0 with a warning on stderr.
std::pair<MtsDataset, StandardizationStats> standardize(const MtsDataset& dataset);

MtsDataset apply_standardization(const MtsDataset& dataset, const StandardizationStats& stats);

MtsDataset impute(const MtsDataset& dataset, ImputeStrategy strategy);

// Appends V indicator variables (values 0/1 from the mask, fully observed),
// named `<original>__obs`.
MtsDataset concat_missingness_indicators(const MtsDataset& dataset);

void save_dataset(const MtsDataset& dataset, const std::string& path);
MtsDataset load_dataset(const std::string& path);

std::vector<LongEvent> load_long_events(const std::string& path);

}  // namespace tck
