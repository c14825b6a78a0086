#include "tck/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace tck {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& tok, const std::string& context) {
  try {
    size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) fail("non-numeric cell '" + tok + "' " + context);
    return v;
  } catch (const std::invalid_argument&) {
    fail("non-numeric cell '" + tok + "' " + context);
  } catch (const std::out_of_range&) {
    fail("out-of-range value '" + tok + "' " + context);
  }
}

}  // namespace

void MtsDataset::validate() const {
  const Eigen::Index v = n_variables();
  const Eigen::Index t = length();
  if (!variable_names.empty() && static_cast<Eigen::Index>(variable_names.size()) != v)
    fail("variable name count does not match V");
  if (has_labels() && static_cast<Eigen::Index>(labels.size()) != size())
    fail("label count does not match N");
  for (const auto& rec : records) {
    if (rec.values.rows() != v || rec.values.cols() != t) fail("ragged record shapes");
    if (rec.mask.rows() != v || rec.mask.cols() != t) fail("mask shape does not match values");
    for (Eigen::Index i = 0; i < v; ++i)
      for (Eigen::Index j = 0; j < t; ++j)
        if (rec.mask(i, j) && !std::isfinite(rec.values(i, j)))
          fail("non-finite observed value in record " + rec.id);
  }
}

IngestResult ingest_long_format(const std::vector<LongEvent>& events,
                                int n_bins, double horizon,
                                const std::vector<std::string>& vocabulary) {
  if (n_bins < 1) fail("n_bins must be >= 1");
  if (!(horizon > 0.0)) fail("horizon must be positive");
  if (events.empty()) fail("empty event collection");

  std::vector<std::string> vars = vocabulary;
  std::unordered_map<std::string, int> var_index;
  for (size_t i = 0; i < vars.size(); ++i) var_index[vars[i]] = static_cast<int>(i);
  const bool open_vocab = vocabulary.empty();

  std::vector<std::string> sample_order;
  std::unordered_map<std::string, int> sample_index;

  for (const auto& ev : events) {
    if (ev.timestamp < 0.0) fail("negative timestamp for sample " + ev.sample_id);
    if (!var_index.count(ev.variable)) {
      if (!open_vocab) fail("unknown variable name '" + ev.variable + "'");
      var_index[ev.variable] = static_cast<int>(vars.size());
      vars.push_back(ev.variable);
    }
    if (!sample_index.count(ev.sample_id)) {
      sample_index[ev.sample_id] = static_cast<int>(sample_order.size());
      sample_order.push_back(ev.sample_id);
    }
  }

  const int v_count = static_cast<int>(vars.size());
  const int n = static_cast<int>(sample_order.size());
  const double bin_width = horizon / n_bins;

  std::vector<Eigen::MatrixXd> sums(n, Eigen::MatrixXd::Zero(v_count, n_bins));
  std::vector<Eigen::MatrixXd> counts(n, Eigen::MatrixXd::Zero(v_count, n_bins));
  std::int64_t dropped = 0;

  for (const auto& ev : events) {
    if (ev.timestamp >= horizon) {
      ++dropped;
      continue;
    }
    const int bin = static_cast<int>(std::floor(ev.timestamp / bin_width));
    const int vi = var_index.at(ev.variable);
    const int si = sample_index.at(ev.sample_id);
    sums[si](vi, bin) += ev.value;
    counts[si](vi, bin) += 1.0;
  }

  IngestResult out;
  out.dropped_late_events = dropped;
  out.dataset.variable_names = vars;
  out.dataset.records.reserve(n);
  for (int s = 0; s < n; ++s) {
    MtsRecord rec;
    rec.id = sample_order[s];
    rec.values = Eigen::MatrixXd::Constant(v_count, n_bins, kMissingValue);
    rec.mask = Mask::Constant(v_count, n_bins, false);
    for (int i = 0; i < v_count; ++i)
      for (int j = 0; j < n_bins; ++j)
        if (counts[s](i, j) > 0.0) {
          rec.values(i, j) = sums[s](i, j) / counts[s](i, j);
          rec.mask(i, j) = true;
        }
    out.dataset.records.push_back(std::move(rec));
  }
  return out;
}

std::pair<MtsDataset, std::vector<std::string>>
drop_high_missing_variables(const MtsDataset& dataset, double threshold) {
  if (dataset.records.empty()) fail("empty dataset");
  const auto [rates, overall] = missing_rates(dataset);
  (void)overall;
  const Eigen::Index v = dataset.n_variables();

  std::vector<int> keep;
  std::vector<std::string> dropped;
  for (Eigen::Index i = 0; i < v; ++i) {
    if (rates(i) <= threshold) {
      keep.push_back(static_cast<int>(i));
    } else {
      dropped.push_back(dataset.variable_names.empty() ? "v" + std::to_string(i)
                                                       : dataset.variable_names[i]);
    }
  }
  if (keep.empty()) fail("all variables exceed the missing-rate threshold");

  MtsDataset out;
  out.labels = dataset.labels;
  if (!dataset.variable_names.empty())
    for (int i : keep) out.variable_names.push_back(dataset.variable_names[i]);
  out.records.reserve(dataset.records.size());
  for (const auto& rec : dataset.records) {
    MtsRecord r;
    r.id = rec.id;
    r.values.resize(keep.size(), rec.length());
    r.mask.resize(keep.size(), rec.length());
    for (size_t k = 0; k < keep.size(); ++k) {
      r.values.row(k) = rec.values.row(keep[k]);
      r.mask.row(k) = rec.mask.row(keep[k]);
    }
    out.records.push_back(std::move(r));
  }
  return {std::move(out), std::move(dropped)};
}

std::pair<Eigen::VectorXd, double> missing_rates(const MtsDataset& dataset) {
  if (dataset.records.empty()) fail("empty dataset");
  const Eigen::Index v = dataset.n_variables();
  const Eigen::Index t = dataset.length();
  Eigen::VectorXd missing = Eigen::VectorXd::Zero(v);
  for (const auto& rec : dataset.records)
    for (Eigen::Index i = 0; i < v; ++i)
      missing(i) += static_cast<double>(t - rec.mask.row(i).count());
  const double cells_per_var = static_cast<double>(dataset.size()) * static_cast<double>(t);
  missing /= cells_per_var;
  return {missing, missing.mean()};
}

std::pair<MtsDataset, StandardizationStats> standardize(const MtsDataset& dataset) {
  const Eigen::Index v = dataset.n_variables();
  const Eigen::Index t = dataset.length();
  StandardizationStats stats;
  stats.mean = Eigen::VectorXd::Zero(v);
  stats.stddev = Eigen::VectorXd::Ones(v);

  for (Eigen::Index i = 0; i < v; ++i) {
    double sum = 0.0, sumsq = 0.0;
    std::int64_t count = 0;
    for (const auto& rec : dataset.records)
      for (Eigen::Index j = 0; j < t; ++j)
        if (rec.mask(i, j)) {
          sum += rec.values(i, j);
          sumsq += rec.values(i, j) * rec.values(i, j);
          ++count;
        }
    if (count == 0) {
      const std::string name = dataset.variable_names.empty() ? "v" + std::to_string(i)
                                                              : dataset.variable_names[i];
      fail("variable '" + name + "' has no observed cells");
    }
    const double mean = sum / count;
    const double var = std::max(0.0, sumsq / count - mean * mean);  // population
    double sd = std::sqrt(var);
    if (sd <= 0.0) {
      std::cerr << "warning: variable "
                << (dataset.variable_names.empty() ? std::to_string(i) : dataset.variable_names[i])
                << " is constant over observed cells; using stddev 1\n";
      sd = 1.0;
    }
    stats.mean(i) = mean;
    stats.stddev(i) = sd;
  }
  return {apply_standardization(dataset, stats), stats};
}

MtsDataset apply_standardization(const MtsDataset& dataset, const StandardizationStats& stats) {
  if (stats.mean.size() != dataset.n_variables())
    fail("standardization stats variable count does not match dataset");
  MtsDataset out = dataset;
  for (auto& rec : out.records)
    for (Eigen::Index i = 0; i < rec.n_variables(); ++i)
      for (Eigen::Index j = 0; j < rec.length(); ++j)
        if (rec.mask(i, j))
          rec.values(i, j) = (rec.values(i, j) - stats.mean(i)) / stats.stddev(i);
  return out;
}

MtsDataset impute(const MtsDataset& dataset, ImputeStrategy strategy) {
  MtsDataset out = dataset;
  const Eigen::Index v = dataset.n_variables();
  const Eigen::Index t = dataset.length();

  Eigen::VectorXd var_mean = Eigen::VectorXd::Zero(v);
  if (strategy == ImputeStrategy::Mean || strategy == ImputeStrategy::Locf) {
    for (Eigen::Index i = 0; i < v; ++i) {
      double sum = 0.0;
      std::int64_t count = 0;
      for (const auto& rec : dataset.records)
        for (Eigen::Index j = 0; j < t; ++j)
          if (rec.mask(i, j)) {
            sum += rec.values(i, j);
            ++count;
          }
      if (count == 0) {
        if (strategy == ImputeStrategy::Mean)
          fail("mean imputation on fully missing variable " + std::to_string(i));
        var_mean(i) = 0.0;  // locf fallback when nothing is ever observed
      } else {
        var_mean(i) = sum / count;
      }
    }
  }

  for (auto& rec : out.records) {
    for (Eigen::Index i = 0; i < v; ++i) {
      if (strategy == ImputeStrategy::Locf) {
        bool seen = false;
        double last = var_mean(i);  // cells before the first observation
        for (Eigen::Index j = 0; j < t; ++j) {
          if (rec.mask(i, j)) {
            last = rec.values(i, j);
            seen = true;
          } else {
            rec.values(i, j) = last;
          }
        }
        (void)seen;
      } else {
        const double fill = strategy == ImputeStrategy::Zero ? 0.0 : var_mean(i);
        for (Eigen::Index j = 0; j < t; ++j)
          if (!rec.mask(i, j)) rec.values(i, j) = fill;
      }
    }
    rec.mask.setConstant(true);
  }
  return out;
}

MtsDataset concat_missingness_indicators(const MtsDataset& dataset) {
  MtsDataset out;
  out.labels = dataset.labels;
  const Eigen::Index v = dataset.n_variables();
  const Eigen::Index t = dataset.length();
  if (!dataset.variable_names.empty()) {
    out.variable_names = dataset.variable_names;
    for (const auto& name : dataset.variable_names) out.variable_names.push_back(name + "__obs");
  }
  out.records.reserve(dataset.records.size());
  for (const auto& rec : dataset.records) {
    MtsRecord r;
    r.id = rec.id;
    r.values.resize(2 * v, t);
    r.mask.resize(2 * v, t);
    r.values.topRows(v) = rec.values;
    r.mask.topRows(v) = rec.mask;
    r.values.bottomRows(v) = rec.mask.cast<double>().matrix();
    r.mask.bottomRows(v).setConstant(true);
    out.records.push_back(std::move(r));
  }
  return out;
}

void save_dataset(const MtsDataset& dataset, const std::string& path) {
  std::ofstream f(path);
  if (!f) fail("cannot open '" + path + "' for writing");
  const Eigen::Index n = dataset.size();
  const Eigen::Index v = dataset.n_variables();
  const Eigen::Index t = dataset.length();
  f << "#mts N=" << n << " V=" << v << " T=" << t << "\n";
  for (Eigen::Index i = 0; i < v; ++i) {
    if (i) f << ",";
    f << (dataset.variable_names.empty() ? "v" + std::to_string(i) : dataset.variable_names[i]);
  }
  f << "\n";
  if (dataset.has_labels()) {
    f << "#labels ";
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i) f << ",";
      f << dataset.labels[i];
    }
    f << "\n";
  }
  char buf[64];
  for (const auto& rec : dataset.records) {
    for (Eigen::Index i = 0; i < v; ++i) {
      for (Eigen::Index j = 0; j < t; ++j) {
        if (j) f << ",";
        if (rec.mask(i, j)) {
          std::snprintf(buf, sizeof(buf), "%.17g", rec.values(i, j));
          f << buf;
        } else {
          f << "NA";
        }
      }
      f << "\n";
    }
  }
  if (!f) fail("write failure on '" + path + "'");
}

MtsDataset load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("cannot open '" + path + "'");
  std::string line;
  int line_no = 0;

  auto next_line = [&](std::string& out) {
    if (!std::getline(f, out)) return false;
    if (!out.empty() && out.back() == '\r') out.pop_back();
    ++line_no;
    return true;
  };

  if (!next_line(line)) fail("empty dataset file");
  long n = -1, v = -1, t = -1;
  if (std::sscanf(line.c_str(), "#mts N=%ld V=%ld T=%ld", &n, &v, &t) != 3 || n < 0 || v <= 0 || t <= 0)
    fail("malformed header at line 1: '" + line + "'");

  if (!next_line(line)) fail("missing variable-name line");
  MtsDataset out;
  out.variable_names = split_csv(line);
  if (static_cast<long>(out.variable_names.size()) != v)
    fail("variable-name count mismatch at line 2");

  std::streampos after_names = f.tellg();
  if (next_line(line) && line.rfind("#labels ", 0) == 0) {
    const auto toks = split_csv(line.substr(8));
    if (static_cast<long>(toks.size()) != n) fail("label count mismatch at line 3");
    for (const auto& tok : toks)
      out.labels.push_back(static_cast<int>(parse_double(tok, "in labels line")));
  } else {
    f.clear();
    f.seekg(after_names);
    line_no = 2;
  }

  out.records.reserve(n);
  for (long s = 0; s < n; ++s) {
    MtsRecord rec;
    rec.id = std::to_string(s);
    rec.values = Eigen::MatrixXd::Constant(v, t, kMissingValue);
    rec.mask = Mask::Constant(v, t, false);
    for (long i = 0; i < v; ++i) {
      if (!next_line(line))
        fail("row count not divisible by V: truncated at line " + std::to_string(line_no + 1));
      const auto toks = split_csv(line);
      if (static_cast<long>(toks.size()) != t)
        fail("expected " + std::to_string(t) + " columns at line " + std::to_string(line_no));
      for (long j = 0; j < t; ++j) {
        if (toks[j] == "NA") continue;
        rec.values(i, j) = parse_double(toks[j], "at line " + std::to_string(line_no));
        rec.mask(i, j) = true;
      }
    }
    out.records.push_back(std::move(rec));
  }
  while (next_line(line))
    if (!line.empty()) fail("trailing data at line " + std::to_string(line_no));
  out.validate();
  return out;
}

std::vector<LongEvent> load_long_events(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("cannot open '" + path + "'");
  std::string line;
  int line_no = 0;
  if (!std::getline(f, line)) fail("empty events file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "sample_id,timestamp,variable,value")
    fail("bad events header at line 1: '" + line + "'");

  std::vector<LongEvent> events;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto toks = split_csv(line);
    if (toks.size() != 4) fail("expected 4 fields at line " + std::to_string(line_no));
    LongEvent ev;
    ev.sample_id = toks[0];
    ev.timestamp = parse_double(toks[1], "at line " + std::to_string(line_no));
    ev.variable = toks[2];
    ev.value = parse_double(toks[3], "at line " + std::to_string(line_no));
    if (ev.timestamp < 0.0) fail("negative timestamp at line " + std::to_string(line_no));
    events.push_back(std::move(ev));
  }
  return events;
}

}  // namespace tck
