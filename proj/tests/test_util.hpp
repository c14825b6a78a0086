#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "tck/dataset.hpp"
#include "tck/rng.hpp"

namespace testutil {

// Random labeled dataset with iid missingness, values N(0,1) plus a small
// class shift so fits do not collapse.
inline tck::MtsDataset random_dataset(int n, int v, int t, double missing_frac,
                                      std::uint64_t seed, int n_classes = 2) {
  std::mt19937_64 gen(seed);
  tck::MtsDataset dataset;
  for (int var = 0; var < v; ++var) dataset.variable_names.push_back("v" + std::to_string(var));
  for (int i = 0; i < n; ++i) {
    tck::MtsRecord rec;
    rec.id = std::to_string(i);
    rec.values.resize(v, t);
    rec.mask.resize(v, t);
    const int label = 1 + i % n_classes;
    for (int a = 0; a < v; ++a) {
      for (int s = 0; s < t; ++s) {
        const bool observed = tck::uniform01(gen) >= missing_frac;
        rec.mask(a, s) = observed;
        rec.values(a, s) =
            observed ? tck::normal01(gen) + 0.4 * label : tck::kMissingValue;
      }
    }
    dataset.records.push_back(std::move(rec));
    dataset.labels.push_back(label);
  }
  // Guarantee at least one observation per variable so standardization and
  // prior statistics are well defined.
  for (int a = 0; a < v; ++a) {
    bool any = false;
    for (const auto& rec : dataset.records) any = any || rec.mask.row(a).any();
    if (!any) {
      dataset.records[0].mask(a, 0) = true;
      dataset.records[0].values(a, 0) = 0.1;
    }
  }
  return dataset;
}

}  // namespace testutil
