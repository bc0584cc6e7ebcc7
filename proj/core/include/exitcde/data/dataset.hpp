#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "exitcde/interp/time_series.hpp"
#include "exitcde/model/architecture.hpp"

namespace exitcde::data {

// Per-channel affine map v -> (v - mean) / scale.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> scale;

  void apply(interp::TimeSeriesSample& s) const;
};

struct Dataset {
  std::vector<interp::TimeSeriesSample> samples;
  model::Task task = model::Task::kClassification;
  std::size_t channels = 0;
  std::size_t classes = 0;  // classification
  std::size_t horizon = 0;  // forecasting
  std::optional<Normalization> normalization;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  // Largest terminal time over the samples.
  double terminal() const;
  // Throws DataError on mixed channel counts, labels outside [0, classes) or
  // targets that are not horizon x channels.
  void validate() const;
  // An empty dataset with the same task description.
  Dataset like() const;
};

struct CsvOptions {
  // Forecasting when positive: the last `horizon` rows of each sample become
  // its target. Otherwise a `label` column is required.
  std::size_t horizon = 0;
  // Span of every rescaled sample; 0 means the sample's row count minus one.
  double terminal = 0.0;
  // Number of classes; 0 infers max label + 1.
  std::size_t classes = 0;
};

// Columns: sample_id, t, c1..cd[, label]. Rows of a sample are contiguous or
// not; samples keep the order of their first row. Empty cells are missing.
Dataset load_csv(const std::string& path, const CsvOptions& options = {});
void save_csv(const Dataset& ds, const std::string& path);

// Affinely maps each sample's times onto [0, T].
void rescale_times(interp::TimeSeriesSample& s, double terminal);

// Mean and standard deviation of the observed values per channel; a zero
// deviation falls back to unit scale.
Normalization fit_normalization(const Dataset& train);
void apply_normalization(Dataset& ds, const Normalization& n);

// Marks floor(ratio * N * d) observed interior entries of every sample missing
// (floor(ratio * N) interior rows with `whole_rows`). First and last rows are
// never touched.
Dataset drop_observations(const Dataset& ds, double ratio, std::uint64_t seed, bool whole_rows = false);

enum class SyntheticKind { kTwoFreqSine, kDampedSpiral, kArForecasting };

const char* synthetic_name(SyntheticKind k);
SyntheticKind parse_synthetic(const std::string& name);

struct SyntheticOptions {
  std::size_t length = 50;
  double noise = 0.1;
  std::size_t horizon = 10;  // ar_forecasting
};

Dataset generate_synthetic(SyntheticKind kind, std::size_t n, std::uint64_t seed,
                           const SyntheticOptions& options = {});

struct Split {
  Dataset train, val, test;
  std::vector<std::string> warnings;
};

// Stratified by class for classification; fractions must sum to one.
Split split(const Dataset& ds, double train_fraction, double val_fraction, double test_fraction,
            std::uint64_t seed);

}  // namespace exitcde::data
