#include "exitcde/data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "exitcde/errors.hpp"

namespace exitcde::data {

using interp::TimeSeriesSample;

void Normalization::apply(TimeSeriesSample& s) const {
  const std::size_t d = s.channels;
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    double& v = s.values[i];
    if (!interp::is_missing(v)) v = (v - mean[i % d]) / scale[i % d];
  }
  for (std::size_t i = 0; i < s.target.size(); ++i) {
    s.target[i] = (s.target[i] - mean[i % d]) / scale[i % d];
  }
}

double Dataset::terminal() const {
  double t = 0.0;
  for (const auto& s : samples) t = std::max(t, s.terminal_time());
  return t;
}

void Dataset::validate() const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::string who = "sample " + std::to_string(i);
    if (s.channels != channels) {
      throw DataError(who + " has " + std::to_string(s.channels) + " channels, expected " +
                      std::to_string(channels));
    }
    s.validate();
    if (task == model::Task::kClassification) {
      if (!s.label || *s.label >= classes) throw DataError(who + " has a label outside [0, classes)");
    } else if (s.target.size() != horizon * channels) {
      throw DataError(who + " target is not horizon x channels");
    }
  }
}

Dataset Dataset::like() const {
  Dataset d;
  d.task = task;
  d.channels = channels;
  d.classes = classes;
  d.horizon = horizon;
  d.normalization = normalization;
  return d;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double parse_cell(const std::string& cell, std::size_t line, const std::string& column) {
  double v = 0.0;
  const auto* end = cell.data() + cell.size();
  const auto r = std::from_chars(cell.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) {
    throw DataError("line " + std::to_string(line) + ": column '" + column + "' value '" + cell +
                    "' is not a number");
  }
  return v;
}

struct RawRow {
  double t;
  std::vector<double> values;
  std::optional<double> label;
  std::size_t line;
};

}  // namespace

void rescale_times(TimeSeriesSample& s, double terminal) {
  if (s.times.size() < 2) return;
  const double t0 = s.times.front(), t1 = s.times.back();
  if (t0 == 0.0 && t1 == terminal) return;
  for (double& t : s.times) t = (t - t0) / (t1 - t0) * terminal;
  s.times.back() = terminal;
}

Dataset load_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
  const auto header = split_csv(line);
  std::vector<std::string> cols;
  for (const auto& h : header) cols.push_back(trim(h));
  if (cols.size() < 3 || cols[0] != "sample_id" || cols[1] != "t") {
    throw DataError("line 1: header must start with sample_id,t");
  }
  const bool has_label = cols.back() == "label";
  const std::size_t d = cols.size() - 2 - (has_label ? 1 : 0);
  if (d == 0) throw DataError("line 1: no value columns");
  if (options.horizon == 0 && !has_label) throw DataError("line 1: a label column is required for classification");

  std::vector<std::string> order;
  std::map<std::string, std::vector<RawRow>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != cols.size()) {
      throw DataError("line " + std::to_string(lineno) + ": expected " + std::to_string(cols.size()) +
                      " cells, got " + std::to_string(cells.size()));
    }
    const std::string id = trim(cells[0]);
    RawRow r;
    r.line = lineno;
    r.t = parse_cell(trim(cells[1]), lineno, "t");
    for (std::size_t c = 0; c < d; ++c) {
      const auto cell = trim(cells[2 + c]);
      r.values.push_back(cell.empty() ? interp::kMissing : parse_cell(cell, lineno, cols[2 + c]));
    }
    if (has_label) {
      const auto cell = trim(cells.back());
      if (!cell.empty()) r.label = parse_cell(cell, lineno, "label");
    }
    auto [it, fresh] = rows.try_emplace(id);
    if (fresh) order.push_back(id);
    if (!it->second.empty() && !(r.t > it->second.back().t)) {
      throw DataError("line " + std::to_string(lineno) + ": time " + trim(cells[1]) +
                      " does not increase within sample '" + id + "'");
    }
    it->second.push_back(std::move(r));
  }

  Dataset ds;
  ds.channels = d;
  ds.task = options.horizon > 0 ? model::Task::kForecasting : model::Task::kClassification;
  ds.horizon = options.horizon;
  std::size_t max_label = 0;
  for (const auto& id : order) {
    const auto& rs = rows[id];
    TimeSeriesSample s;
    s.channels = d;
    const std::size_t h = options.horizon;
    if (rs.size() < h + 2) {
      throw DataError("sample '" + id + "' needs at least " + std::to_string(h + 2) + " rows");
    }
    const std::size_t n = rs.size() - h;
    for (std::size_t i = 0; i < n; ++i) {
      s.times.push_back(rs[i].t);
      s.values.insert(s.values.end(), rs[i].values.begin(), rs[i].values.end());
    }
    for (std::size_t i = n; i < rs.size(); ++i) {
      for (double v : rs[i].values) {
        if (interp::is_missing(v)) {
          throw DataError("line " + std::to_string(rs[i].line) + ": forecasting target is missing");
        }
        s.target.push_back(v);
      }
    }
    if (ds.task == model::Task::kClassification) {
      const auto& lab = rs.front().label;
      for (const auto& r : rs) {
        if (r.label != lab) {
          throw DataError("line " + std::to_string(r.line) + ": label differs within sample '" + id + "'");
        }
      }
      if (!lab || *lab < 0 || *lab != std::floor(*lab)) {
        throw DataError("line " + std::to_string(rs.front().line) + ": label must be a non-negative integer");
      }
      s.label = static_cast<std::size_t>(*lab);
      max_label = std::max(max_label, *s.label);
    }
    rescale_times(s, options.terminal > 0.0 ? options.terminal : static_cast<double>(n - 1));
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw DataError("'" + path + "' has no samples");
  if (ds.task == model::Task::kClassification) {
    ds.classes = options.classes > 0 ? options.classes : max_label + 1;
  }
  ds.validate();
  return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "sample_id,t";
  for (std::size_t c = 0; c < ds.channels; ++c) out << ",c" << c + 1;
  if (ds.task == model::Task::kClassification) out << ",label";
  out << "\n";
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    auto row = [&](double t, const double* v) {
      out << i << "," << model::format_double(t);
      for (std::size_t c = 0; c < ds.channels; ++c) {
        out << ",";
        if (!interp::is_missing(v[c])) out << model::format_double(v[c]);
      }
      if (ds.task == model::Task::kClassification) out << "," << *s.label;
      out << "\n";
    };
    for (std::size_t r = 0; r < s.length(); ++r) row(s.times[r], &s.values[r * ds.channels]);
    for (std::size_t k = 0; k < ds.horizon; ++k) {
      row(s.terminal_time() + static_cast<double>(k + 1), &s.target[k * ds.channels]);
    }
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

Normalization fit_normalization(const Dataset& train) {
  Normalization n;
  n.mean.assign(train.channels, 0.0);
  n.scale.assign(train.channels, 1.0);
  for (std::size_t c = 0; c < train.channels; ++c) {
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (const auto& s : train.samples) {
      for (std::size_t r = 0; r < s.length(); ++r) {
        const double v = s.at(r, c);
        if (interp::is_missing(v)) continue;
        sum += v;
        ++count;
      }
    }
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    for (const auto& s : train.samples) {
      for (std::size_t r = 0; r < s.length(); ++r) {
        const double v = s.at(r, c);
        if (!interp::is_missing(v)) sq += (v - mean) * (v - mean);
      }
    }
    const double sd = std::sqrt(sq / static_cast<double>(count));
    n.mean[c] = mean;
    n.scale[c] = sd > 0.0 ? sd : 1.0;
  }
  return n;
}

void apply_normalization(Dataset& ds, const Normalization& n) {
  if (n.mean.size() != ds.channels) throw DataError("normalization channel count differs from dataset");
  for (auto& s : ds.samples) n.apply(s);
  ds.normalization = n;
}

Dataset drop_observations(const Dataset& ds, double ratio, std::uint64_t seed, bool whole_rows) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw DataError("drop ratio must lie in [0, 1)");
  Dataset out = ds;
  if (ratio == 0.0) return out;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    auto& s = out.samples[i];
    const std::size_t n = s.length(), d = s.channels;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    std::mt19937_64 rng(seq);
    const std::string who = "sample " + std::to_string(i);
    for (std::size_t c = 0; c < d; ++c) {
      if (interp::is_missing(s.at(0, c)) || interp::is_missing(s.at(n - 1, c))) {
        throw DataError(who + " channel " + std::to_string(c) + " lacks an endpoint observation");
      }
    }
    if (whole_rows) {
      const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
      if (n < 2 || k > n - 2) throw DataError(who + ": dropping " + std::to_string(k) + " rows leaves no endpoints");
      std::vector<std::size_t> rows(n - 2);
      std::iota(rows.begin(), rows.end(), 1);
      std::shuffle(rows.begin(), rows.end(), rng);
      for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t c = 0; c < d; ++c) s.at(rows[j], c) = interp::kMissing;
      }
      continue;
    }
    std::vector<std::size_t> entries;
    for (std::size_t r = 1; r + 1 < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        if (!interp::is_missing(s.at(r, c))) entries.push_back(r * d + c);
      }
    }
    const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n * d)));
    if (k > entries.size()) {
      throw DataError(who + ": cannot drop " + std::to_string(k) + " entries, only " +
                      std::to_string(entries.size()) + " interior observations remain");
    }
    std::shuffle(entries.begin(), entries.end(), rng);
    for (std::size_t j = 0; j < k; ++j) s.values[entries[j]] = interp::kMissing;
  }
  return out;
}

const char* synthetic_name(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::kTwoFreqSine: return "two_freq_sine_classification";
    case SyntheticKind::kDampedSpiral: return "damped_spiral_classification";
    case SyntheticKind::kArForecasting: return "ar_forecasting";
  }
  return "unknown";
}

SyntheticKind parse_synthetic(const std::string& name) {
  if (name == "two_freq_sine_classification" || name == "two_freq_sine") return SyntheticKind::kTwoFreqSine;
  if (name == "damped_spiral_classification" || name == "damped_spiral") return SyntheticKind::kDampedSpiral;
  if (name == "ar_forecasting") return SyntheticKind::kArForecasting;
  throw ConfigError("unknown synthetic dataset '" + name + "'");
}

Dataset generate_synthetic(SyntheticKind kind, std::size_t n, std::uint64_t seed,
                           const SyntheticOptions& o) {
  if (n == 0) throw DataError("cannot generate an empty dataset");
  if (o.length < 2) throw DataError("synthetic series need at least two steps");
  if (!(o.noise >= 0.0)) throw DataError("synthetic noise must be non-negative");
  constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t len = o.length;
  const double T = static_cast<double>(len - 1);

  Dataset ds;
  switch (kind) {
    case SyntheticKind::kTwoFreqSine:
      ds.channels = 1;
      ds.classes = 2;
      break;
    case SyntheticKind::kDampedSpiral:
      ds.channels = 2;
      ds.classes = 2;
      break;
    case SyntheticKind::kArForecasting:
      if (o.horizon == 0) throw DataError("ar_forecasting needs a positive horizon");
      ds.task = model::Task::kForecasting;
      ds.channels = 2;
      ds.horizon = o.horizon;
      break;
  }

  for (std::size_t i = 0; i < n; ++i) {
    TimeSeriesSample s;
    s.channels = ds.channels;
    for (std::size_t r = 0; r < len; ++r) s.times.push_back(static_cast<double>(r));
    switch (kind) {
      case SyntheticKind::kTwoFreqSine: {
        const std::size_t label = i % 2;
        const double freq = label == 0 ? 2.0 : 4.0;
        for (double t : s.times) s.values.push_back(std::sin(freq * kPi * t / T) + o.noise * noise(rng));
        s.label = label;
        break;
      }
      case SyntheticKind::kDampedSpiral: {
        const std::size_t label = i % 2;
        const double decay = (label == 0 ? 0.5 : 2.5) / T;
        const double omega = 4.0 * kPi / T;
        const double phase = 2.0 * kPi * unit(rng);
        for (double t : s.times) {
          const double a = std::exp(-decay * t);
          s.values.push_back(a * std::cos(omega * t + phase) + o.noise * noise(rng));
          s.values.push_back(a * std::sin(omega * t + phase) + o.noise * noise(rng));
        }
        s.label = label;
        break;
      }
      case SyntheticKind::kArForecasting: {
        // x_t = a1 x_{t-1} + a2 x_{t-2} + noise, stationary coefficients.
        const double a1[2] = {1.5, 0.6};
        const double a2[2] = {-0.75, 0.2};
        std::vector<double> x((len + o.horizon) * 2);
        for (std::size_t c = 0; c < 2; ++c) {
          x[c] = noise(rng);
          x[2 + c] = noise(rng);
          for (std::size_t r = 2; r < len + o.horizon; ++r) {
            x[r * 2 + c] = a1[c] * x[(r - 1) * 2 + c] + a2[c] * x[(r - 2) * 2 + c] + o.noise * noise(rng);
          }
        }
        s.values.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(len * 2));
        s.target.assign(x.begin() + static_cast<std::ptrdiff_t>(len * 2), x.end());
        break;
      }
    }
    ds.samples.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

Split split(const Dataset& ds, double f_train, double f_val, double f_test, std::uint64_t seed) {
  if (f_train < 0.0 || f_val < 0.0 || f_test < 0.0 || std::abs(f_train + f_val + f_test - 1.0) > 1e-9) {
    throw DataError("split fractions must be non-negative and sum to 1");
  }
  std::mt19937_64 rng(seed);
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const std::size_t key = ds.task == model::Task::kClassification ? *ds.samples[i].label : 0;
    groups[key].push_back(i);
  }
  std::vector<std::size_t> tr, va, te;
  for (auto& [key, idx] : groups) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const double m = static_cast<double>(idx.size());
    const auto n_train = static_cast<std::size_t>(std::llround(f_train * m));
    const auto n_val = std::min(idx.size() - n_train, static_cast<std::size_t>(std::llround(f_val * m)));
    tr.insert(tr.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    va.insert(va.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train),
              idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    te.insert(te.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  }
  Split out{ds.like(), ds.like(), ds.like(), {}};
  auto fill = [&](std::vector<std::size_t>& idx, Dataset& dst, double frac, const char* name) {
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) dst.samples.push_back(ds.samples[i]);
    if (ds.task != model::Task::kClassification || frac == 0.0) return;
    for (const auto& [key, members] : groups) {
      const bool present = std::any_of(dst.samples.begin(), dst.samples.end(),
                                       [&](const TimeSeriesSample& s) { return *s.label == key; });
      if (!present) {
        out.warnings.push_back(std::string(name) + " split has no sample of class " + std::to_string(key));
      }
    }
  };
  fill(tr, out.train, f_train, "train");
  fill(va, out.val, f_val, "val");
  fill(te, out.test, f_test, "test");
  return out;
}

}  // namespace exitcde::data
