#pragma once

// Measurement protocol: Tukey outlier fences, monthly confidence intervals and
// their coverage, per-train RMSE, AIC/BIC order selection, and the four
// experiment configurations.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "railmarkov/archive.hpp"
#include "railmarkov/omlmpf.hpp"

namespace railmarkov {

// Keeps x with Q1 - 1.5 IQR <= x <= Q3 + 1.5 IQR; quartiles by linear
// interpolation (type-7). Input order is preserved.
inline std::vector<double> tukey_filter(const std::vector<double>& values) {
  if (values.empty()) throw Error("tukey_filter: empty input");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    double h = double(sorted.size() - 1) * q;
    std::size_t lo = std::size_t(std::floor(h));
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
  };
  double q1 = quantile(0.25);
  double q3 = quantile(0.75);
  double iqr = q3 - q1;
  double lo = q1 - 1.5 * iqr;
  double hi = q3 + 1.5 * iqr;
  std::vector<double> kept;
  for (double v : values) {
    if (v >= lo && v <= hi) kept.push_back(v);
  }
  return kept;
}

enum class CiMode {
  Spread,  // mean +- z * s          (default; late minutes spread widely)
  StdErr,  // mean +- z * s / sqrt(n)
};

inline double z_for_level(int level) {
  switch (level) {
    case 68: return 1.0;
    case 95: return 1.96;
    case 99: return 2.576;
    default: throw Error("CI level must be 68, 95 or 99");
  }
}

struct Interval {
  double lower = 0;
  double upper = 0;
  int level = 0;
  std::string station;
  int month = 0;
  std::size_t sample_n = 0;

  bool contains(double v) const { return v >= lower && v <= upper; }
};

// Empty optional when fewer than 2 values (no defined interval).
inline std::optional<Interval> monthly_ci(const std::vector<double>& values, int level,
                                          CiMode mode = CiMode::Spread,
                                          const std::string& station = "", int month = 0) {
  double z = z_for_level(level);
  if (values.size() < 2) return std::nullopt;
  double mean = 0;
  for (double v : values) mean += v;
  mean /= double(values.size());
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  double s = std::sqrt(ss / double(values.size() - 1));  // sample sd
  double half = z * s;
  if (mode == CiMode::StdErr) half /= std::sqrt(double(values.size()));
  return Interval{mean - half, mean + half, level, station, month, values.size()};
}

// Tukey-filtered late-minute samples per (train, station, month), built from
// a train's complete data. Lookup yields the matching monthly interval.
class IntervalTable {
 public:
  IntervalTable() = default;

  IntervalTable(const std::vector<Journey>& complete_data, CiMode mode) : mode_(mode) {
    std::map<Key, std::vector<double>> raw;
    for (const Journey& j : complete_data) {
      for (const JourneyRecord& r : j.stops) {
        raw[{j.train_number, r.station_code, r.month}].push_back(double(r.latemin));
      }
    }
    for (auto& [key, values] : raw) samples_[key] = tukey_filter(values);
  }

  std::optional<Interval> lookup(const std::string& train, const std::string& station, int month,
                                 int level) const {
    auto it = samples_.find({train, station, month});
    if (it == samples_.end()) return std::nullopt;
    return monthly_ci(it->second, level, mode_, station, month);
  }

 private:
  using Key = std::tuple<std::string, std::string, int>;
  std::map<Key, std::vector<double>> samples_;
  CiMode mode_ = CiMode::Spread;
};

struct TrainCoverage {
  std::string train_number;
  std::size_t checked = 0;  // predictions with a defined matching interval
  double pct68 = 0;
  double pct95 = 0;
  double pct99 = 0;
};

struct CoverageSummary {
  std::vector<TrainCoverage> per_train;
  double avg68 = 0;  // unweighted mean across trains
  double avg95 = 0;
  double avg99 = 0;
};

inline CoverageSummary ci_coverage(const std::vector<PredictionReport>& reports,
                                   const IntervalTable& intervals) {
  struct Counter {
    std::size_t checked = 0, in68 = 0, in95 = 0, in99 = 0;
  };
  std::map<std::string, Counter> by_train;
  for (const PredictionReport& report : reports) {
    if (!report.ok) continue;
    Counter& c = by_train[report.train_number];
    int month = month_of(report.date);
    for (const StationPrediction& row : report.rows) {
      auto i68 = intervals.lookup(report.train_number, row.station_code, month, 68);
      if (!i68) continue;
      auto i95 = intervals.lookup(report.train_number, row.station_code, month, 95);
      auto i99 = intervals.lookup(report.train_number, row.station_code, month, 99);
      ++c.checked;
      if (i68->contains(row.predicted)) ++c.in68;
      if (i95->contains(row.predicted)) ++c.in95;
      if (i99->contains(row.predicted)) ++c.in99;
    }
  }

  CoverageSummary out;
  for (const auto& [train, c] : by_train) {
    if (c.checked == 0) {
      log::warn("train " + train + " has no defined matching interval, excluded from coverage");
      continue;
    }
    TrainCoverage tc;
    tc.train_number = train;
    tc.checked = c.checked;
    tc.pct68 = 100.0 * double(c.in68) / double(c.checked);
    tc.pct95 = 100.0 * double(c.in95) / double(c.checked);
    tc.pct99 = 100.0 * double(c.in99) / double(c.checked);
    out.per_train.push_back(tc);
  }
  for (const TrainCoverage& tc : out.per_train) {
    out.avg68 += tc.pct68;
    out.avg95 += tc.pct95;
    out.avg99 += tc.pct99;
  }
  if (!out.per_train.empty()) {
    out.avg68 /= double(out.per_train.size());
    out.avg95 /= double(out.per_train.size());
    out.avg99 /= double(out.per_train.size());
  }
  return out;
}

// AIC = n ln(SSE/n) + 2p ; BIC = n ln(SSE/n) + p ln(n). SSE of exactly zero
// scores -inf (a perfect fit ranks best).
inline double aic(std::size_t n_obs, double sse, std::size_t p) {
  if (n_obs < 1 || p < 1 || sse < 0 || !std::isfinite(sse)) {
    throw Error("aic: need n_obs >= 1, p >= 1, SSE >= 0");
  }
  if (sse == 0) return -std::numeric_limits<double>::infinity();
  return double(n_obs) * std::log(sse / double(n_obs)) + 2.0 * double(p);
}

inline double bic(std::size_t n_obs, double sse, std::size_t p) {
  if (n_obs < 1 || p < 1 || sse < 0 || !std::isfinite(sse)) {
    throw Error("bic: need n_obs >= 1, p >= 1, SSE >= 0");
  }
  if (sse == 0) return -std::numeric_limits<double>::infinity();
  return double(n_obs) * std::log(sse / double(n_obs)) + double(p) * std::log(double(n_obs));
}

enum class Criterion { Aic, Bic };

inline std::string to_string(Criterion c) { return c == Criterion::Aic ? "AIC" : "BIC"; }

struct OrderSelectionInput {
  std::string train_number;
  int n_cap = 0;          // the N of the run this measurement came from
  std::size_t n_obs = 0;  // observations entering SSE
  double sse = 0;
  std::size_t p = 0;      // feature-vector length of the run
};

struct OrderSelection {
  std::map<std::string, int> winner_per_train;
  std::array<int, kMaxOrder + 1> counts{};  // counts[N] = trains whose best run used cap N
  std::vector<std::string> skipped;         // trains missing at least one run
};

// Winner = argmin score over N = 1..n_max; ties go to the smaller N.
inline OrderSelection select_order(const std::vector<OrderSelectionInput>& inputs,
                                   Criterion criterion, int n_max = kMaxOrder) {
  std::map<std::string, std::map<int, double>> scores;
  for (const OrderSelectionInput& in : inputs) {
    double score = criterion == Criterion::Aic ? aic(in.n_obs, in.sse, in.p)
                                               : bic(in.n_obs, in.sse, in.p);
    scores[in.train_number][in.n_cap] = score;
  }

  OrderSelection out;
  for (const auto& [train, per_n] : scores) {
    bool complete = true;
    for (int n = 1; n <= n_max; ++n) {
      if (!per_n.count(n)) complete = false;
    }
    if (!complete) {
      log::warn("train " + train + " is missing runs, skipped in order selection");
      out.skipped.push_back(train);
      continue;
    }
    int best_n = 1;
    double best = per_n.at(1);
    for (int n = 2; n <= n_max; ++n) {
      if (per_n.at(n) < best) {
        best = per_n.at(n);
        best_n = n;
      }
    }
    out.winner_per_train[train] = best_n;
    out.counts[std::size_t(best_n)]++;
  }
  return out;
}

enum class NObsMode {
  EvalPredictions,  // n = number of evaluated predictions (default)
  TrainRows,        // n = training rows of the run's order-N frames
};

struct TrainRmse {
  std::string train_number;
  std::size_t n_journeys = 0;
  double mean_rmse = 0;
};

struct RunResult {
  ModelKind kind = ModelKind::Forest;
  int n_cap = 0;
  CoverageSummary coverage;
  std::vector<TrainRmse> rmse;
  std::vector<OrderSelectionInput> selection_inputs;
  std::vector<PredictionReport> reports;
};

struct ExperimentResult {
  int exp_id = 0;
  FeatureProfile profile = FeatureProfile::Numeric;
  std::string eval_set;  // cv | known_test | unknown_test
  std::vector<RunResult> runs;
  // (criterion, kind) -> winner counts across N
  std::map<std::pair<std::string, std::string>, OrderSelection> order_selection;
};

struct EvalParams {
  ForestParams forest;
  RidgeOptions ridge;
  KnnConfig knn;
  int n_max = kMaxOrder;
  std::vector<ModelKind> kinds = {ModelKind::Forest, ModelKind::Ridge};
  CiMode ci_mode = CiMode::Spread;
  NObsMode n_obs_mode = NObsMode::EvalPredictions;
};

inline FeatureProfile experiment_profile(int exp_id) {
  if (exp_id == 1) return FeatureProfile::Codes;
  if (exp_id >= 2 && exp_id <= 4) return FeatureProfile::Numeric;
  throw UsageError("experiment id must be 1..4");
}

inline const std::vector<Journey>& experiment_eval_set(int exp_id, const DataSplit& split) {
  switch (exp_id) {
    case 1:
    case 3: return split.cv;
    case 2: return split.unknown_test;
    case 4: return split.known_test;
    default: throw UsageError("experiment id must be 1..4");
  }
}

inline std::string experiment_eval_name(int exp_id) {
  switch (exp_id) {
    case 1:
    case 3: return "cv";
    case 2: return "unknown_test";
    case 4: return "known_test";
    default: throw UsageError("experiment id must be 1..4");
  }
}

// Widest encoded vector among the registry's order-N models; the p of a run.
inline std::size_t run_feature_width(const ModelRegistry& registry, int n_cap) {
  std::size_t p = 0;
  for (const auto& [key, models] : registry.models) {
    if (key.second != n_cap) continue;
    p = std::max(p, encoded_width(registry.profile, n_cap, models.vocab));
  }
  return p;
}

// One experiment: train (or reuse) the profile's registry, roll N-OMLMPF for
// N = 1..n_max with each model kind over the experiment's evaluation set, and
// measure coverage, RMSE and the order-selection scores.
inline ExperimentResult run_experiment(int exp_id, const DataSplit& split,
                                       const StationFeatureTable& stations,
                                       const TrainMetadataTable& trains, const EvalParams& params,
                                       const ModelRegistry* pretrained = nullptr) {
  ExperimentResult result;
  result.exp_id = exp_id;
  result.profile = experiment_profile(exp_id);
  result.eval_set = experiment_eval_name(exp_id);

  ModelRegistry local;
  const ModelRegistry* registry = pretrained;
  if (registry) {
    if (registry->profile != result.profile) {
      throw Error("experiment " + std::to_string(exp_id) + " needs the " +
                  to_string(result.profile) + " profile, archive has " +
                  to_string(registry->profile));
    }
  } else {
    TrainOptions opt;
    opt.profile = result.profile;
    opt.n_max = params.n_max;
    opt.forest = params.forest;
    opt.ridge = params.ridge;
    local = train_models(split, stations, trains, opt);
    registry = &local;
  }

  // zero-shot audit: every training row must come from the training share
  std::set<std::string> training_keys;
  for (const Journey& j : split.train) training_keys.insert(j.key());
  for (const std::string& src : registry->source_journeys) {
    if (!training_keys.count(src)) {
      throw Error("zero-shot violation: model trained on out-of-split journey " + src);
    }
  }

  const std::vector<Journey>& eval_set = experiment_eval_set(exp_id, split);
  IntervalTable intervals(split.all_journeys(), params.ci_mode);

  for (ModelKind kind : params.kinds) {
    for (int n = 1; n <= params.n_max; ++n) {
      PredictConfig cfg;
      cfg.n_cap = n;
      cfg.kind = kind;
      cfg.knn = params.knn;

      RunResult run;
      run.kind = kind;
      run.n_cap = n;
      run.reports = predict_and_score(eval_set, *registry, stations, trains, cfg);
      run.coverage = ci_coverage(run.reports, intervals);

      std::size_t p = run_feature_width(*registry, n);
      std::map<std::string, std::pair<std::size_t, double>> sse_by_train;  // n_obs, sse
      std::map<std::string, std::pair<std::size_t, double>> rmse_by_train; // count, sum
      for (const PredictionReport& report : run.reports) {
        if (!report.ok) continue;
        auto& agg = sse_by_train[report.train_number];
        for (const StationPrediction& row : report.rows) {
          if (!row.actual) continue;
          double e = row.predicted - *row.actual;
          agg.first += 1;
          agg.second += e * e;
        }
        if (report.rmse) {
          auto& rm = rmse_by_train[report.train_number];
          rm.first += 1;
          rm.second += *report.rmse;
        }
      }
      std::size_t train_rows_n = 0;
      if (params.n_obs_mode == NObsMode::TrainRows) {
        for (const auto& [key, rows] : registry->frame_rows) {
          if (key.second == n) train_rows_n += rows;
        }
      }
      for (const auto& [train, agg] : sse_by_train) {
        if (agg.first == 0) continue;
        OrderSelectionInput in;
        in.train_number = train;
        in.n_cap = n;
        in.n_obs = params.n_obs_mode == NObsMode::TrainRows ? train_rows_n : agg.first;
        in.sse = agg.second;
        in.p = p;
        run.selection_inputs.push_back(in);
      }
      for (const auto& [train, rm] : rmse_by_train) {
        run.rmse.push_back({train, rm.first, rm.second / double(rm.first)});
      }
      result.runs.push_back(std::move(run));
    }
  }

  for (ModelKind kind : params.kinds) {
    std::vector<OrderSelectionInput> inputs;
    for (const RunResult& run : result.runs) {
      if (run.kind != kind) continue;
      inputs.insert(inputs.end(), run.selection_inputs.begin(), run.selection_inputs.end());
    }
    for (Criterion crit : {Criterion::Bic, Criterion::Aic}) {
      result.order_selection[{to_string(crit), to_string(kind)}] =
          select_order(inputs, crit, params.n_max);
    }
  }
  return result;
}

// Long-format monthly mean late minutes, the plot-ready export.
struct MonthlyMean {
  std::string train_number;
  std::string station_code;
  int month = 0;
  std::size_t n = 0;
  double mean_latemin = 0;
};

inline std::vector<MonthlyMean> monthly_means(const std::vector<Journey>& journeys) {
  std::map<std::tuple<std::string, std::string, int>, std::pair<std::size_t, double>> agg;
  for (const Journey& j : journeys) {
    for (const JourneyRecord& r : j.stops) {
      auto& a = agg[{j.train_number, r.station_code, r.month}];
      a.first += 1;
      a.second += double(r.latemin);
    }
  }
  std::vector<MonthlyMean> out;
  for (const auto& [key, a] : agg) {
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), a.first,
                   a.second / double(a.first)});
  }
  return out;
}

}  // namespace railmarkov
