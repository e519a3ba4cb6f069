#pragma once

// Training and feed-forward journey prediction. Models are keyed by
// (station, order); a station missing the required order borrows the model of
// the nearest known station that has one (two-step k-NN), including known
// stations that simply never saw that many predecessors.

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "railmarkov/data_model.hpp"
#include "railmarkov/feature_frames.hpp"
#include "railmarkov/regressors.hpp"
#include "railmarkov/station_knn.hpp"

namespace railmarkov {

enum class ModelKind { Forest, Ridge };

inline std::string to_string(ModelKind k) { return k == ModelKind::Forest ? "forest" : "ridge"; }

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "forest") return ModelKind::Forest;
  if (s == "ridge") return ModelKind::Ridge;
  throw UsageError("unknown model kind \"" + s + "\" (want forest|ridge)");
}

struct StationModels {
  Forest forest;
  RidgeModel ridge;
  CategoryVocab vocab;
};

// On-demand provider for models that are not held in memory; an archive-backed
// implementation lives next to the archive reader.
class StationModelSource {
 public:
  virtual ~StationModelSource() = default;
  virtual bool has(const std::string& station, int order) const = 0;
  virtual const StationModels& get(const std::string& station, int order) const = 0;
};

struct ModelRegistry {
  FeatureProfile profile = FeatureProfile::Numeric;
  ForestParams forest_params;
  RidgeOptions ridge_options;
  std::map<std::pair<std::string, int>, StationModels> models;
  std::map<std::pair<std::string, int>, std::size_t> frame_rows;  // training rows per model
  std::map<int, std::set<std::string>> ips_lists;      // order -> stations with models
  std::set<std::string> source_journeys;               // "train/journey_id" of every training row
  std::shared_ptr<StationModelSource> lazy;            // optional backing store

  bool has(const std::string& station, int order) const {
    return models.count({station, order}) > 0 || (lazy && lazy->has(station, order));
  }

  const StationModels& get(const std::string& station, int order) const {
    auto it = models.find({station, order});
    if (it != models.end()) return it->second;
    if (lazy && lazy->has(station, order)) return lazy->get(station, order);
    throw Error("registry has no " + std::to_string(order) + "-order model for " + station);
  }

  const std::set<std::string>& ips_list(int order) const {
    static const std::set<std::string> empty;
    auto it = ips_lists.find(order);
    return it == ips_lists.end() ? empty : it->second;
  }

  int max_order() const {
    int best = 0;
    for (const auto& [order, stations] : ips_lists) {
      if (!stations.empty()) best = std::max(best, order);
    }
    return best;
  }
};

struct TrainOptions {
  FeatureProfile profile = FeatureProfile::Numeric;
  int n_max = kMaxOrder;
  ForestParams forest;
  RidgeOptions ridge;
};

// Fits forest + ridge models for every (known station, order) with a
// non-empty frame and records the per-order station lists.
inline ModelRegistry train_models(const DataSplit& split, const StationFeatureTable& stations,
                                  const TrainMetadataTable& trains, const TrainOptions& opt) {
  FrameBuilder builder(stations, trains);
  auto frames = builder.build_station_frames(split, opt.n_max);
  if (frames.empty()) throw Error("train_models: no non-empty training frame");

  ModelRegistry registry;
  registry.profile = opt.profile;
  registry.forest_params = opt.forest;
  registry.ridge_options = opt.ridge;
  for (int order = 1; order <= opt.n_max; ++order) registry.ips_lists[order] = {};

  std::vector<const FeatureFrame*> ordered;
  ordered.reserve(frames.size());
  for (const auto& [key, frame] : frames) ordered.push_back(&frame);

  std::vector<StationModels> fitted(ordered.size());
  parallel_for(ordered.size(), [&](std::size_t i) {
    const FeatureFrame& frame = *ordered[i];
    Matrix x(frame.rows.size(), encoded_width(opt.profile, frame.order, frame.vocab));
    std::vector<double> y(frame.rows.size());
    for (std::size_t r = 0; r < frame.rows.size(); ++r) {
      std::vector<double> enc = encode_row(frame.rows[r], opt.profile, frame.vocab);
      std::copy(enc.begin(), enc.end(), x.a.begin() + long(r * x.cols));
      y[r] = frame.rows[r].target_late_minutes;
    }
    ForestParams params = opt.forest;
    // per-frame stream so adding stations does not reshuffle other fits
    params.seed = derive_seed(opt.forest.seed, hash_str(frame.station_code) ^
                                                   std::uint64_t(frame.order));
    StationModels m;
    m.forest = fit_forest(x, y, params);
    m.ridge = fit_ridge(x, y, opt.ridge);
    m.vocab = frame.vocab;
    fitted[i] = std::move(m);
  });

  for (std::size_t i = 0; i < ordered.size(); ++i) {
    const FeatureFrame& frame = *ordered[i];
    registry.models.emplace(std::make_pair(frame.station_code, frame.order),
                            std::move(fitted[i]));
    registry.frame_rows[{frame.station_code, frame.order}] = frame.rows.size();
    registry.ips_lists[frame.order].insert(frame.station_code);
    for (const ContextRow& row : frame.rows) {
      registry.source_journeys.insert(row.train_number + "/" + row.journey_id);
    }
  }
  return registry;
}

struct PredictConfig {
  int n_cap = 3;  // N in N-OMLMPF
  ModelKind kind = ModelKind::Forest;
  KnnConfig knn;
};

struct RouteStop {
  std::string station_code;
  double dfs_km = 0;
};

struct RouteQuery {
  std::string train_number;
  std::string journey_id;
  Date date{};
  std::vector<RouteStop> stops;
};

inline RouteQuery route_from_journey(const Journey& journey) {
  RouteQuery q;
  q.train_number = journey.train_number;
  q.journey_id = journey.journey_id;
  q.date = journey.start_date();
  for (const JourneyRecord& r : journey.stops) q.stops.push_back({r.station_code, r.distance_km});
  return q;
}

struct StationPrediction {
  std::string station_code;
  int order_used = 0;               // min(position, N); 0 at the source
  std::string model_station;        // self, or the k-NN fallback
  double predicted = 0;
  std::optional<double> actual;
  bool fallback = false;
  double fallback_geo_km = 0;
  double fallback_feat_dist = 0;
};

struct PredictionReport {
  std::string train_number;
  std::string journey_id;
  Date date{};
  bool ok = true;
  std::string error;
  std::vector<StationPrediction> rows;
  std::vector<double> lms;  // predicted late minutes, lms[0] == 0
  std::optional<double> rmse;
};

// Feed-forward N-OMLMPF over one route: the predicted late minutes at the
// previous stations become the late_mins features of the next row.
inline PredictionReport predict_journey(const RouteQuery& route, const ModelRegistry& registry,
                                        const StationFeatureTable& stations,
                                        const TrainMetadataTable& trains,
                                        const PredictConfig& cfg) {
  if (route.stops.size() < 2) throw Error("predict_journey: route needs at least 2 stops");
  if (cfg.n_cap < 1 || cfg.n_cap > kMaxOrder) {
    throw Error("predict_journey: N must be in 1..5");
  }

  PredictionReport report;
  report.train_number = route.train_number;
  report.journey_id = route.journey_id;
  report.date = route.date;

  std::vector<std::string> codes;
  std::vector<double> dfs;
  for (const RouteStop& s : route.stops) {
    codes.push_back(s.station_code);
    dfs.push_back(s.dfs_km);
  }

  TrainMetadata meta = metadata_or_default(trains, route.train_number);
  FrameBuilder builder(stations, trains);

  report.lms.assign(route.stops.size(), 0.0);
  report.rows.resize(route.stops.size());
  report.rows[0] = {codes[0], 0, codes[0], 0.0, std::nullopt, false, 0.0, 0.0};

  for (std::size_t pos = 1; pos < route.stops.size(); ++pos) {
    int order = std::min<int>(int(pos), cfg.n_cap);
    const std::set<std::string>& pool = registry.ips_list(order);
    if (pool.empty()) {
      throw Error("predict_journey: no trained models of order " + std::to_string(order));
    }

    StationPrediction sp;
    sp.station_code = codes[pos];
    sp.order_used = order;
    if (pool.count(codes[pos])) {
      sp.model_station = codes[pos];
    } else {
      std::vector<std::string> candidates(pool.begin(), pool.end());
      KnnResult hit;
      try {
        hit = nearest_known(codes[pos], candidates, stations, cfg.knn);
      } catch (const Error& e) {
        throw Error("position " + std::to_string(pos) + " (" + codes[pos] +
                    ") is unpredictable: " + e.what());
      }
      sp.model_station = hit.station;
      sp.fallback = true;
      sp.fallback_geo_km = hit.geo_km;
      sp.fallback_feat_dist = hit.feat_dist;
      log::info("fallback at " + codes[pos] + " -> " + hit.station + " (order " +
                std::to_string(order) + ")");
    }

    ContextRow row = builder.make_prediction_row(route.train_number, meta, route.date, codes,
                                                 dfs, report.lms, pos, order);
    const StationModels& models = registry.get(sp.model_station, order);
    std::vector<double> enc = encode_row(row, registry.profile, models.vocab);
    sp.predicted = cfg.kind == ModelKind::Forest ? predict_forest(models.forest, enc)
                                                 : predict_ridge(models.ridge, enc);
    report.lms[pos] = sp.predicted;
    report.rows[pos] = std::move(sp);
  }
  return report;
}

inline double journey_rmse(const std::vector<double>& predicted,
                           const std::vector<double>& actual) {
  if (predicted.size() != actual.size() || predicted.empty()) {
    throw Error("journey_rmse: length mismatch");
  }
  double sse = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    double e = predicted[i] - actual[i];
    sse += e * e;
  }
  return std::sqrt(sse / double(predicted.size()));
}

// Batch prediction with actuals attached; per-journey failures are captured
// in the report instead of aborting the batch.
inline std::vector<PredictionReport> predict_and_score(const std::vector<Journey>& journeys,
                                                       const ModelRegistry& registry,
                                                       const StationFeatureTable& stations,
                                                       const TrainMetadataTable& trains,
                                                       const PredictConfig& cfg) {
  std::vector<PredictionReport> reports(journeys.size());
  parallel_for(journeys.size(), [&](std::size_t i) {
    const Journey& journey = journeys[i];
    PredictionReport report;
    try {
      report = predict_journey(route_from_journey(journey), registry, stations, trains, cfg);
      std::vector<double> actual(journey.stops.size());
      for (std::size_t p = 0; p < journey.stops.size(); ++p) {
        actual[p] = double(journey.stops[p].latemin);
        report.rows[p].actual = actual[p];
      }
      // source included: a late start the framework cannot see still counts
      report.rmse = journey_rmse(report.lms, actual);
    } catch (const std::exception& e) {
      report.train_number = journey.train_number;
      report.journey_id = journey.journey_id;
      if (!journey.stops.empty()) report.date = journey.start_date();
      report.ok = false;
      report.error = e.what();
      log::warn("prediction failed for " + journey.key() + ": " + e.what());
    }
    reports[i] = std::move(report);
  });
  return reports;
}

}  // namespace railmarkov
