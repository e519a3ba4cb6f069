#pragma once

// Per-(station, order) training frames. A frame row carries the current
// station's descriptors, the n previous stations' codes/delays/distances and
// the journey-level categoricals; encoding turns a row into a numeric vector
// under the CODES or NUMERIC feature profile.

#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "railmarkov/data_model.hpp"

namespace railmarkov {

enum class FeatureProfile {
  Codes,    // previous-station codes kept, their tfc/deg/dfs dropped
  Numeric,  // previous-station codes dropped, numeric descriptors kept
};

inline std::string to_string(FeatureProfile p) {
  return p == FeatureProfile::Codes ? "codes" : "numeric";
}

inline FeatureProfile profile_from_string(const std::string& s) {
  if (s == "codes") return FeatureProfile::Codes;
  if (s == "numeric") return FeatureProfile::Numeric;
  throw UsageError("unknown profile \"" + s + "\" (want codes|numeric)");
}

// One training example for a target station with `order` previous stations.
struct ContextRow {
  // provenance, never encoded
  std::string train_number;
  std::string journey_id;
  std::string target_station;

  std::string train_type;
  std::string zone;
  bool is_superfast = false;
  int month = 0;    // journey start date
  int weekday = 0;  // journey start date, 0 = Monday

  struct PrevStation {
    std::string code;      // Stn_i code
    double late_mins = 0;  // recorded (training) or fed-forward (prediction)
    double db_km = 0;      // distance between Stn_{i-1} and Stn_i
    double dfs_km = 0;     // Stn_i distance from source
    double traffic = 0;
    double degree = 0;
  };
  std::vector<PrevStation> prev;  // prev[0] is Stn_1, the immediately previous station

  double stn0_dfs = 0;
  double stn0_traffic = 0;
  double stn0_degree = 0;
  double target_late_minutes = 0;

  int order() const { return int(prev.size()); }
};

// Category dictionaries per categorical column, built from training rows only.
// Categories are kept lexicographically sorted; unseen values encode to an
// all-zero one-hot block.
struct CategoryVocab {
  std::map<std::string, std::vector<std::string>> columns;

  int index_of(const std::string& column, const std::string& category) const {
    auto it = columns.find(column);
    if (it == columns.end()) return -1;
    const auto& cats = it->second;
    auto pos = std::lower_bound(cats.begin(), cats.end(), category);
    if (pos == cats.end() || *pos != category) return -1;
    return int(pos - cats.begin());
  }

  std::size_t size_of(const std::string& column) const {
    auto it = columns.find(column);
    return it == columns.end() ? 0 : it->second.size();
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [col, cats] : columns) j[col] = cats;
    return j;
  }

  static CategoryVocab from_json(const nlohmann::json& j) {
    CategoryVocab v;
    for (auto it = j.begin(); it != j.end(); ++it) {
      v.columns[it.key()] = it.value().get<std::vector<std::string>>();
    }
    return v;
  }

  bool operator==(const CategoryVocab&) const = default;
};

struct FeatureFrame {
  std::string station_code;  // the Stn_0 this frame predicts for
  int order = 0;
  std::vector<ContextRow> rows;
  CategoryVocab vocab;
};

// Two-digit month / one-digit weekday keys so lexicographic vocab order is
// also numeric order.
inline std::string month_key(int month) {
  char buf[4];
  std::snprintf(buf, sizeof buf, "%02d", month);
  return buf;
}

inline std::string weekday_key(int weekday) { return std::to_string(weekday); }

inline std::string prev_code_column(int i) { return "stn_" + std::to_string(i) + "_code"; }

inline CategoryVocab build_vocab(const FeatureFrame& frame) {
  std::map<std::string, std::set<std::string>> cats;
  for (const ContextRow& row : frame.rows) {
    cats["train_type"].insert(row.train_type);
    cats["zone"].insert(row.zone);
    cats["month"].insert(month_key(row.month));
    cats["weekday"].insert(weekday_key(row.weekday));
    for (std::size_t i = 0; i < row.prev.size(); ++i) {
      cats[prev_code_column(int(i) + 1)].insert(row.prev[i].code);
    }
  }
  CategoryVocab vocab;
  for (auto& [col, set] : cats) {
    vocab.columns[col] = std::vector<std::string>(set.begin(), set.end());
  }
  return vocab;
}

inline constexpr int kMaxOrder = 5;

// Builds ContextRows and FeatureFrames from journeys, resolving station
// descriptors and train metadata (with warned defaults for gaps).
class FrameBuilder {
 public:
  FrameBuilder(const StationFeatureTable& stations, const TrainMetadataTable& trains)
      : stations_(stations), trains_(trains) {}

  // One row per stop with at least n predecessors; the source never yields one.
  std::vector<ContextRow> enumerate_contexts(const Journey& journey, int n) const {
    if (n < 1 || n > kMaxOrder) {
      throw Error("enumerate_contexts: order must be in 1..5, got " + std::to_string(n));
    }
    std::vector<ContextRow> rows;
    if (journey.stops.size() <= std::size_t(n)) return rows;
    TrainMetadata meta = metadata_or_default(trains_, journey.train_number);
    Date start = journey.start_date();
    for (std::size_t pos = std::size_t(n); pos < journey.stops.size(); ++pos) {
      rows.push_back(make_row(journey, meta, start, pos, n));
    }
    return rows;
  }

  // Frames for every known station and every order with data; empty frames
  // are omitted. Rows come from the training share only.
  std::map<std::pair<std::string, int>, FeatureFrame> build_station_frames(
      const DataSplit& split, int n_max = kMaxOrder) const {
    if (n_max < 1 || n_max > kMaxOrder) {
      throw Error("build_station_frames: n_max must be in 1..5");
    }
    std::map<std::pair<std::string, int>, FeatureFrame> frames;
    for (int n = 1; n <= n_max; ++n) {
      for (const Journey& journey : split.train) {
        for (ContextRow& row : enumerate_contexts(journey, n)) {
          auto key = std::make_pair(row.target_station, n);
          auto it = frames.find(key);
          if (it == frames.end()) {
            FeatureFrame frame;
            frame.station_code = row.target_station;
            frame.order = n;
            it = frames.emplace(key, std::move(frame)).first;
          }
          it->second.rows.push_back(std::move(row));
        }
      }
    }
    for (auto& [key, frame] : frames) frame.vocab = build_vocab(frame);
    return frames;
  }

  // Row for one position of a route at prediction time; late minutes of the
  // previous stations come from the caller (fed-forward predictions).
  ContextRow make_prediction_row(const std::string& train_number, const TrainMetadata& meta,
                                 Date journey_date, const std::vector<std::string>& route,
                                 const std::vector<double>& dfs_km,
                                 const std::vector<double>& late_mins, std::size_t pos,
                                 int n) const {
    Journey pseudo;
    pseudo.train_number = train_number;
    pseudo.journey_id = "";
    pseudo.stops.resize(route.size());
    for (std::size_t i = 0; i < route.size(); ++i) {
      pseudo.stops[i].station_code = route[i];
      pseudo.stops[i].distance_km = dfs_km[i];
      pseudo.stops[i].actarr_date = journey_date;
    }
    ContextRow row = make_row(pseudo, meta, journey_date, pos, n);
    for (int i = 1; i <= n; ++i) {
      row.prev[std::size_t(i) - 1].late_mins = late_mins[pos - std::size_t(i)];
    }
    row.target_late_minutes = 0;
    return row;
  }

 private:
  ContextRow make_row(const Journey& journey, const TrainMetadata& meta, Date start,
                      std::size_t pos, int n) const {
    const auto& stops = journey.stops;
    ContextRow row;
    row.train_number = journey.train_number;
    row.journey_id = journey.journey_id;
    row.target_station = stops[pos].station_code;
    row.train_type = meta.train_type;
    row.zone = meta.zone;
    row.is_superfast = meta.is_superfast;
    row.month = month_of(start);
    row.weekday = weekday_of(start);
    row.prev.resize(std::size_t(n));
    for (int i = 1; i <= n; ++i) {
      const JourneyRecord& prev_stop = stops[pos - std::size_t(i)];
      const JourneyRecord& nearer = stops[pos - std::size_t(i) + 1];
      auto& p = row.prev[std::size_t(i) - 1];
      p.code = prev_stop.station_code;
      p.late_mins = double(prev_stop.latemin);
      p.db_km = std::abs(nearer.distance_km - prev_stop.distance_km);
      p.dfs_km = prev_stop.distance_km;
      auto [tfc, deg] = descriptors(prev_stop.station_code);
      p.traffic = tfc;
      p.degree = deg;
    }
    row.stn0_dfs = stops[pos].distance_km;
    auto [tfc0, deg0] = descriptors(stops[pos].station_code);
    row.stn0_traffic = tfc0;
    row.stn0_degree = deg0;
    row.target_late_minutes = double(stops[pos].latemin);
    return row;
  }

  std::pair<double, double> descriptors(const std::string& station) const {
    auto it = stations_.find(station);
    if (it == stations_.end()) {
      log::warn("station " + station + " has no features, traffic/degree default to 0");
      return {0.0, 0.0};
    }
    return {double(it->second.traffic), double(it->second.degree)};
  }

  const StationFeatureTable& stations_;
  const TrainMetadataTable& trains_;
};

namespace detail {

inline void one_hot(std::vector<double>& out, const CategoryVocab& vocab,
                    const std::string& column, const std::string& category) {
  std::size_t width = vocab.size_of(column);
  std::size_t base = out.size();
  out.resize(base + width, 0.0);
  int idx = vocab.index_of(column, category);
  if (idx >= 0) out[base + std::size_t(idx)] = 1.0;
}

}  // namespace detail

// Encoded layout, in order:
//   train_type | zone | is_superfast | month | weekday
//   per previous station i = 1..n:
//     stn_i_code one-hot   (CODES only)
//     late_mins_stn_i, db_stn_{i-1}_stn_i
//     stn_i_dfs, tfc_of_stn_i, deg_of_stn_i   (NUMERIC only)
//   stn_0_dfs, stn_0_tfc, stn_0_deg
inline std::vector<double> encode_row(const ContextRow& row, FeatureProfile profile,
                                      const CategoryVocab& vocab) {
  std::vector<double> out;
  detail::one_hot(out, vocab, "train_type", row.train_type);
  detail::one_hot(out, vocab, "zone", row.zone);
  out.push_back(row.is_superfast ? 1.0 : 0.0);
  detail::one_hot(out, vocab, "month", month_key(row.month));
  detail::one_hot(out, vocab, "weekday", weekday_key(row.weekday));
  for (std::size_t i = 0; i < row.prev.size(); ++i) {
    const auto& p = row.prev[i];
    if (profile == FeatureProfile::Codes) {
      detail::one_hot(out, vocab, prev_code_column(int(i) + 1), p.code);
    }
    out.push_back(p.late_mins);
    out.push_back(p.db_km);
    if (profile == FeatureProfile::Numeric) {
      out.push_back(p.dfs_km);
      out.push_back(p.traffic);
      out.push_back(p.degree);
    }
  }
  out.push_back(row.stn0_dfs);
  out.push_back(row.stn0_traffic);
  out.push_back(row.stn0_degree);
  return out;
}

inline std::size_t encoded_width(FeatureProfile profile, int order, const CategoryVocab& vocab) {
  std::size_t w = vocab.size_of("train_type") + vocab.size_of("zone") + 1 +
                  vocab.size_of("month") + vocab.size_of("weekday");
  for (int i = 1; i <= order; ++i) {
    if (profile == FeatureProfile::Codes) w += vocab.size_of(prev_code_column(i));
    w += 2;  // late_mins, db
    if (profile == FeatureProfile::Numeric) w += 3;  // dfs, tfc, deg
  }
  return w + 3;  // stn_0 descriptors
}

// Debug export, column names per the n-prev-stn table layout.
inline void write_frame_csv(std::ostream& os, const FeatureFrame& frame) {
  std::vector<std::string> header = {"train_type", "zone", "is_superfast", "month", "weekday"};
  int n = frame.order;
  for (int i = 1; i <= n; ++i) header.push_back("Stn_" + std::to_string(i) + "_code");
  for (int i = 1; i <= n; ++i) header.push_back("late_mins_Stn_" + std::to_string(i));
  for (int i = 1; i <= n; ++i) {
    header.push_back("db_Stn_" + std::to_string(i - 1) + "_Stn_" + std::to_string(i));
  }
  for (int i = 1; i <= n; ++i) header.push_back("Stn_" + std::to_string(i) + "_dfs");
  for (int i = 1; i <= n; ++i) header.push_back("tfc_of_Stn_" + std::to_string(i));
  for (int i = 1; i <= n; ++i) header.push_back("deg_of_Stn_" + std::to_string(i));
  header.insert(header.end(), {"Stn_0_dfs", "Stn_0_tfc", "Stn_0_deg", "Stn_0_late_minutes"});
  csv::write_row(os, header);

  for (const ContextRow& row : frame.rows) {
    std::vector<std::string> fields = {row.train_type, row.zone,
                                       row.is_superfast ? "true" : "false",
                                       std::to_string(row.month), std::to_string(row.weekday)};
    for (const auto& p : row.prev) fields.push_back(p.code);
    for (const auto& p : row.prev) fields.push_back(fmt_double(p.late_mins));
    for (const auto& p : row.prev) fields.push_back(fmt_double(p.db_km));
    for (const auto& p : row.prev) fields.push_back(fmt_double(p.dfs_km));
    for (const auto& p : row.prev) fields.push_back(fmt_double(p.traffic));
    for (const auto& p : row.prev) fields.push_back(fmt_double(p.degree));
    fields.push_back(fmt_double(row.stn0_dfs));
    fields.push_back(fmt_double(row.stn0_traffic));
    fields.push_back(fmt_double(row.stn0_degree));
    fields.push_back(fmt_double(row.target_late_minutes));
    csv::write_row(os, fields);
  }
}

}  // namespace railmarkov
