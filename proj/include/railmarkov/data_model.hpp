#pragma once

// Journey/station/train ingestion and the known/unknown + train/cv/test
// segregation. All parsed structures are immutable value types; nothing here
// keeps references to the input streams.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "railmarkov/csv.hpp"
#include "railmarkov/log.hpp"
#include "railmarkov/rng.hpp"
#include "railmarkov/util.hpp"

namespace railmarkov {

using Date = std::chrono::year_month_day;

inline std::chrono::sys_days to_days(Date d) { return std::chrono::sys_days{d}; }

// Strict ISO 8601 calendar date, YYYY-MM-DD.
inline Date parse_iso_date(const std::string& s) {
  auto fail = [&] { throw Error("invalid date \"" + s + "\" (want YYYY-MM-DD)"); };
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') fail();
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
    if (s[i] < '0' || s[i] > '9') fail();
  }
  int y = std::stoi(s.substr(0, 4));
  int m = std::stoi(s.substr(5, 2));
  int d = std::stoi(s.substr(8, 2));
  Date date{std::chrono::year{y}, std::chrono::month{unsigned(m)}, std::chrono::day{unsigned(d)}};
  if (!date.ok()) fail();
  return date;
}

inline std::string format_iso_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(d.year()), unsigned(d.month()),
                unsigned(d.day()));
  return buf;
}

inline int month_of(Date d) { return int(unsigned(d.month())); }

// 0 = Monday ... 6 = Sunday.
inline int weekday_of(Date d) {
  return int(std::chrono::weekday{to_days(d)}.iso_encoding()) - 1;
}

struct JourneyRecord {
  std::string train_number;
  std::string journey_id;
  Date actarr_date{};
  std::string station_code;
  int latemin = 0;        // negative = arrived early
  double distance_km = 0; // cumulative from source
  int month = 0;          // derived from actarr_date
  int weekday = 0;        // derived, 0 = Monday
};

struct Journey {
  std::string train_number;
  std::string journey_id;
  std::vector<JourneyRecord> stops;

  Date start_date() const { return stops.front().actarr_date; }
  std::string key() const { return train_number + "/" + journey_id; }
};

struct StationFeatures {
  std::string station_code;
  double latitude = 0;
  double longitude = 0;
  std::int64_t traffic = 0;  // trains passing through
  std::int64_t degree = 0;   // direct connections
};

using StationFeatureTable = std::map<std::string, StationFeatures>;

struct TrainMetadata {
  std::string train_number;
  std::string train_type = "Other";  // Special | Express | Other
  std::string zone = "UNK";
  bool is_superfast = false;
};

using TrainMetadataTable = std::map<std::string, TrainMetadata>;

// Unlisted trains fall back to (Other, UNK, not superfast).
inline TrainMetadata metadata_or_default(const TrainMetadataTable& table,
                                         const std::string& train_number) {
  auto it = table.find(train_number);
  if (it != table.end()) return it->second;
  log::warn("train " + train_number + " has no metadata, using defaults");
  TrainMetadata def;
  def.train_number = train_number;
  return def;
}

namespace detail {

inline double parse_number(const std::string& s, const std::string& what, std::size_t line) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("line " + std::to_string(line) + ": bad " + what + " \"" + s + "\"");
  }
}

inline long long parse_integer(const std::string& s, const std::string& what, std::size_t line) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("line " + std::to_string(line) + ": bad " + what + " \"" + s + "\"");
  }
}

}  // namespace detail

inline const std::vector<std::string> kJourneyHeader = {
    "train_number", "journey_id", "actarr_date", "station_code", "latemin", "distance_km"};
inline const std::vector<std::string> kStationHeader = {
    "station_code", "latitude", "longitude", "traffic", "degree"};
inline const std::vector<std::string> kTrainHeader = {
    "train_number", "train_type", "zone", "is_superfast"};

// Groups rows by (train_number, journey_id) preserving file order within a
// group and group order of first appearance. Month/weekday are derived here.
inline std::vector<Journey> parse_journeys(std::istream& in,
                                           const std::string& source = "journeys") {
  std::size_t line = 0;
  csv::expect_header(in, kJourneyHeader, source, line);

  std::vector<Journey> journeys;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::vector<std::string> row;
  while (csv::read_row(in, row, line)) {
    if (row.size() != kJourneyHeader.size()) {
      throw Error(source + ": line " + std::to_string(line) + ": expected " +
                  std::to_string(kJourneyHeader.size()) + " fields, got " +
                  std::to_string(row.size()));
    }
    JourneyRecord rec;
    rec.train_number = row[0];
    rec.journey_id = row[1];
    try {
      rec.actarr_date = parse_iso_date(row[2]);
    } catch (const Error& e) {
      throw Error(source + ": line " + std::to_string(line) + ": " + e.what());
    }
    rec.station_code = row[3];
    if (rec.station_code.empty()) {
      throw Error(source + ": line " + std::to_string(line) + ": empty station_code");
    }
    rec.latemin = int(detail::parse_integer(row[4], "latemin", line));
    rec.distance_km = detail::parse_number(row[5], "distance_km", line);
    if (rec.distance_km < 0) {
      throw Error(source + ": line " + std::to_string(line) + ": negative distance_km");
    }
    rec.month = month_of(rec.actarr_date);
    rec.weekday = weekday_of(rec.actarr_date);

    auto key = std::make_pair(rec.train_number, rec.journey_id);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, journeys.size());
      Journey j;
      j.train_number = rec.train_number;
      j.journey_id = rec.journey_id;
      journeys.push_back(std::move(j));
      it = index.find(key);
    }
    Journey& j = journeys[it->second];
    if (!j.stops.empty() && rec.distance_km < j.stops.back().distance_km) {
      throw Error(source + ": line " + std::to_string(line) + ": distance_km decreases within journey " +
                  rec.journey_id + " of train " + rec.train_number);
    }
    j.stops.push_back(std::move(rec));
  }
  return journeys;
}

inline StationFeatureTable parse_station_features(std::istream& in,
                                                  const std::string& source = "stations") {
  std::size_t line = 0;
  csv::expect_header(in, kStationHeader, source, line);

  StationFeatureTable table;
  std::vector<std::string> row;
  while (csv::read_row(in, row, line)) {
    if (row.size() != kStationHeader.size()) {
      throw Error(source + ": line " + std::to_string(line) + ": expected " +
                  std::to_string(kStationHeader.size()) + " fields");
    }
    StationFeatures f;
    f.station_code = row[0];
    if (f.station_code.empty()) {
      throw Error(source + ": line " + std::to_string(line) + ": empty station_code");
    }
    f.latitude = detail::parse_number(row[1], "latitude", line);
    f.longitude = detail::parse_number(row[2], "longitude", line);
    if (f.latitude < -90.0 || f.latitude > 90.0) {
      throw Error(source + ": line " + std::to_string(line) + ": latitude out of [-90, 90]");
    }
    if (f.longitude < -180.0 || f.longitude > 180.0) {
      throw Error(source + ": line " + std::to_string(line) + ": longitude out of [-180, 180]");
    }
    f.traffic = detail::parse_integer(row[3], "traffic", line);
    f.degree = detail::parse_integer(row[4], "degree", line);
    if (f.traffic < 0 || f.degree < 0) {
      throw Error(source + ": line " + std::to_string(line) + ": negative traffic/degree");
    }
    if (!table.emplace(f.station_code, f).second) {
      throw Error(source + ": duplicate station_code " + f.station_code);
    }
  }
  return table;
}

inline TrainMetadataTable parse_train_metadata(std::istream& in,
                                               const std::string& source = "trains") {
  std::size_t line = 0;
  csv::expect_header(in, kTrainHeader, source, line);

  TrainMetadataTable table;
  std::vector<std::string> row;
  while (csv::read_row(in, row, line)) {
    if (row.size() != kTrainHeader.size()) {
      throw Error(source + ": line " + std::to_string(line) + ": expected " +
                  std::to_string(kTrainHeader.size()) + " fields");
    }
    TrainMetadata m;
    m.train_number = row[0];
    m.train_type = row[1];
    m.zone = row[2];
    if (row[3] == "true") {
      m.is_superfast = true;
    } else if (row[3] == "false") {
      m.is_superfast = false;
    } else {
      throw Error(source + ": line " + std::to_string(line) + ": is_superfast must be true|false");
    }
    if (!table.emplace(m.train_number, m).second) {
      throw Error(source + ": duplicate train_number " + m.train_number);
    }
  }
  return table;
}

inline void write_journeys(std::ostream& os, const std::vector<Journey>& journeys) {
  csv::write_row(os, kJourneyHeader);
  for (const Journey& j : journeys) {
    for (const JourneyRecord& r : j.stops) {
      csv::write_row(os, {r.train_number, r.journey_id, format_iso_date(r.actarr_date),
                          r.station_code, std::to_string(r.latemin), fmt_double(r.distance_km)});
    }
  }
}

inline void write_station_features(std::ostream& os, const StationFeatureTable& table) {
  csv::write_row(os, kStationHeader);
  for (const auto& [code, f] : table) {
    csv::write_row(os, {code, fmt_double(f.latitude), fmt_double(f.longitude),
                        std::to_string(f.traffic), std::to_string(f.degree)});
  }
}

inline void write_train_metadata(std::ostream& os, const TrainMetadataTable& table) {
  csv::write_row(os, kTrainHeader);
  for (const auto& [num, m] : table) {
    csv::write_row(os, {num, m.train_type, m.zone, m.is_superfast ? "true" : "false"});
  }
}

struct DataSplit {
  std::vector<Journey> train;         // known trains, dated <= cutoff, 4/5 share
  std::vector<Journey> cv;            // known trains, dated <= cutoff, 1/5 share
  std::vector<Journey> known_test;    // known trains, dated after cutoff
  std::vector<Journey> unknown_test;  // everything from unknown trains
  std::set<std::string> known_trains;
  std::set<std::string> known_stations;  // stations on known-train routes

  std::vector<Journey> all_journeys() const {
    std::vector<Journey> all;
    all.reserve(train.size() + cv.size() + known_test.size() + unknown_test.size());
    for (const auto* part : {&train, &cv, &known_test, &unknown_test}) {
      all.insert(all.end(), part->begin(), part->end());
    }
    return all;
  }
};

struct SegregateOptions {
  // Known trains are either the explicit set, or (when empty) every train
  // with at least min_journey_count journeys.
  std::set<std::string> known_trains;
  int min_journey_count = 0;
  Date cv_cutoff{};
  double holdout_ratio = 0.2;  // cv share of the <= cutoff journeys, whole journeys
  std::uint64_t seed = 0;
};

// The train/cv split shuffles each known train's journeys independently with
// a seed derived from (seed, train_number), so the outcome does not depend on
// input ordering across trains.
inline DataSplit segregate(const std::vector<Journey>& journeys, const SegregateOptions& opt) {
  if (opt.holdout_ratio < 0.0 || opt.holdout_ratio >= 1.0) {
    throw Error("segregate: holdout_ratio must be in [0, 1)");
  }

  std::map<std::string, std::vector<std::size_t>> by_train;
  for (std::size_t i = 0; i < journeys.size(); ++i) {
    by_train[journeys[i].train_number].push_back(i);
  }

  DataSplit split;
  if (!opt.known_trains.empty()) {
    split.known_trains = opt.known_trains;
  } else {
    for (const auto& [train, idx] : by_train) {
      if (int(idx.size()) >= opt.min_journey_count) split.known_trains.insert(train);
    }
  }
  if (split.known_trains.empty()) {
    throw Error("segregate: no known trains selected");
  }

  for (const auto& [train, idx] : by_train) {
    bool known = split.known_trains.count(train) > 0;
    if (!known) {
      for (std::size_t i : idx) split.unknown_test.push_back(journeys[i]);
      continue;
    }
    std::vector<std::size_t> early, late;
    for (std::size_t i : idx) {
      for (const auto& stop : journeys[i].stops) split.known_stations.insert(stop.station_code);
      if (to_days(journeys[i].start_date()) <= to_days(opt.cv_cutoff)) {
        early.push_back(i);
      } else {
        late.push_back(i);
      }
    }
    for (std::size_t i : late) split.known_test.push_back(journeys[i]);

    Rng rng(derive_seed(opt.seed, hash_str(train)));
    rng.shuffle(early);
    std::size_t n_cv = 0;
    if (early.size() >= 2 && opt.holdout_ratio > 0.0) {
      n_cv = std::size_t(std::llround(double(early.size()) * opt.holdout_ratio));
      n_cv = std::min(n_cv, early.size() - 1);
    }
    // Shuffled order decides membership; file order is restored inside each part.
    std::vector<std::size_t> cv_idx(early.begin(), early.begin() + n_cv);
    std::vector<std::size_t> train_idx(early.begin() + n_cv, early.end());
    std::sort(cv_idx.begin(), cv_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    for (std::size_t i : cv_idx) split.cv.push_back(journeys[i]);
    for (std::size_t i : train_idx) split.train.push_back(journeys[i]);
  }

  if (split.train.empty()) {
    throw Error("segregate: cv_cutoff leaves no training journeys");
  }
  return split;
}

}  // namespace railmarkov
