#pragma once

// Synthetic rail network and journey generator. Delay dynamics have a
// configurable Markov order: each in-line delay is a weighted sum of the m
// previous delays plus a station congestion term, a monthly seasonal term and
// Gaussian noise, floored at -30 minutes. Traffic and degree are derived from
// the sampled routes, so the station-feature semantics match the data model.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "railmarkov/data_model.hpp"
#include "railmarkov/rng.hpp"
#include "railmarkov/station_knn.hpp"

namespace railmarkov {

inline constexpr int kSimDelayFloor = -30;

struct SimConfig {
  int n_stations = 40;          // shared pool used by known-train routes
  int n_known_trains = 20;
  int n_unknown_trains = 5;
  int fresh_stations_per_unknown = 3;  // never-trained stations on each unknown route
  int route_len_min = 6;
  int route_len_max = 12;
  int journeys_min = 8;   // per known train
  int journeys_max = 16;
  int unknown_journeys_min = 2;
  int unknown_journeys_max = 5;

  int ground_truth_order = 1;           // m in 1..3
  std::vector<double> propagation;      // w_1..w_m; empty = defaults for m
  double congestion_traffic = 0.3;      // alpha
  double congestion_degree = 0.5;       // beta
  double seasonal_amplitude = 4.0;
  double noise_sigma = 2.0;

  double lat_min = 20.0, lat_max = 30.0;
  double lon_min = 75.0, lon_max = 85.0;
  std::string span_begin = "2016-03-01";
  std::string span_end = "2018-02-28";
  std::uint64_t seed = 0;

  std::vector<double> weights() const {
    if (!propagation.empty()) return propagation;
    switch (ground_truth_order) {
      case 1: return {0.85};
      case 2: return {0.60, 0.25};
      case 3: return {0.50, 0.25, 0.10};
      default: throw Error("ground_truth_order must be in 1..3");
    }
  }

  void validate() const {
    if (n_stations < 2) throw UsageError("simulate: need at least 2 stations");
    if (n_known_trains < 1) throw UsageError("simulate: need at least 1 known train");
    if (n_unknown_trains < 0) throw UsageError("simulate: n_unknown_trains must be >= 0");
    if (route_len_min < 2 || route_len_max < route_len_min) {
      throw UsageError("simulate: bad route length range");
    }
    if (route_len_min > n_stations) {
      throw UsageError("simulate: route length exceeds station pool");
    }
    if (journeys_min < 1 || journeys_max < journeys_min) {
      throw UsageError("simulate: bad journeys range");
    }
    if (unknown_journeys_min < 1 || unknown_journeys_max < unknown_journeys_min) {
      throw UsageError("simulate: bad unknown journeys range");
    }
    if (ground_truth_order < 1 || ground_truth_order > 3) {
      throw UsageError("simulate: ground_truth_order must be in 1..3");
    }
    if (fresh_stations_per_unknown < 0 || fresh_stations_per_unknown > route_len_max) {
      throw UsageError("simulate: bad fresh_stations_per_unknown");
    }
    if (noise_sigma < 0) throw UsageError("simulate: noise_sigma must be >= 0");
    if (!propagation.empty() && int(propagation.size()) != ground_truth_order) {
      throw UsageError("simulate: propagation weights must match ground_truth_order");
    }
  }

  nlohmann::json to_json() const {
    return {{"n_stations", n_stations},
            {"n_known_trains", n_known_trains},
            {"n_unknown_trains", n_unknown_trains},
            {"fresh_stations_per_unknown", fresh_stations_per_unknown},
            {"route_len_min", route_len_min},
            {"route_len_max", route_len_max},
            {"journeys_min", journeys_min},
            {"journeys_max", journeys_max},
            {"unknown_journeys_min", unknown_journeys_min},
            {"unknown_journeys_max", unknown_journeys_max},
            {"ground_truth_order", ground_truth_order},
            {"propagation", weights()},
            {"congestion_traffic", congestion_traffic},
            {"congestion_degree", congestion_degree},
            {"seasonal_amplitude", seasonal_amplitude},
            {"noise_sigma", noise_sigma},
            {"lat_min", lat_min},
            {"lat_max", lat_max},
            {"lon_min", lon_min},
            {"lon_max", lon_max},
            {"span_begin", span_begin},
            {"span_end", span_end},
            {"seed", seed}};
  }
};

struct SimNetwork {
  StationFeatureTable stations;                    // pool + fresh stations
  TrainMetadataTable trains;
  std::map<std::string, std::vector<std::string>> routes;  // train -> station codes
  std::map<std::string, std::vector<double>> route_dfs;    // cumulative km
  std::set<std::string> known_trains;
};

namespace detail {

inline std::string sim_station_code(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%03d", i);
  return buf;
}

inline std::string sim_fresh_code(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "X%03d", i);
  return buf;
}

inline std::string sim_train_number(bool known, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%s%02d", known ? "T" : "U", i);
  return buf;
}

}  // namespace detail

inline SimNetwork generate_network(const SimConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0xA11));

  SimNetwork net;
  std::vector<std::string> pool;
  struct Coord {
    double lat, lon;
  };
  std::map<std::string, Coord> coords;
  for (int i = 0; i < cfg.n_stations; ++i) {
    std::string code = detail::sim_station_code(i);
    pool.push_back(code);
    coords[code] = {rng.uniform(cfg.lat_min, cfg.lat_max), rng.uniform(cfg.lon_min, cfg.lon_max)};
  }

  const char* zones[] = {"CR", "ER", "NR", "SR", "WR"};
  const char* types[] = {"Express", "Other", "Special"};
  auto add_train = [&](const std::string& number) {
    TrainMetadata meta;
    meta.train_number = number;
    meta.train_type = types[rng.below(3)];
    meta.zone = zones[rng.below(5)];
    meta.is_superfast = rng.below(2) == 1;
    net.trains[number] = meta;
  };

  for (int t = 0; t < cfg.n_known_trains; ++t) {
    std::string number = detail::sim_train_number(true, t + 1);
    net.known_trains.insert(number);
    add_train(number);
    int len = rng.uniform_int(cfg.route_len_min, cfg.route_len_max);
    auto picks = rng.sample_indices(pool.size(), std::size_t(len));
    std::vector<std::string> route;
    for (std::size_t p : picks) route.push_back(pool[p]);
    net.routes[number] = route;
  }

  int fresh_counter = 0;
  for (int t = 0; t < cfg.n_unknown_trains; ++t) {
    std::string number = detail::sim_train_number(false, t + 1);
    add_train(number);
    int len = rng.uniform_int(cfg.route_len_min, cfg.route_len_max);
    int n_fresh = std::min(cfg.fresh_stations_per_unknown, len - 1);
    std::vector<std::string> route;
    for (int f = 0; f < n_fresh; ++f) {
      std::string code = detail::sim_fresh_code(++fresh_counter);
      coords[code] = {rng.uniform(cfg.lat_min, cfg.lat_max),
                      rng.uniform(cfg.lon_min, cfg.lon_max)};
      route.push_back(code);
    }
    auto picks = rng.sample_indices(pool.size(), std::size_t(len - n_fresh));
    for (std::size_t p : picks) route.push_back(pool[p]);
    rng.shuffle(route);
    net.routes[number] = route;
  }

  // traffic = trains through a station, degree = distinct route neighbours
  std::map<std::string, std::int64_t> traffic;
  std::map<std::string, std::set<std::string>> neighbours;
  for (const auto& [train, route] : net.routes) {
    for (const std::string& s : route) traffic[s] += 1;
    for (std::size_t i = 0; i + 1 < route.size(); ++i) {
      neighbours[route[i]].insert(route[i + 1]);
      neighbours[route[i + 1]].insert(route[i]);
    }
  }
  for (const auto& [code, c] : coords) {
    StationFeatures f;
    f.station_code = code;
    f.latitude = c.lat;
    f.longitude = c.lon;
    f.traffic = traffic.count(code) ? traffic[code] : 0;
    f.degree = neighbours.count(code) ? std::int64_t(neighbours[code].size()) : 0;
    net.stations[code] = f;
  }

  for (const auto& [train, route] : net.routes) {
    std::vector<double> dfs(route.size(), 0.0);
    for (std::size_t i = 1; i < route.size(); ++i) {
      const StationFeatures& a = net.stations[route[i - 1]];
      const StationFeatures& b = net.stations[route[i]];
      dfs[i] = dfs[i - 1] + haversine_km(a.latitude, a.longitude, b.latitude, b.longitude);
    }
    net.route_dfs[train] = dfs;
  }
  return net;
}

inline std::vector<Journey> generate_journeys(const SimNetwork& net, const SimConfig& cfg) {
  cfg.validate();
  Date begin = parse_iso_date(cfg.span_begin);
  Date end = parse_iso_date(cfg.span_end);
  long span_days = (to_days(end) - to_days(begin)).count();
  if (span_days < 0) throw UsageError("simulate: span_end before span_begin");
  std::vector<double> w = cfg.weights();

  std::vector<Journey> journeys;
  // net.routes is ordered by train number, so generation order is stable
  for (const auto& [train, route] : net.routes) {
    bool known = net.known_trains.count(train) > 0;
    Rng rng(derive_seed(cfg.seed, hash_str(train)));
    int n_journeys = known ? rng.uniform_int(cfg.journeys_min, cfg.journeys_max)
                           : rng.uniform_int(cfg.unknown_journeys_min, cfg.unknown_journeys_max);
    std::vector<long> offsets;
    for (int j = 0; j < n_journeys; ++j) offsets.push_back(long(rng.below(span_days + 1)));
    std::sort(offsets.begin(), offsets.end());

    const std::vector<double>& dfs = net.route_dfs.at(train);
    for (int j = 0; j < n_journeys; ++j) {
      Date date{to_days(begin) + std::chrono::days{offsets[std::size_t(j)]}};
      double season =
          cfg.seasonal_amplitude * std::sin(2.0 * 3.141592653589793 * double(month_of(date) - 1) / 12.0);

      Journey journey;
      journey.train_number = train;
      char jid[16];
      std::snprintf(jid, sizeof jid, "J%03d", j + 1);
      journey.journey_id = jid;

      std::vector<int> delays(route.size(), 0);
      for (std::size_t pos = 1; pos < route.size(); ++pos) {
        const StationFeatures& s = net.stations.at(route[pos]);
        double raw = cfg.congestion_traffic * double(s.traffic) +
                     cfg.congestion_degree * double(s.degree) + season +
                     (cfg.noise_sigma > 0 ? rng.normal(0.0, cfg.noise_sigma) : 0.0);
        for (std::size_t k = 1; k <= w.size() && k <= pos; ++k) {
          raw += w[k - 1] * double(delays[pos - k]);
        }
        delays[pos] = std::max(kSimDelayFloor, int(std::llround(raw)));
      }

      for (std::size_t pos = 0; pos < route.size(); ++pos) {
        JourneyRecord rec;
        rec.train_number = train;
        rec.journey_id = journey.journey_id;
        rec.actarr_date = date;
        rec.station_code = route[pos];
        rec.latemin = delays[pos];
        rec.distance_km = dfs[pos];
        rec.month = month_of(date);
        rec.weekday = weekday_of(date);
        journey.stops.push_back(rec);
      }
      journeys.push_back(std::move(journey));
    }
  }
  return journeys;
}

struct SimDataset {
  SimNetwork network;
  std::vector<Journey> journeys;
};

inline SimDataset simulate(const SimConfig& cfg) {
  SimDataset data;
  data.network = generate_network(cfg);
  data.journeys = generate_journeys(data.network, cfg);
  return data;
}

}  // namespace railmarkov
