#pragma once

// Two-step nearest-known-station search: geographic k-NN on lat/lon, refined
// by k-NN on z-scored (degree, traffic). Ties break on station code so the
// result never depends on candidate ordering.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "railmarkov/data_model.hpp"
#include "railmarkov/util.hpp"

namespace railmarkov {

struct KnnConfig {
  int k = 10;
};

inline constexpr double kEarthRadiusKm = 6371.0;

inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double deg = 0.017453292519943295;  // pi / 180
  double phi1 = lat1 * deg, phi2 = lat2 * deg;
  double dphi = (lat2 - lat1) * deg;
  double dlmb = (lon2 - lon1) * deg;
  double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
             std::cos(phi1) * std::cos(phi2) * std::sin(dlmb / 2) * std::sin(dlmb / 2);
  a = std::min(1.0, std::max(0.0, a));
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(a));
}

struct KnnResult {
  std::string station;
  double geo_km = 0;     // step-1 haversine distance to the target
  double feat_dist = 0;  // step-2 distance in z-scored (degree, traffic) space
};

// Returns the best similar station among `candidates` that the features table
// knows about. Candidates without coordinates are not eligible.
inline KnnResult nearest_known(const std::string& target,
                               const std::vector<std::string>& candidates,
                               const StationFeatureTable& features, const KnnConfig& cfg = {}) {
  if (cfg.k < 1) throw Error("nearest_known: k must be >= 1");
  if (candidates.empty()) throw Error("nearest_known: empty candidate list");
  auto target_it = features.find(target);
  if (target_it == features.end()) {
    throw Error("nearest_known: station " + target + " has no features, cannot be matched");
  }
  const StationFeatures& t = target_it->second;

  struct Entry {
    const StationFeatures* f;
    double geo;
  };
  std::vector<Entry> eligible;
  for (const std::string& code : candidates) {
    auto it = features.find(code);
    if (it == features.end()) {
      log::warn("k-NN candidate " + code + " has no coordinates, skipped");
      continue;
    }
    eligible.push_back({&it->second,
                        haversine_km(t.latitude, t.longitude, it->second.latitude,
                                     it->second.longitude)});
  }
  if (eligible.empty()) throw Error("nearest_known: no candidate has station features");

  std::sort(eligible.begin(), eligible.end(), [](const Entry& a, const Entry& b) {
    if (a.geo != b.geo) return a.geo < b.geo;
    return a.f->station_code < b.f->station_code;
  });
  if (eligible.size() > std::size_t(cfg.k)) eligible.resize(std::size_t(cfg.k));

  // z-scores over the step-1 shortlist; a zero-spread axis contributes nothing
  double mean_deg = 0, mean_tfc = 0;
  for (const Entry& e : eligible) {
    mean_deg += double(e.f->degree);
    mean_tfc += double(e.f->traffic);
  }
  mean_deg /= double(eligible.size());
  mean_tfc /= double(eligible.size());
  double var_deg = 0, var_tfc = 0;
  for (const Entry& e : eligible) {
    var_deg += (double(e.f->degree) - mean_deg) * (double(e.f->degree) - mean_deg);
    var_tfc += (double(e.f->traffic) - mean_tfc) * (double(e.f->traffic) - mean_tfc);
  }
  double sd_deg = std::sqrt(var_deg / double(eligible.size()));
  double sd_tfc = std::sqrt(var_tfc / double(eligible.size()));

  auto zdist = [&](const StationFeatures& f) {
    double zd = sd_deg > 0 ? (double(f.degree) - double(t.degree)) / sd_deg : 0.0;
    double zt = sd_tfc > 0 ? (double(f.traffic) - double(t.traffic)) / sd_tfc : 0.0;
    return std::sqrt(zd * zd + zt * zt);
  };

  const Entry* best = &eligible.front();
  double best_dist = zdist(*best->f);
  for (std::size_t i = 1; i < eligible.size(); ++i) {
    double dist = zdist(*eligible[i].f);
    if (dist < best_dist ||
        (dist == best_dist && eligible[i].f->station_code < best->f->station_code)) {
      best = &eligible[i];
      best_dist = dist;
    }
  }
  return {best->f->station_code, best->geo, best_dist};
}

}  // namespace railmarkov
