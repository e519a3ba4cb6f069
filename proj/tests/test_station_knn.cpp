#include "railmarkov/station_knn.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "railmarkov/rng.hpp"

using namespace railmarkov;

namespace {

StationFeatures station(const std::string& code, double lat, double lon, std::int64_t tfc,
                        std::int64_t deg) {
  StationFeatures f;
  f.station_code = code;
  f.latitude = lat;
  f.longitude = lon;
  f.traffic = tfc;
  f.degree = deg;
  return f;
}

}  // namespace

TEST(Haversine, KnownValues) {
  EXPECT_EQ(haversine_km(12.5, 77.3, 12.5, 77.3), 0.0);
  // equatorial antipodes: half the great circle, pi * 6371
  EXPECT_NEAR(haversine_km(0.0, 0.0, 0.0, 180.0), 20015.086796020572, 1e-6);
}

TEST(Haversine, SymmetricOnRandomPairs) {
  Rng rng(13);
  for (int i = 0; i < 300; ++i) {
    double lat1 = rng.uniform(-90, 90), lon1 = rng.uniform(-180, 180);
    double lat2 = rng.uniform(-90, 90), lon2 = rng.uniform(-180, 180);
    EXPECT_EQ(haversine_km(lat1, lon1, lat2, lon2), haversine_km(lat2, lon2, lat1, lon1));
    EXPECT_GE(haversine_km(lat1, lon1, lat2, lon2), 0.0);
  }
}

TEST(NearestKnown, SingleCandidate) {
  StationFeatureTable features;
  features["T"] = station("T", 20, 75, 4, 2);
  features["A"] = station("A", 28, 82, 9, 7);
  KnnResult hit = nearest_known("T", {"A"}, features);
  EXPECT_EQ(hit.station, "A");
}

TEST(NearestKnown, ExactFeatureMatchWins) {
  StationFeatureTable features;
  features["T"] = station("T", 22.5, 78.5, 6, 3);
  features["A"] = station("A", 22.5, 78.5, 6, 3);  // coincides in all four features
  features["B"] = station("B", 23.5, 79.0, 9, 8);
  features["C"] = station("C", 21.0, 77.0, 1, 1);
  KnnResult hit = nearest_known("T", {"B", "A", "C"}, features);
  EXPECT_EQ(hit.station, "A");
  EXPECT_EQ(hit.geo_km, 0.0);
  EXPECT_EQ(hit.feat_dist, 0.0);
}

TEST(NearestKnown, Errors) {
  StationFeatureTable features;
  features["T"] = station("T", 20, 75, 1, 1);
  EXPECT_THROW(nearest_known("T", {}, features), Error);
  EXPECT_THROW(nearest_known("MISSING", {"T"}, features), Error);
  KnnConfig bad;
  bad.k = 0;
  EXPECT_THROW(nearest_known("T", {"T"}, features, bad), Error);
}

TEST(NearestKnown, ResultIsAlwaysACandidate) {
  Rng rng(101);
  for (int round = 0; round < 50; ++round) {
    StationFeatureTable features;
    std::vector<std::string> candidates;
    for (int i = 0; i < 12; ++i) {
      std::string code = "S" + std::to_string(i);
      features[code] = station(code, rng.uniform(10, 30), rng.uniform(70, 90),
                               std::int64_t(rng.below(20)), std::int64_t(rng.below(10)));
      if (i > 0) candidates.push_back(code);
    }
    KnnResult hit = nearest_known("S0", candidates, features);
    EXPECT_NE(std::find(candidates.begin(), candidates.end(), hit.station), candidates.end());
  }
}

TEST(NearestKnown, InvariantUnderCandidatePermutation) {
  Rng rng(7);
  StationFeatureTable features;
  std::vector<std::string> candidates;
  features["T"] = station("T", 24, 80, 5, 5);
  for (int i = 0; i < 20; ++i) {
    std::string code = "S" + std::to_string(i);
    features[code] = station(code, rng.uniform(10, 30), rng.uniform(70, 90),
                             std::int64_t(rng.below(20)), std::int64_t(rng.below(10)));
    candidates.push_back(code);
  }
  KnnResult base = nearest_known("T", candidates, features);
  for (int round = 0; round < 10; ++round) {
    rng.shuffle(candidates);
    KnnResult hit = nearest_known("T", candidates, features);
    EXPECT_EQ(hit.station, base.station);
    EXPECT_EQ(hit.geo_km, base.geo_km);
    EXPECT_EQ(hit.feat_dist, base.feat_dist);
  }
}

TEST(NearestKnown, StepOneIsExactlyTheKGeographicallyNearest) {
  Rng rng(23);
  StationFeatureTable features;
  std::vector<std::string> candidates;
  features["T"] = station("T", 25, 80, 3, 3);
  for (int i = 0; i < 30; ++i) {
    std::string code = "S" + std::to_string(i);
    features[code] = station(code, rng.uniform(10, 30), rng.uniform(70, 90),
                             std::int64_t(rng.below(20)), std::int64_t(rng.below(10)));
    candidates.push_back(code);
  }
  KnnConfig cfg;
  cfg.k = 10;
  KnnResult hit = nearest_known("T", candidates, features, cfg);

  // the winner's geographic distance must be within the k smallest
  std::vector<double> dists;
  for (const auto& c : candidates) {
    const auto& f = features.at(c);
    dists.push_back(haversine_km(25, 80, f.latitude, f.longitude));
  }
  std::sort(dists.begin(), dists.end());
  EXPECT_LE(hit.geo_km, dists[9]);
}

TEST(NearestKnown, AgreesWithTwoStepOracle) {
  Rng rng(314);
  int checked = 0;
  for (int round = 0; round < 200; ++round) {
    StationFeatureTable features;
    std::vector<std::string> candidates;
    std::vector<oracle::StationRow> oracle_rows;
    int n = 5 + int(rng.below(25));
    for (int i = 0; i < n; ++i) {
      std::string code = "S" + std::to_string(i);
      auto f = station(code, rng.uniform(10, 30), rng.uniform(70, 90),
                       std::int64_t(rng.below(25)), std::int64_t(rng.below(12)));
      features[code] = f;
      candidates.push_back(code);
      oracle_rows.push_back({code, f.latitude, f.longitude, double(f.traffic), double(f.degree)});
    }
    oracle::StationRow target{"T", rng.uniform(10, 30), rng.uniform(70, 90),
                              double(rng.below(25)), double(rng.below(12))};
    features["T"] = station("T", target.lat, target.lon, std::int64_t(target.traffic),
                            std::int64_t(target.degree));

    KnnResult hit = nearest_known("T", candidates, features);
    std::string want = oracle::two_step_knn(target, oracle_rows, 10);
    EXPECT_EQ(hit.station, want) << "round " << round;
    ++checked;
  }
  EXPECT_EQ(checked, 200);
}
