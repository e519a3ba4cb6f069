#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

#include "fixture_example_network.hpp"
#include "test_util.hpp"

// End-to-end checks of the installed command-line surface; everything here
// shells out to the real binary.

using testutil::TempDir;
using testutil::read_file;
using testutil::run_cli;
using testutil::write_file;

namespace {

void write_fixture(const TempDir& dir) {
  write_file(dir / "journeys.csv", fixture::kJourneysCsv);
  write_file(dir / "stations.csv", fixture::kStationsCsv);
  write_file(dir / "trains.csv", fixture::kTrainsCsv);
}

}  // namespace

TEST(CliSimulate, DeterministicAndBoundsChecked) {
  TempDir dir;
  std::string base = "simulate --seed 7 --order 1 --trains 5 --unknown-trains 2 --stations 14 "
                     "--journeys-min 3 --journeys-max 5 ";
  ASSERT_EQ(run_cli(base + "--out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli(base + "--out " + (dir / "b").string()), 0);
  for (const char* name : {"journeys.csv", "stations.csv", "trains.csv", "scenario.json"}) {
    EXPECT_EQ(read_file(dir / "a" / name), read_file(dir / "b" / name)) << name;
    EXPECT_FALSE(read_file(dir / "a" / name).empty());
  }

  EXPECT_EQ(run_cli("simulate --order 9 --out " + (dir / "c").string()), 2);
  EXPECT_EQ(run_cli("simulate --route-min 1 --out " + (dir / "c").string()), 2);
}

TEST(CliTrain, PrintsIpsListSizesOnExampleNetwork) {
  TempDir dir;
  write_fixture(dir);
  auto log = dir / "train.log";
  int rc = run_cli("train --data " + dir.path().string() + " --out " + (dir / "arch").string() +
                       " --known-trains KT_1,KT_2,KT_3,KT_4,KT_5 --holdout 0 --trees 10",
                   &log);
  ASSERT_EQ(rc, 0);
  std::string out = read_file(log);
  EXPECT_NE(out.find("1ps_list size 14"), std::string::npos) << out;
  EXPECT_NE(out.find("4ps_list size 8"), std::string::npos) << out;
  EXPECT_TRUE(std::filesystem::exists(dir / "arch" / "manifest.json"));
}

TEST(CliTrain, MissingStationsFileIsUsageError) {
  TempDir dir;
  write_file(dir / "journeys.csv", fixture::kJourneysCsv);
  write_file(dir / "trains.csv", fixture::kTrainsCsv);
  EXPECT_EQ(run_cli("train --data " + dir.path().string() + " --out " + (dir / "arch").string()),
            2);
}

TEST(CliTrain, RetrainingIsByteIdentical) {
  TempDir dir;
  write_fixture(dir);
  std::string cmd = "train --data " + dir.path().string() +
                    " --known-trains KT_1,KT_2,KT_3,KT_4,KT_5 --holdout 0 --trees 8 --seed 5 ";
  ASSERT_EQ(run_cli(cmd + "--out " + (dir / "arch1").string()), 0);
  ASSERT_EQ(run_cli(cmd + "--out " + (dir / "arch2").string()), 0);
  EXPECT_EQ(read_file(dir / "arch1" / "manifest.json"), read_file(dir / "arch2" / "manifest.json"));
}

TEST(CliPredict, TwoStopRouteAndOrderBounds) {
  TempDir dir;
  write_fixture(dir);
  ASSERT_EQ(run_cli("train --data " + dir.path().string() + " --out " + (dir / "arch").string() +
                    " --known-trains KT_1,KT_2,KT_3,KT_4,KT_5 --holdout 0 --trees 10"),
            0);

  write_file(dir / "route.csv", "position,station_code,dfs_km\n0,KS_a,0\n1,KS_b,50\n");
  std::string predict = "predict --route " + (dir / "route.csv").string() + " --date 2017-07-03 "
                        "--train KT_9 --archive " + (dir / "arch").string() + " --stations " +
                        (dir / "stations.csv").string();
  ASSERT_EQ(run_cli(predict + " --order 2 --out " + (dir / "out").string()), 0);

  std::string report = read_file(dir / "out" / "report.csv");
  EXPECT_NE(report.find("position,station_code,order_used,model_station,predicted,actual"),
            std::string::npos);
  EXPECT_NE(report.find("0,KS_a,0,KS_a,0,"), std::string::npos) << report;
  EXPECT_EQ(std::count(report.begin(), report.end(), '\n'), 3);  // header + 2 rows

  // route files are validated
  write_file(dir / "bad.csv", "position,station_code,dfs_km\n0,KS_a,0\n2,KS_b,50\n");
  EXPECT_EQ(run_cli("predict --route " + (dir / "bad.csv").string() + " --date 2017-07-03 " +
                    "--train T --archive " + (dir / "arch").string() + " --stations " +
                    (dir / "stations.csv").string() + " --out " + (dir / "out2").string()),
            1);

  // N beyond the trained orders is a usage error
  EXPECT_EQ(run_cli(predict + " --order 5 --out " + (dir / "out3").string()), 0);
  EXPECT_EQ(run_cli(predict + " --order 7 --out " + (dir / "out4").string()), 2);
}

TEST(CliPredict, UnknownTrainRouteLogsFallbacks) {
  TempDir dir;
  write_fixture(dir);
  ASSERT_EQ(run_cli("train --data " + dir.path().string() + " --out " + (dir / "arch").string() +
                    " --known-trains KT_1,KT_2,KT_3,KT_4,KT_5 --holdout 0 --trees 10"),
            0);
  write_file(dir / "ut2.csv",
             "position,station_code,dfs_km\n0,US_u,0\n1,US_v,45\n2,KS_b,100\n3,KS_m,160\n"
             "4,US_w,240\n5,KS_j,330\n");
  ASSERT_EQ(run_cli("predict --route " + (dir / "ut2.csv").string() + " --date 2017-09-14 " +
                    "--train UT_2 --archive " + (dir / "arch").string() + " --stations " +
                    (dir / "stations.csv").string() + " --trains " +
                    (dir / "trains.csv").string() + " --order 3 --out " +
                    (dir / "out").string()),
            0);
  std::string summary = read_file(dir / "out" / "summary.json");
  EXPECT_NE(summary.find("\"n_fallbacks\": 3"), std::string::npos) << summary;
  std::string report = read_file(dir / "out" / "report.csv");
  EXPECT_NE(report.find("3,KS_m,3,"), std::string::npos) << report;
}

TEST(CliTrain, ExportFramesWritesTableCsvs) {
  TempDir dir;
  write_fixture(dir);
  ASSERT_EQ(run_cli("train --data " + dir.path().string() + " --out " + (dir / "arch").string() +
                    " --known-trains KT_1,KT_2,KT_3,KT_4,KT_5 --holdout 0 --trees 5 "
                    "--export-frames " + (dir / "frames").string()),
            0);
  EXPECT_TRUE(std::filesystem::exists(dir / "frames" / "KS_b_1.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "frames" / "KS_b_2.csv"));
  EXPECT_FALSE(std::filesystem::exists(dir / "frames" / "KS_b_3.csv"));  // empty frames omitted
  std::string csv = read_file(dir / "frames" / "KS_b_2.csv");
  EXPECT_NE(csv.find("Stn_0_late_minutes"), std::string::npos);
}

TEST(CliTrain, ConfigFileProvidesDefaultsFlagsOverride) {
  TempDir dir;
  write_fixture(dir);
  write_file(dir / "run.cfg",
             "[train]\n"
             "data=\"" + dir.path().string() + "\"\n"
             "known-trains=\"KT_1,KT_2,KT_3,KT_4,KT_5\"\n"
             "holdout=0\n"
             "trees=64\n");
  auto log = dir / "train.log";
  ASSERT_EQ(run_cli("train --config " + (dir / "run.cfg").string() + " --trees 5 --out " +
                        (dir / "arch").string(),
                    &log),
            0);
  EXPECT_NE(read_file(log).find("1ps_list size 14"), std::string::npos);
  // the command line took precedence over the config file
  std::string manifest = read_file(dir / "arch" / "manifest.json");
  EXPECT_NE(manifest.find("\"n_trees\": 5"), std::string::npos) << manifest;
}

TEST(CliEvaluate, ArchiveCacheLoadsOnSecondRun) {
  TempDir dir;
  write_fixture(dir);
  std::string cmd = "evaluate --exp 2 --data " + dir.path().string() +
                    " --known-trains KT_1,KT_2,KT_3,KT_4,KT_5 --holdout 0.34 --seed 3 "
                    "--trees 6 --forest-only --archive " + (dir / "cache").string() + " ";
  ASSERT_EQ(run_cli(cmd + "--out " + (dir / "e1").string()), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "cache" / "numeric" / "manifest.json"));
  // second run reuses the cached archive and must reproduce the same tables
  ASSERT_EQ(run_cli(cmd + "--out " + (dir / "e2").string()), 0);
  EXPECT_EQ(read_file(dir / "e1" / "exp2" / "ci_coverage.csv"),
            read_file(dir / "e2" / "exp2" / "ci_coverage.csv"));
  EXPECT_EQ(read_file(dir / "e1" / "exp2" / "rmse.csv"),
            read_file(dir / "e2" / "exp2" / "rmse.csv"));
}

TEST(CliEvaluate, SingleExperimentRerunsIdentically) {
  TempDir dir;
  write_fixture(dir);
  std::string cmd = "evaluate --exp 3 --data " + dir.path().string() +
                    " --known-trains KT_1,KT_2,KT_3,KT_4,KT_5 --holdout 0.34 --seed 2 "
                    "--trees 8 --forest-only ";
  ASSERT_EQ(run_cli(cmd + "--out " + (dir / "e1").string()), 0);
  ASSERT_EQ(run_cli(cmd + "--out " + (dir / "e2").string()), 0);

  for (const char* name :
       {"exp3/ci_coverage.csv", "exp3/rmse.csv", "exp3/order_selection.csv",
        "exp3/monthly_means.csv", "exp3/summary.json", "order_selection.csv", "summary.json"}) {
    EXPECT_EQ(read_file(dir / "e1" / name), read_file(dir / "e2" / name)) << name;
  }

  std::string coverage = read_file(dir / "e1" / "exp3" / "ci_coverage.csv");
  EXPECT_NE(coverage.find("1-OMLMPF"), std::string::npos);
  EXPECT_NE(coverage.find("5-OMLMPF"), std::string::npos);
  std::string selection = read_file(dir / "e1" / "order_selection.csv");
  EXPECT_NE(selection.find("framework,BIC_Exp3,AIC_Exp3"), std::string::npos) << selection;

  EXPECT_EQ(run_cli("evaluate --exp 9 --data " + dir.path().string() + " --out " +
                    (dir / "e3").string()),
            2);
}

TEST(CliEvaluate, AllExperimentsEmitCombinedSelectionTable) {
  TempDir dir;
  write_fixture(dir);
  ASSERT_EQ(run_cli("evaluate --exp all --data " + dir.path().string() +
                    " --known-trains KT_1,KT_2,KT_3,KT_4,KT_5 --holdout 0.34 --seed 2 "
                    "--trees 6 --forest-only --out " + (dir / "all").string()),
            0);
  for (int exp = 1; exp <= 4; ++exp) {
    EXPECT_TRUE(std::filesystem::exists(dir / "all" / ("exp" + std::to_string(exp)) /
                                        "ci_coverage.csv"));
  }
  std::string selection = read_file(dir / "all" / "order_selection.csv");
  EXPECT_NE(selection.find("framework,BIC_Exp1,BIC_Exp2,BIC_Exp3,BIC_Exp4,"
                           "AIC_Exp1,AIC_Exp2,AIC_Exp3,AIC_Exp4"),
            std::string::npos)
      << selection;
  EXPECT_NE(selection.find("1-OMLMPF"), std::string::npos);
  EXPECT_NE(selection.find("5-OMLMPF"), std::string::npos);
}
