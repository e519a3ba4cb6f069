// railmarkov command line tool: simulate | train | predict | evaluate.
// Exit codes: 0 ok, 1 runtime failure, 2 usage error.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "railmarkov/cli.hpp"

namespace rm = railmarkov;

namespace {

rm::Date parse_date_flag(const std::string& value, const std::string& flag) {
  try {
    return rm::parse_iso_date(value);
  } catch (const rm::Error& e) {
    throw rm::UsageError(std::string(flag) + ": " + e.what());
  }
}

std::set<std::string> parse_train_list(const std::string& csv) {
  std::set<std::string> out;
  std::string cur;
  for (char c : csv) {
    if (c == ',') {
      if (!cur.empty()) out.insert(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.insert(cur);
  return out;
}

struct SegFlags {
  std::string cutoff = "9999-12-31";
  double holdout = 0.2;
  int min_journeys = 1;
  std::string known_trains;
  std::uint64_t seed = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--cutoff", cutoff, "train/cv cutoff date (YYYY-MM-DD); later journeys go to the known test set");
    cmd->add_option("--holdout", holdout, "cv share of the pre-cutoff journeys")
        ->check(CLI::Range(0.0, 0.99));
    cmd->add_option("--min-journeys", min_journeys,
                    "journey-count threshold selecting known trains");
    cmd->add_option("--known-trains", known_trains,
                    "explicit comma-separated known-train list (overrides --min-journeys)");
    cmd->add_option("--seed", seed, "seed for the train/cv shuffle");
  }

  rm::SegregateOptions resolve() const {
    rm::SegregateOptions seg;
    seg.cv_cutoff = parse_date_flag(cutoff, "--cutoff");
    seg.holdout_ratio = holdout;
    seg.min_journey_count = min_journeys;
    seg.known_trains = parse_train_list(known_trains);
    seg.seed = seed;
    return seg;
  }
};

struct ForestFlags {
  int trees = 100;
  int max_depth = -1;
  int min_leaf = 1;
  double features_frac = 1.0 / 3.0;
  bool no_bootstrap = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--trees", trees, "trees per forest")->check(CLI::PositiveNumber);
    cmd->add_option("--max-depth", max_depth, "tree depth limit, -1 = unlimited");
    cmd->add_option("--min-leaf", min_leaf, "minimum samples per leaf");
    cmd->add_option("--features-frac", features_frac, "feature fraction per split");
    cmd->add_flag("--no-bootstrap", no_bootstrap, "train each tree on the full frame");
  }

  rm::ForestParams resolve(std::uint64_t seed) const {
    rm::ForestParams p;
    p.n_trees = trees;
    p.max_depth = max_depth;
    p.min_samples_leaf = min_leaf;
    p.features_per_split = features_frac;
    p.bootstrap = !no_bootstrap;
    p.seed = seed;
    return p;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"per-station Markov regression models for train delay prediction"};
  app.require_subcommand(1);
  app.set_config("--config", "", "config file; keys live under a [subcommand] section");

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim->fallthrough(true);
  rm::SimulateArgs sim_args;
  std::string sim_out = ".";
  sim->add_option("--seed", sim_args.cfg.seed, "simulation seed");
  sim->add_option("--order", sim_args.cfg.ground_truth_order,
                  "ground-truth Markov order of the delay dynamics (1..3)");
  sim->add_option("--trains", sim_args.cfg.n_known_trains, "known trains");
  sim->add_option("--unknown-trains", sim_args.cfg.n_unknown_trains, "unknown trains");
  sim->add_option("--stations", sim_args.cfg.n_stations, "station pool size");
  sim->add_option("--fresh", sim_args.cfg.fresh_stations_per_unknown,
                  "fresh stations per unknown route");
  sim->add_option("--route-min", sim_args.cfg.route_len_min, "route length lower bound");
  sim->add_option("--route-max", sim_args.cfg.route_len_max, "route length upper bound");
  sim->add_option("--journeys-min", sim_args.cfg.journeys_min, "journeys per known train, min");
  sim->add_option("--journeys-max", sim_args.cfg.journeys_max, "journeys per known train, max");
  sim->add_option("--unknown-journeys-min", sim_args.cfg.unknown_journeys_min,
                  "journeys per unknown train, min");
  sim->add_option("--unknown-journeys-max", sim_args.cfg.unknown_journeys_max,
                  "journeys per unknown train, max");
  sim->add_option("--sigma", sim_args.cfg.noise_sigma, "delay noise sigma (minutes)");
  sim->add_option("--season", sim_args.cfg.seasonal_amplitude, "seasonal amplitude (minutes)");
  sim->add_option("--congestion-traffic", sim_args.cfg.congestion_traffic,
                  "congestion minutes per unit traffic");
  sim->add_option("--congestion-degree", sim_args.cfg.congestion_degree,
                  "congestion minutes per unit degree");
  sim->add_option("--span-begin", sim_args.cfg.span_begin, "first journey date");
  sim->add_option("--span-end", sim_args.cfg.span_end, "last journey date");
  sim->add_option("--out", sim_out, "output directory");

  // train
  auto* train = app.add_subcommand("train", "fit station models and write an archive");
  train->fallthrough(true);
  std::string train_data, train_journeys, train_stations, train_trains, train_out;
  std::string train_profile = "numeric", train_export;
  int train_max_order = rm::kMaxOrder;
  double train_lambda = 1.0;
  SegFlags train_seg;
  ForestFlags train_forest;
  train->add_option("--data", train_data, "directory with journeys/stations/trains.csv");
  train->add_option("--journeys", train_journeys, "journeys.csv path");
  train->add_option("--stations", train_stations, "stations.csv path");
  train->add_option("--trains", train_trains, "trains.csv path");
  train->add_option("--out", train_out, "archive output directory")->required();
  train->add_option("--profile", train_profile, "feature profile: codes|numeric");
  train->add_option("--max-order", train_max_order, "highest model order")->check(CLI::Range(1, 5));
  train->add_option("--lambda", train_lambda, "ridge regularization strength");
  train->add_option("--export-frames", train_export, "also dump per-station frames as CSV");
  train_seg.add_to(train);
  train_forest.add_to(train);

  // predict
  auto* predict = app.add_subcommand("predict", "predict late minutes along a route");
  predict->fallthrough(true);
  rm::PredictArgs pred_args;
  std::string pred_route, pred_stations, pred_trains, pred_archive, pred_out = ".";
  std::string pred_model = "forest";
  predict->add_option("--route", pred_route, "route CSV (position,station_code,dfs_km)")
      ->required();
  predict->add_option("--date", pred_args.date, "journey start date (YYYY-MM-DD)")->required();
  predict->add_option("--train", pred_args.train_number, "train number")->required();
  predict->add_option("--archive", pred_archive, "model archive directory")->required();
  predict->add_option("--stations", pred_stations, "stations.csv path")->required();
  predict->add_option("--trains", pred_trains, "trains.csv path (optional metadata)");
  predict->add_option("--order", pred_args.cfg.n_cap, "N in N-OMLMPF");
  predict->add_option("--model", pred_model, "forest|ridge");
  predict->add_option("--k", pred_args.cfg.knn.k, "k of the nearest-station search");
  predict->add_option("--out", pred_out, "output directory");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "run the experiment harness");
  evaluate->fallthrough(true);
  std::string eval_data, eval_archive, eval_out, eval_exp = "all";
  std::string eval_ci = "spread", eval_nobs = "eval";
  double eval_lambda = 1.0;
  int eval_max_order = rm::kMaxOrder;
  int eval_k = 10;
  bool eval_forest_only = false;
  SegFlags eval_seg;
  ForestFlags eval_forest;
  evaluate->add_option("--exp", eval_exp, "experiment id 1..4 or all");
  evaluate->add_option("--data", eval_data, "directory with journeys/stations/trains.csv")
      ->required();
  evaluate->add_option("--archive", eval_archive, "per-profile archive cache directory");
  evaluate->add_option("--out", eval_out, "output directory")->required();
  evaluate->add_option("--max-order", eval_max_order, "highest N")->check(CLI::Range(1, 5));
  evaluate->add_option("--lambda", eval_lambda, "ridge regularization strength");
  evaluate->add_option("--k", eval_k, "k of the nearest-station search");
  evaluate->add_option("--ci", eval_ci, "interval form: spread|stderr");
  evaluate->add_option("--nobs", eval_nobs, "AIC/BIC n: eval|train");
  evaluate->add_flag("--forest-only", eval_forest_only, "skip the ridge runs");
  eval_seg.add_to(evaluate);
  eval_forest.add_to(evaluate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed()) {
      sim_args.out_dir = sim_out;
      return rm::cmd_simulate(sim_args);
    }
    if (train->parsed()) {
      rm::TrainArgs args;
      auto pick = [&](const std::string& explicit_path, const char* name) {
        if (!explicit_path.empty()) return std::filesystem::path(explicit_path);
        if (train_data.empty()) {
          throw rm::UsageError(std::string("missing --") + name + " (or --data DIR)");
        }
        return std::filesystem::path(train_data) / (std::string(name) + ".csv");
      };
      args.journeys_csv = pick(train_journeys, "journeys");
      args.stations_csv = pick(train_stations, "stations");
      args.trains_csv = pick(train_trains, "trains");
      args.out_dir = train_out;
      args.seg = train_seg.resolve();
      args.options.profile = rm::profile_from_string(train_profile);
      args.options.n_max = train_max_order;
      args.options.forest = train_forest.resolve(train_seg.seed);
      args.options.ridge.lambda = train_lambda;
      if (!train_export.empty()) args.export_frames_dir = train_export;
      return rm::cmd_train(args);
    }
    if (predict->parsed()) {
      pred_args.route_csv = pred_route;
      pred_args.stations_csv = pred_stations;
      if (!pred_trains.empty()) pred_args.trains_csv = pred_trains;
      pred_args.archive_dir = pred_archive;
      pred_args.out_dir = pred_out;
      pred_args.cfg.kind = rm::model_kind_from_string(pred_model);
      if (pred_args.cfg.n_cap < 1 || pred_args.cfg.n_cap > rm::kMaxOrder) {
        throw rm::UsageError("--order must be in 1..5");
      }
      if (pred_args.cfg.knn.k < 1) throw rm::UsageError("--k must be >= 1");
      return rm::cmd_predict(pred_args);
    }
    if (evaluate->parsed()) {
      rm::EvaluateArgs args;
      args.data_dir = eval_data;
      if (!eval_archive.empty()) args.archive_dir = eval_archive;
      args.out_dir = eval_out;
      args.seg = eval_seg.resolve();
      if (eval_exp == "all") {
        args.exp_ids = {1, 2, 3, 4};
      } else if (eval_exp == "1" || eval_exp == "2" || eval_exp == "3" || eval_exp == "4") {
        args.exp_ids = {std::stoi(eval_exp)};
      } else {
        throw rm::UsageError("--exp must be 1..4 or all");
      }
      args.eval.forest = eval_forest.resolve(eval_seg.seed);
      args.eval.ridge.lambda = eval_lambda;
      args.eval.knn.k = eval_k;
      args.eval.n_max = eval_max_order;
      if (eval_forest_only) args.eval.kinds = {rm::ModelKind::Forest};
      if (eval_ci == "spread") {
        args.eval.ci_mode = rm::CiMode::Spread;
      } else if (eval_ci == "stderr") {
        args.eval.ci_mode = rm::CiMode::StdErr;
      } else {
        throw rm::UsageError("--ci must be spread|stderr");
      }
      if (eval_nobs == "eval") {
        args.eval.n_obs_mode = rm::NObsMode::EvalPredictions;
      } else if (eval_nobs == "train") {
        args.eval.n_obs_mode = rm::NObsMode::TrainRows;
      } else {
        throw rm::UsageError("--nobs must be eval|train");
      }
      return rm::cmd_evaluate(args);
    }
  } catch (const rm::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
