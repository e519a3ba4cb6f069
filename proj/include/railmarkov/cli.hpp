#pragma once

// Command implementations behind the railmarkov tool: simulate | train |
// predict | evaluate. Kept out of main() so tests can drive the exact same
// code paths in-process. All outputs are deterministic for fixed inputs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "railmarkov/archive.hpp"
#include "railmarkov/data_model.hpp"
#include "railmarkov/evaluation.hpp"
#include "railmarkov/omlmpf.hpp"
#include "railmarkov/railsim.hpp"

namespace railmarkov {

namespace detail {

inline void require_file(const std::filesystem::path& p, const std::string& what) {
  if (!std::filesystem::exists(p)) {
    throw UsageError(what + " not found: " + p.string());
  }
}

inline std::ifstream open_input(const std::filesystem::path& p, const std::string& what) {
  require_file(p, what);
  std::ifstream is(p);
  if (!is) throw Error("cannot open " + p.string());
  return is;
}

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw Error("cannot write " + p.string());
  return os;
}

}  // namespace detail

// simulate -------------------------------------------------------------------

struct SimulateArgs {
  SimConfig cfg;
  std::filesystem::path out_dir = ".";
};

inline int cmd_simulate(const SimulateArgs& args) {
  args.cfg.validate();
  SimDataset data = simulate(args.cfg);

  namespace fs = std::filesystem;
  fs::create_directories(args.out_dir);
  {
    auto os = detail::open_output(args.out_dir / "journeys.csv");
    write_journeys(os, data.journeys);
  }
  {
    auto os = detail::open_output(args.out_dir / "stations.csv");
    write_station_features(os, data.network.stations);
  }
  {
    auto os = detail::open_output(args.out_dir / "trains.csv");
    write_train_metadata(os, data.network.trains);
  }
  {
    nlohmann::json scenario = args.cfg.to_json();
    scenario["known_trains"] = std::vector<std::string>(data.network.known_trains.begin(),
                                                        data.network.known_trains.end());
    auto os = detail::open_output(args.out_dir / "scenario.json");
    os << scenario.dump(1) << '\n';
  }
  std::cout << "simulated " << data.network.routes.size() << " trains ("
            << data.network.known_trains.size() << " known), " << data.journeys.size()
            << " journeys, " << data.network.stations.size() << " stations -> "
            << args.out_dir.string() << '\n';
  return 0;
}

// train ----------------------------------------------------------------------

struct TrainArgs {
  std::filesystem::path journeys_csv;
  std::filesystem::path stations_csv;
  std::filesystem::path trains_csv;
  std::filesystem::path out_dir;  // archive directory
  TrainOptions options;
  SegregateOptions seg;
  std::optional<std::filesystem::path> export_frames_dir;
};

inline int cmd_train(const TrainArgs& args) {
  auto js = detail::open_input(args.journeys_csv, "journeys.csv");
  auto ss = detail::open_input(args.stations_csv, "stations.csv");
  auto ts = detail::open_input(args.trains_csv, "trains.csv");

  std::vector<Journey> journeys = parse_journeys(js, args.journeys_csv.string());
  StationFeatureTable stations = parse_station_features(ss, args.stations_csv.string());
  TrainMetadataTable trains = parse_train_metadata(ts, args.trains_csv.string());

  DataSplit split = segregate(journeys, args.seg);
  ModelRegistry registry = train_models(split, stations, trains, args.options);

  if (args.export_frames_dir) {
    std::filesystem::create_directories(*args.export_frames_dir);
    FrameBuilder builder(stations, trains);
    for (const auto& [key, frame] : builder.build_station_frames(split, args.options.n_max)) {
      std::string name = detail::safe_name(key.first) + "_" + std::to_string(key.second) + ".csv";
      auto os = detail::open_output(*args.export_frames_dir / name);
      write_frame_csv(os, frame);
    }
  }

  save_registry(registry, args.out_dir);

  std::cout << "trained " << registry.models.size() << " station-order models (profile "
            << to_string(registry.profile) << ")\n";
  for (const auto& [order, list] : registry.ips_lists) {
    std::cout << order << "ps_list size " << list.size() << '\n';
  }
  std::cout << "archive written to " << args.out_dir.string() << '\n';
  return 0;
}

// predict --------------------------------------------------------------------

struct PredictArgs {
  std::filesystem::path route_csv;
  std::filesystem::path stations_csv;
  std::optional<std::filesystem::path> trains_csv;
  std::filesystem::path archive_dir;
  std::filesystem::path out_dir;
  std::string date;  // ISO, journey start date
  std::string train_number;
  PredictConfig cfg;
};

inline const std::vector<std::string> kRouteHeader = {"position", "station_code", "dfs_km"};

inline RouteQuery parse_route_csv(std::istream& in, const std::string& source) {
  std::size_t line = 0;
  csv::expect_header(in, kRouteHeader, source, line);
  RouteQuery q;
  std::vector<std::string> row;
  std::size_t expect_pos = 0;
  while (csv::read_row(in, row, line)) {
    if (row.size() != 3) {
      throw Error(source + ": line " + std::to_string(line) + ": expected 3 fields");
    }
    auto pos = std::size_t(detail::parse_integer(row[0], "position", line));
    if (pos != expect_pos) {
      throw Error(source + ": line " + std::to_string(line) + ": positions must run 0,1,2,...");
    }
    ++expect_pos;
    if (row[1].empty()) {
      throw Error(source + ": line " + std::to_string(line) + ": empty station_code");
    }
    double dfs = detail::parse_number(row[2], "dfs_km", line);
    if (dfs < 0 || (!q.stops.empty() && dfs < q.stops.back().dfs_km)) {
      throw Error(source + ": line " + std::to_string(line) + ": dfs_km must be non-negative and non-decreasing");
    }
    q.stops.push_back({row[1], dfs});
  }
  if (q.stops.size() < 2) throw Error(source + ": route needs at least 2 stops");
  return q;
}

inline void write_report_csv(std::ostream& os, const PredictionReport& report) {
  csv::write_row(os, {"position", "station_code", "order_used", "model_station", "predicted",
                      "actual"});
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const StationPrediction& r = report.rows[i];
    csv::write_row(os, {std::to_string(i), r.station_code, std::to_string(r.order_used),
                        r.model_station, fmt_double(r.predicted),
                        r.actual ? fmt_double(*r.actual) : ""});
  }
}

inline nlohmann::json report_summary_json(const PredictionReport& report,
                                          const PredictConfig& cfg) {
  nlohmann::json fallbacks = nlohmann::json::array();
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const StationPrediction& r = report.rows[i];
    if (!r.fallback) continue;
    fallbacks.push_back({{"position", i},
                         {"station", r.station_code},
                         {"model_station", r.model_station},
                         {"order", r.order_used},
                         {"geo_km", r.fallback_geo_km},
                         {"feature_distance", r.fallback_feat_dist}});
  }
  nlohmann::json j{{"train_number", report.train_number},
                   {"date", format_iso_date(report.date)},
                   {"order_cap", cfg.n_cap},
                   {"model", to_string(cfg.kind)},
                   {"ok", report.ok},
                   {"lms", report.lms},
                   {"n_fallbacks", fallbacks.size()},
                   {"fallbacks", fallbacks}};
  if (!report.journey_id.empty()) j["journey_id"] = report.journey_id;
  if (report.rmse) j["rmse"] = *report.rmse;
  return j;
}

inline int cmd_predict(const PredictArgs& args) {
  auto rs = detail::open_input(args.route_csv, "route file");
  auto ss = detail::open_input(args.stations_csv, "stations.csv");
  detail::require_file(args.archive_dir / "manifest.json", "model archive");

  RouteQuery route = parse_route_csv(rs, args.route_csv.string());
  route.train_number = args.train_number;
  route.date = parse_iso_date(args.date);

  StationFeatureTable stations = parse_station_features(ss, args.stations_csv.string());
  TrainMetadataTable trains;
  if (args.trains_csv) {
    auto ts = detail::open_input(*args.trains_csv, "trains.csv");
    trains = parse_train_metadata(ts, args.trains_csv->string());
  }

  ModelRegistry registry = load_registry(args.archive_dir);
  if (args.cfg.n_cap < 1 || args.cfg.n_cap > registry.max_order()) {
    throw UsageError("--order " + std::to_string(args.cfg.n_cap) +
                     " exceeds trained orders (max " + std::to_string(registry.max_order()) + ")");
  }

  PredictionReport report = predict_journey(route, registry, stations, trains, args.cfg);

  std::filesystem::create_directories(args.out_dir);
  {
    auto os = detail::open_output(args.out_dir / "report.csv");
    write_report_csv(os, report);
  }
  {
    auto os = detail::open_output(args.out_dir / "summary.json");
    os << report_summary_json(report, args.cfg).dump(1) << '\n';
  }

  std::size_t n_fallbacks = 0;
  for (const auto& r : report.rows) n_fallbacks += r.fallback ? 1 : 0;
  std::cout << "predicted " << report.rows.size() << " stations for train "
            << report.train_number << " (" << n_fallbacks << " fallbacks) -> "
            << args.out_dir.string() << '\n';
  return 0;
}

// evaluate -------------------------------------------------------------------

struct EvaluateArgs {
  std::filesystem::path data_dir;
  std::vector<int> exp_ids = {1, 2, 3, 4};
  std::optional<std::filesystem::path> archive_dir;  // per-profile cache
  std::filesystem::path out_dir;
  SegregateOptions seg;
  EvalParams eval;
};

namespace detail {

inline std::string framework_label(int n) { return std::to_string(n) + "-OMLMPF"; }

inline void write_coverage_csv(std::ostream& os, const ExperimentResult& result) {
  csv::write_row(os, {"framework", "model", "ci68", "ci95", "ci99"});
  for (const RunResult& run : result.runs) {
    csv::write_row(os, {framework_label(run.n_cap), to_string(run.kind),
                        fmt_fixed(run.coverage.avg68, 2), fmt_fixed(run.coverage.avg95, 2),
                        fmt_fixed(run.coverage.avg99, 2)});
  }
}

inline void write_rmse_csv(std::ostream& os, const ExperimentResult& result) {
  csv::write_row(os, {"framework", "model", "train_number", "n_journeys", "mean_rmse"});
  for (const RunResult& run : result.runs) {
    for (const TrainRmse& tr : run.rmse) {
      csv::write_row(os, {framework_label(run.n_cap), to_string(run.kind), tr.train_number,
                          std::to_string(tr.n_journeys), fmt_double(tr.mean_rmse)});
    }
  }
}

inline void write_order_selection_csv(std::ostream& os,
                                      const std::vector<ExperimentResult>& results,
                                      const std::string& kind, int n_max) {
  std::vector<std::string> header = {"framework"};
  for (const char* crit : {"BIC", "AIC"}) {
    for (const ExperimentResult& r : results) {
      header.push_back(std::string(crit) + "_Exp" + std::to_string(r.exp_id));
    }
  }
  csv::write_row(os, header);
  for (int n = 1; n <= n_max; ++n) {
    std::vector<std::string> row = {framework_label(n)};
    for (const char* crit : {"BIC", "AIC"}) {
      for (const ExperimentResult& r : results) {
        auto it = r.order_selection.find({crit, kind});
        int count = it == r.order_selection.end() ? 0 : it->second.counts[std::size_t(n)];
        row.push_back(std::to_string(count));
      }
    }
    csv::write_row(os, row);
  }
}

inline void write_monthly_means_csv(std::ostream& os, const std::vector<MonthlyMean>& means) {
  csv::write_row(os, {"train_number", "station_code", "month", "n", "mean_latemin"});
  for (const MonthlyMean& m : means) {
    csv::write_row(os, {m.train_number, m.station_code, std::to_string(m.month),
                        std::to_string(m.n), fmt_double(m.mean_latemin)});
  }
}

inline nlohmann::json experiment_summary_json(const ExperimentResult& result) {
  nlohmann::json runs = nlohmann::json::array();
  for (const RunResult& run : result.runs) {
    std::size_t failed = 0;
    for (const auto& rep : run.reports) failed += rep.ok ? 0 : 1;
    runs.push_back({{"framework", framework_label(run.n_cap)},
                    {"model", to_string(run.kind)},
                    {"ci68", run.coverage.avg68},
                    {"ci95", run.coverage.avg95},
                    {"ci99", run.coverage.avg99},
                    {"trains_in_coverage", run.coverage.per_train.size()},
                    {"journeys", run.reports.size()},
                    {"failed_journeys", failed}});
  }
  nlohmann::json selection = nlohmann::json::object();
  for (const auto& [key, sel] : result.order_selection) {
    nlohmann::json counts = nlohmann::json::object();
    for (int n = 1; n < int(sel.counts.size()); ++n) {
      counts[framework_label(n)] = sel.counts[std::size_t(n)];
    }
    selection[key.first + "_" + key.second] = counts;
  }
  return {{"experiment", result.exp_id},
          {"profile", to_string(result.profile)},
          {"eval_set", result.eval_set},
          {"runs", runs},
          {"order_selection", selection}};
}

}  // namespace detail

inline int cmd_evaluate(const EvaluateArgs& args) {
  namespace fs = std::filesystem;
  for (int id : args.exp_ids) {
    if (id < 1 || id > 4) throw UsageError("--exp must be 1..4 or all");
  }

  auto js = detail::open_input(args.data_dir / "journeys.csv", "journeys.csv");
  auto ss = detail::open_input(args.data_dir / "stations.csv", "stations.csv");
  auto ts = detail::open_input(args.data_dir / "trains.csv", "trains.csv");
  std::vector<Journey> journeys = parse_journeys(js, "journeys.csv");
  StationFeatureTable stations = parse_station_features(ss, "stations.csv");
  TrainMetadataTable trains = parse_train_metadata(ts, "trains.csv");
  DataSplit split = segregate(journeys, args.seg);

  // registries are shared across experiments of the same profile
  std::map<FeatureProfile, ModelRegistry> cache;
  auto registry_for = [&](FeatureProfile profile) -> const ModelRegistry& {
    auto it = cache.find(profile);
    if (it != cache.end()) return it->second;
    if (args.archive_dir) {
      fs::path dir = *args.archive_dir / to_string(profile);
      if (fs::exists(dir / "manifest.json")) {
        log::info("loading " + to_string(profile) + " archive from " + dir.string());
        return cache.emplace(profile, load_registry(dir)).first->second;
      }
    }
    TrainOptions opt;
    opt.profile = profile;
    opt.n_max = args.eval.n_max;
    opt.forest = args.eval.forest;
    opt.ridge = args.eval.ridge;
    ModelRegistry& reg = cache.emplace(profile, train_models(split, stations, trains, opt))
                             .first->second;
    if (args.archive_dir) save_registry(reg, *args.archive_dir / to_string(profile));
    return reg;
  };

  fs::create_directories(args.out_dir);
  std::vector<ExperimentResult> results;
  for (int exp_id : args.exp_ids) {
    const ModelRegistry& registry = registry_for(experiment_profile(exp_id));
    ExperimentResult result =
        run_experiment(exp_id, split, stations, trains, args.eval, &registry);

    fs::path dir = args.out_dir / ("exp" + std::to_string(exp_id));
    fs::create_directories(dir);
    {
      auto os = detail::open_output(dir / "ci_coverage.csv");
      detail::write_coverage_csv(os, result);
    }
    {
      auto os = detail::open_output(dir / "rmse.csv");
      detail::write_rmse_csv(os, result);
    }
    {
      auto os = detail::open_output(dir / "order_selection.csv");
      detail::write_order_selection_csv(os, {result}, "forest", args.eval.n_max);
    }
    {
      auto os = detail::open_output(dir / "monthly_means.csv");
      detail::write_monthly_means_csv(os, monthly_means(experiment_eval_set(exp_id, split)));
    }
    {
      auto os = detail::open_output(dir / "summary.json");
      os << detail::experiment_summary_json(result).dump(1) << '\n';
    }
    std::cout << "exp " << exp_id << " (" << to_string(result.profile) << " on "
              << result.eval_set << "): ";
    for (const RunResult& run : result.runs) {
      if (run.kind != ModelKind::Forest) continue;
      std::cout << run.n_cap << "-OMLMPF ci95=" << fmt_fixed(run.coverage.avg95, 1) << "% ";
    }
    std::cout << '\n';

    // reports are bulky and no longer needed once tables are written
    for (RunResult& run : result.runs) run.reports.clear();
    results.push_back(std::move(result));
  }

  {
    auto os = detail::open_output(args.out_dir / "order_selection.csv");
    detail::write_order_selection_csv(os, results, "forest", args.eval.n_max);
  }
  {
    nlohmann::json summary = nlohmann::json::array();
    for (const ExperimentResult& r : results) summary.push_back(detail::experiment_summary_json(r));
    auto os = detail::open_output(args.out_dir / "summary.json");
    os << summary.dump(1) << '\n';
  }
  return 0;
}

}  // namespace railmarkov
