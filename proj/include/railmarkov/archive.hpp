#pragma once

// Model archive on disk: manifest.json plus one JSON file per
// (station, order, kind). Format version "railmarkov-model/1".

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "railmarkov/omlmpf.hpp"

namespace railmarkov {

inline constexpr const char* kModelFormatVersion = "railmarkov-model/1";

namespace detail {

inline std::string safe_name(const std::string& station) {
  std::string out;
  for (char c : station) {
    if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' ||
        c == '-') {
      out.push_back(c);
    } else {
      char buf[8];
      std::snprintf(buf, sizeof buf, "%%%02X", (unsigned char)c);
      out += buf;
    }
  }
  return out;
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j,
                            int indent = -1) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(indent) << '\n';
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  return nlohmann::json::parse(is);
}

}  // namespace detail

inline void save_registry(const ModelRegistry& registry, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "models");

  nlohmann::json manifest;
  manifest["version"] = kModelFormatVersion;
  manifest["profile"] = to_string(registry.profile);
  manifest["forest_params"] = registry.forest_params.to_json();
  manifest["ridge_options"] = {{"lambda", registry.ridge_options.lambda},
                               {"standardize", registry.ridge_options.standardize},
                               {"intercept", registry.ridge_options.intercept}};

  nlohmann::json ips = nlohmann::json::object();
  nlohmann::json orders = nlohmann::json::array();
  for (const auto& [order, list] : registry.ips_lists) {
    orders.push_back(order);
    ips[std::to_string(order)] = std::vector<std::string>(list.begin(), list.end());
  }
  manifest["orders"] = orders;
  manifest["ips_lists"] = ips;
  manifest["source_journeys"] =
      std::vector<std::string>(registry.source_journeys.begin(), registry.source_journeys.end());

  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [key, models] : registry.models) {
    const auto& [station, order] = key;
    std::string stem = detail::safe_name(station) + "_" + std::to_string(order);
    std::string forest_file = "models/" + stem + "_forest.json";
    std::string ridge_file = "models/" + stem + "_ridge.json";
    std::string vocab_file = "models/" + stem + "_vocab.json";
    detail::write_json_file(dir / forest_file, forest_to_json(models.forest));
    detail::write_json_file(dir / ridge_file, models.ridge.to_json());
    detail::write_json_file(dir / vocab_file, models.vocab.to_json());
    std::size_t rows = 0;
    if (auto it = registry.frame_rows.find(key); it != registry.frame_rows.end()) {
      rows = it->second;
    }
    entries.push_back({{"station", station},
                       {"order", order},
                       {"rows", rows},
                       {"forest", forest_file},
                       {"ridge", ridge_file},
                       {"vocab", vocab_file}});
  }
  manifest["models"] = entries;
  detail::write_json_file(dir / "manifest.json", manifest, 1);  // the one humans read
}

namespace detail {

struct ArchiveEntry {
  std::string forest_file;
  std::string ridge_file;
  std::string vocab_file;
};

inline ModelRegistry registry_from_manifest(const std::filesystem::path& dir,
                                            nlohmann::json& manifest,
                                            std::map<std::pair<std::string, int>,
                                                     ArchiveEntry>* entries_out) {
  std::string version = manifest.at("version").get<std::string>();
  if (version != kModelFormatVersion) {
    throw Error("unsupported model archive version \"" + version + "\"");
  }

  ModelRegistry registry;
  registry.profile = profile_from_string(manifest.at("profile").get<std::string>());
  registry.forest_params = ForestParams::from_json(manifest.at("forest_params"));
  const auto& ro = manifest.at("ridge_options");
  registry.ridge_options.lambda = ro.at("lambda").get<double>();
  registry.ridge_options.standardize = ro.at("standardize").get<bool>();
  registry.ridge_options.intercept = ro.at("intercept").get<bool>();

  for (auto it = manifest.at("ips_lists").begin(); it != manifest.at("ips_lists").end(); ++it) {
    auto list = it.value().get<std::vector<std::string>>();
    registry.ips_lists[std::stoi(it.key())] = std::set<std::string>(list.begin(), list.end());
  }
  for (const auto& j : manifest.at("source_journeys")) {
    registry.source_journeys.insert(j.get<std::string>());
  }
  for (const auto& entry : manifest.at("models")) {
    std::string station = entry.at("station").get<std::string>();
    int order = entry.at("order").get<int>();
    registry.frame_rows[{station, order}] = entry.at("rows").get<std::size_t>();
    ArchiveEntry files{entry.at("forest").get<std::string>(),
                       entry.at("ridge").get<std::string>(),
                       entry.at("vocab").get<std::string>()};
    if (entries_out) {
      (*entries_out)[{station, order}] = files;
    } else {
      StationModels models;
      models.forest = forest_from_json(detail::read_json_file(dir / files.forest_file));
      models.ridge = RidgeModel::from_json(detail::read_json_file(dir / files.ridge_file));
      models.vocab = CategoryVocab::from_json(detail::read_json_file(dir / files.vocab_file));
      registry.models.emplace(std::make_pair(station, order), std::move(models));
    }
  }
  return registry;
}

}  // namespace detail

// Reads every model up front.
inline ModelRegistry load_registry(const std::filesystem::path& dir) {
  nlohmann::json manifest = detail::read_json_file(dir / "manifest.json");
  return detail::registry_from_manifest(dir, manifest, nullptr);
}

// Archive-backed source that reads a model file the first time it is needed.
class ArchiveModelSource : public StationModelSource {
 public:
  ArchiveModelSource(std::filesystem::path dir,
                     std::map<std::pair<std::string, int>, detail::ArchiveEntry> entries)
      : dir_(std::move(dir)), entries_(std::move(entries)) {}

  bool has(const std::string& station, int order) const override {
    return entries_.count({station, order}) > 0;
  }

  const StationModels& get(const std::string& station, int order) const override {
    auto key = std::make_pair(station, order);
    std::lock_guard<std::mutex> lk(mu_);
    auto cached = cache_.find(key);
    if (cached != cache_.end()) return cached->second;
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      throw Error("archive has no " + std::to_string(order) + "-order model for " + station);
    }
    StationModels models;
    models.forest = forest_from_json(detail::read_json_file(dir_ / it->second.forest_file));
    models.ridge = RidgeModel::from_json(detail::read_json_file(dir_ / it->second.ridge_file));
    models.vocab = CategoryVocab::from_json(detail::read_json_file(dir_ / it->second.vocab_file));
    return cache_.emplace(key, std::move(models)).first->second;  // map nodes stay put
  }

  std::size_t loaded() const {
    std::lock_guard<std::mutex> lk(mu_);
    return cache_.size();
  }

 private:
  std::filesystem::path dir_;
  std::map<std::pair<std::string, int>, detail::ArchiveEntry> entries_;
  mutable std::mutex mu_;
  mutable std::map<std::pair<std::string, int>, StationModels> cache_;
};

// Reads the manifest only; models stream in on first use. Suited to
// prediction, which touches a handful of the archive's models.
inline ModelRegistry open_registry(const std::filesystem::path& dir) {
  nlohmann::json manifest = detail::read_json_file(dir / "manifest.json");
  std::map<std::pair<std::string, int>, detail::ArchiveEntry> entries;
  ModelRegistry registry = detail::registry_from_manifest(dir, manifest, &entries);
  registry.lazy = std::make_shared<ArchiveModelSource>(dir, std::move(entries));
  return registry;
}

}  // namespace railmarkov
