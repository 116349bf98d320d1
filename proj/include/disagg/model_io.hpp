#pragma once

// JSON persistence of HouseholdModel, schema "disagg-model/1".
//
// {
//   "schema": "disagg-model/1",
//   "sampling": {"interval_seconds": 120, "bins_per_day": 24},
//   "chains": [{
//     "name": "kettle",
//     "means": [0.0, 55.2],
//     "initial": [0.9, 0.1],
//     "transitions": {
//       "homogeneous": [[p(0|0), p(1|0)], [p(0|1), p(1|1)]],   // or null
//       "binned": [ <matrix for bin 0>, ... ]                   // or []
//     }
//   }, ...],
//   "selector": {"initial": [...], "transitions": [[...], ...]},  // or null
//   "noise": {"sigma": 12.5, "per_bin": []}
// }
//
// Each matrix is a list of rows, one row per previous state, holding the
// distribution over the next state.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "disagg/types.hpp"

namespace disagg {

inline constexpr const char* kModelSchema = "disagg-model/1";

namespace detail {

inline nlohmann::json matrix_to_json(const TransitionMatrix& m) { return m.rows(); }

inline TransitionMatrix matrix_from_json(const nlohmann::json& j) {
  return TransitionMatrix::from_rows(j.get<std::vector<std::vector<double>>>());
}

/// Write `contents` to `path` through a temporary file renamed on success.
inline void write_file_atomically(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << contents;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw DataError("failed writing '" + path.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot move output into place at '" + path.string() + "'");
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

inline nlohmann::json model_to_json(const HouseholdModel& model) {
  nlohmann::json j;
  j["schema"] = kModelSchema;
  j["sampling"] = {{"interval_seconds", model.sampling.interval_seconds},
                   {"bins_per_day", model.sampling.bins_per_day}};
  j["chains"] = nlohmann::json::array();
  for (const auto& c : model.chains) {
    nlohmann::json cj;
    cj["name"] = c.name;
    cj["means"] = c.means;
    cj["initial"] = c.initial;
    nlohmann::json binned = nlohmann::json::array();
    for (const auto& m : c.binned) binned.push_back(detail::matrix_to_json(m));
    cj["transitions"] = {{"homogeneous", c.homogeneous ? detail::matrix_to_json(*c.homogeneous) : nlohmann::json()},
                         {"binned", binned}};
    j["chains"].push_back(std::move(cj));
  }
  if (model.selector)
    j["selector"] = {{"initial", model.selector->initial},
                     {"transitions", detail::matrix_to_json(model.selector->transitions)}};
  else
    j["selector"] = nullptr;
  j["noise"] = {{"sigma", model.noise.sigma}, {"per_bin", model.noise.per_bin}};
  return j;
}

inline HouseholdModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("schema", std::string()) != kModelSchema)
      throw ModelError(std::string("model document is not schema ") + kModelSchema);
    HouseholdModel model;
    model.sampling.interval_seconds = j.at("sampling").at("interval_seconds").get<int>();
    model.sampling.bins_per_day = j.at("sampling").at("bins_per_day").get<int>();
    for (const auto& cj : j.at("chains")) {
      ChainParams c;
      c.name = cj.at("name").get<std::string>();
      c.means = cj.at("means").get<std::vector<double>>();
      c.initial = cj.at("initial").get<std::vector<double>>();
      const auto& tj = cj.at("transitions");
      if (tj.contains("homogeneous") && !tj.at("homogeneous").is_null())
        c.homogeneous = detail::matrix_from_json(tj.at("homogeneous"));
      if (tj.contains("binned"))
        for (const auto& mj : tj.at("binned")) c.binned.push_back(detail::matrix_from_json(mj));
      model.chains.push_back(std::move(c));
    }
    if (j.contains("selector") && !j.at("selector").is_null()) {
      SelectorParams s;
      s.initial = j.at("selector").at("initial").get<std::vector<double>>();
      s.transitions = detail::matrix_from_json(j.at("selector").at("transitions"));
      model.selector = std::move(s);
    }
    model.noise.sigma = j.at("noise").at("sigma").get<double>();
    if (j.at("noise").contains("per_bin")) model.noise.per_bin = j.at("noise").at("per_bin").get<std::vector<double>>();
    model.validate();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model document: ") + e.what());
  }
}

inline void save_model(const HouseholdModel& model, const std::filesystem::path& path) {
  detail::write_file_atomically(path, model_to_json(model).dump(2) + "\n");
}

inline HouseholdModel load_model(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ModelError("cannot parse model '" + path.string() + "': " + e.what());
  }
  return model_from_json(j);
}

}  // namespace disagg
