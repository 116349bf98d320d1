#pragma once

// Dataset files.
//
// Traces are wide CSV (UTF-8, comma separated, '.' decimal point, LF):
//
//   timestamp,aggregate,<appliance 1>,<appliance 2>,...
//
// Values are watt-hours per interval. `timestamp` is either integer seconds
// since the midnight that opens day 0 or ISO-8601 "YYYY-MM-DDTHH:MM:SS[Z]"
// (UTC). The aggregate column is optional; when absent it is the row sum.
// Numbers are written in shortest round-trip form, so reading a written
// file reproduces every double exactly.
//
// A directory of households carries manifest.json with schema
// "disagg-data/1".

#include <charconv>
#include <chrono>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "disagg/estimation.hpp"
#include "disagg/inference.hpp"
#include "disagg/model.hpp"
#include "disagg/model_io.hpp"
#include "disagg/types.hpp"

namespace disagg {

inline constexpr const char* kDataSchema = "disagg-data/1";
inline constexpr const char* kResultSchema = "disagg-result/1";

/// Shortest decimal that parses back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, end);
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t begin = 0;
  while (true) {
    const std::size_t comma = line.find(',', begin);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(begin));
      break;
    }
    cells.push_back(line.substr(begin, comma - begin));
    begin = comma + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_integer(std::string_view s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Seconds since 1970-01-01T00:00:00Z, or nullopt when not ISO-8601.
inline std::optional<long long> parse_iso8601(std::string_view s) {
  if (!s.empty() && s.back() == 'Z') s.remove_suffix(1);
  if (s.size() != 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' ||
      s[16] != ':')
    return std::nullopt;
  auto field = [&](std::size_t pos, std::size_t len) { return parse_integer(s.substr(pos, len)); };
  const auto Y = field(0, 4), M = field(5, 2), D = field(8, 2), h = field(11, 2), m = field(14, 2), sec = field(17, 2);
  if (!Y || !M || !D || !h || !m || !sec) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year(static_cast<int>(*Y)),
                                        std::chrono::month(static_cast<unsigned>(*M)),
                                        std::chrono::day(static_cast<unsigned>(*D))};
  if (!ymd.ok() || *h > 23 || *m > 59 || *sec > 59) return std::nullopt;
  const auto days = std::chrono::sys_days(ymd).time_since_epoch().count();
  return static_cast<long long>(days) * 86400 + *h * 3600 + *m * 60 + *sec;
}

inline std::optional<long long> parse_timestamp(std::string_view s) {
  if (auto v = parse_integer(s)) return v;
  return parse_iso8601(s);
}

inline void check_column_name(const std::string& name) {
  if (name.empty() || name.find_first_of(",\"\n\r") != std::string::npos)
    throw DataError("column name '" + name + "' is empty or contains a comma, quote or newline");
}

}  // namespace detail

/// Parsed wide CSV before it is interpreted as a training set or a meter.
struct TraceTable {
  std::optional<AggregateSeries> aggregate;
  ApplianceMatrix appliances;  // may have zero columns
  std::size_t num_steps = 0;
  int interval_seconds = 120;
  long start_step = 0;
};

struct ReadOptions {
  std::optional<int> interval_seconds;  // inferred from the first two rows when absent
};

inline TraceTable read_trace_table(const std::filesystem::path& path, const ReadOptions& options = {}) {
  const std::string text = detail::read_file(path);
  const std::string where = "'" + path.string() + "'";
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError(where + " is empty");

  std::vector<std::string> header;
  for (auto cell : detail::split_csv_line(line)) header.emplace_back(detail::trim(cell));
  if (header.empty() || header[0] != "timestamp")
    throw DataError(where + ": first column must be 'timestamp'");
  const bool has_aggregate = header.size() > 1 && header[1] == "aggregate";
  const std::size_t first_appliance = has_aggregate ? 2 : 1;

  TraceTable table;
  for (std::size_t c = first_appliance; c < header.size(); ++c) {
    detail::check_column_name(header[c]);
    table.appliances.names.push_back(header[c]);
  }
  table.appliances.values.resize(table.appliances.names.size());
  std::vector<double> aggregate;
  std::vector<long long> stamps;
  std::vector<std::size_t> stamp_lines;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    const std::string row = where + " line " + std::to_string(line_no);
    if (cells.size() != header.size())
      throw DataError(row + ": expected " + std::to_string(header.size()) + " cells, found " +
                      std::to_string(cells.size()));
    const auto stamp = detail::parse_timestamp(detail::trim(cells[0]));
    if (!stamp) throw DataError(row + ": unparseable timestamp '" + std::string(cells[0]) + "'");
    stamps.push_back(*stamp);
    stamp_lines.push_back(line_no);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const auto cell = detail::trim(cells[c]);
      if (cell.empty()) throw DataError(row + ": missing value in column '" + header[c] + "'");
      const auto v = detail::parse_double(cell);
      if (!v || !std::isfinite(*v)) throw DataError(row + ": invalid number '" + std::string(cell) + "'");
      if (*v < 0.0) throw DataError(row + ": negative value in column '" + header[c] + "'");
      if (c == 1 && has_aggregate)
        aggregate.push_back(*v);
      else
        table.appliances.values[c - first_appliance].push_back(*v);
    }
  }
  if (stamps.empty()) throw DataError(where + " has no data rows");

  long long interval = 0;
  if (options.interval_seconds)
    interval = *options.interval_seconds;
  else if (stamps.size() >= 2)
    interval = stamps[1] - stamps[0];
  else
    interval = 120;
  if (interval <= 0 || 86400 % interval != 0)
    throw DataError(where + ": sampling interval of " + std::to_string(interval) +
                    " s is not a positive divisor of one day");
  for (std::size_t r = 1; r < stamps.size(); ++r) {
    if (stamps[r] - stamps[r - 1] != interval)
      throw DataError(where + " line " + std::to_string(stamp_lines[r]) + ": timestamp " +
                      std::to_string(stamps[r]) + " breaks the uniform " + std::to_string(interval) + " s spacing");
  }

  table.num_steps = stamps.size();
  table.interval_seconds = static_cast<int>(interval);
  const long long first = stamps.front();
  table.start_step = static_cast<long>((first >= 0 ? first : first - interval + 1) / interval);
  table.appliances.start_step = table.start_step;
  if (has_aggregate) table.aggregate = AggregateSeries{std::move(aggregate), table.start_step};
  return table;
}

/// Read a labelled dataset; at least one appliance column is required.
inline LabeledDataset read_dataset(const std::filesystem::path& path, const ReadOptions& options = {}) {
  TraceTable table = read_trace_table(path, options);
  if (table.appliances.names.empty())
    throw DataError("'" + path.string() + "' has no appliance columns");
  LabeledDataset d;
  d.household_id = path.stem().string();
  d.sampling.interval_seconds = table.interval_seconds;
  d.appliances = std::move(table.appliances);
  d.aggregate = std::move(table.aggregate);
  d.validate();
  return d;
}

/// Read the meter series of a file; sums appliance columns when the
/// aggregate column is absent.
inline AggregateSeries read_aggregate(const std::filesystem::path& path, const ReadOptions& options = {},
                                      int* interval_seconds = nullptr) {
  TraceTable table = read_trace_table(path, options);
  if (interval_seconds) *interval_seconds = table.interval_seconds;
  if (table.aggregate) return *table.aggregate;
  if (table.appliances.names.empty()) throw DataError("'" + path.string() + "' has neither aggregate nor appliance columns");
  return aggregate(table.appliances);
}

inline std::string dataset_to_csv(const std::optional<AggregateSeries>& y, const ApplianceMatrix& x,
                                  int interval_seconds) {
  for (const auto& n : x.names) detail::check_column_name(n);
  const std::size_t T = y ? y->size() : x.num_steps();
  const long start = y ? y->start_step : x.start_step;
  std::string out = "timestamp";
  if (y) out += ",aggregate";
  for (const auto& n : x.names) out += "," + n;
  out += '\n';
  for (std::size_t t = 0; t < T; ++t) {
    out += std::to_string((start + static_cast<long>(t)) * interval_seconds);
    if (y) out += "," + format_number(y->values[t]);
    for (const auto& row : x.values) out += "," + format_number(row[t]);
    out += '\n';
  }
  return out;
}

inline void write_dataset(const LabeledDataset& d, const std::filesystem::path& path) {
  d.validate();
  detail::write_file_atomically(path, dataset_to_csv(d.observed(), d.appliances, d.sampling.interval_seconds));
}

inline std::filesystem::path result_metadata_path(const std::filesystem::path& csv_path) {
  std::filesystem::path p = csv_path;
  p += ".json";
  return p;
}

/// Wide CSV of the estimate (observed aggregate plus estimated appliance
/// columns) and a sidecar `<path>.json` with decoding metadata.
inline void write_disaggregation(const DisaggregationResult& result, const AggregateSeries& y,
                                 const SamplingSpec& sampling, const std::filesystem::path& path) {
  if (result.energy.num_appliances() == 0)
    throw DataError("refusing to write a disaggregation without appliance columns");
  if (result.energy.num_steps() != y.size())
    throw ContractError("write_disaggregation: estimate and aggregate lengths differ");

  nlohmann::json meta;
  meta["schema"] = kResultSchema;
  meta["variant"] = std::string(to_string(result.variant));
  meta["log_posterior"] = std::isfinite(result.log_posterior) ? nlohmann::json(result.log_posterior) : nlohmann::json();
  meta["sweeps_used"] = result.sweeps_used;
  meta["improving_sweeps"] = result.improving_sweeps;
  meta["converged"] = result.converged;
  meta["interval_seconds"] = sampling.interval_seconds;
  meta["start_step"] = y.start_step;
  meta["appliances"] = result.energy.names;
  meta["states"] = result.assignment.states;
  meta["selector"] = result.assignment.selector ? nlohmann::json(*result.assignment.selector) : nlohmann::json();

  const std::string csv = dataset_to_csv(y, result.energy, sampling.interval_seconds);
  detail::write_file_atomically(path, csv);
  detail::write_file_atomically(result_metadata_path(path), meta.dump(2) + "\n");
}

struct PlotRow {
  std::string appliance;
  double hour = 0.0;
  double true_wh = 0.0;
  double estimated_wh = 0.0;
};

struct PlotTable {
  std::vector<PlotRow> rows;

  std::string to_csv() const {
    std::string out = "appliance,hour,true_wh,estimated_wh\n";
    for (const auto& r : rows)
      out += r.appliance + "," + format_number(r.hour) + "," + format_number(r.true_wh) + "," +
             format_number(r.estimated_wh) + "\n";
    return out;
  }
};

/// One day of true versus estimated energy per appliance, long format, with
/// hour of day on the horizontal axis. `day_index` counts days since day 0.
inline PlotTable export_plot_table(const ApplianceMatrix& truth, const ApplianceMatrix& estimate,
                                   const std::vector<std::string>& appliances, long day_index,
                                   const SamplingSpec& sampling) {
  if (truth.start_step != estimate.start_step || truth.num_steps() != estimate.num_steps())
    throw ContractError("export_plot_table: truth and estimate cover different steps");
  const long spd = sampling.steps_per_day();
  const long day_begin = day_index * spd;
  const long begin = std::max(day_begin, truth.start_step);
  const long end = std::min(day_begin + spd, truth.start_step + static_cast<long>(truth.num_steps()));
  if (day_index < 0 || begin >= end)
    throw DataError("day " + std::to_string(day_index) + " is outside the data");

  PlotTable table;
  for (const auto& name : appliances) {
    const auto ti = truth.index_of(name);
    const auto ei = estimate.index_of(name);
    if (!ti || !ei) throw DataError("unknown appliance '" + name + "'");
    for (long s = begin; s < end; ++s) {
      const auto t = static_cast<std::size_t>(s - truth.start_step);
      table.rows.push_back({name, static_cast<double>((s - day_begin) * sampling.interval_seconds) / 3600.0,
                            truth.values[*ti][t], estimate.values[*ei][t]});
    }
  }
  return table;
}

/// Household metadata stored in manifest.json.
struct DatasetManifest {
  std::string household_id;
  int interval_seconds = 120;
  std::vector<std::string> appliance_names;
  std::string file;  // CSV with aggregate and appliance columns, relative to the manifest
  long start_step = 0;
};

inline void write_manifest(const std::vector<DatasetManifest>& households, const std::filesystem::path& dir) {
  nlohmann::json j;
  j["schema"] = kDataSchema;
  j["households"] = nlohmann::json::array();
  for (const auto& h : households)
    j["households"].push_back({{"household_id", h.household_id},
                               {"interval_seconds", h.interval_seconds},
                               {"appliance_names", h.appliance_names},
                               {"file", h.file},
                               {"start_step", h.start_step}});
  detail::write_file_atomically(dir / "manifest.json", j.dump(2) + "\n");
}

inline std::vector<DatasetManifest> read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  try {
    const auto j = nlohmann::json::parse(detail::read_file(path));
    if (j.value("schema", std::string()) != kDataSchema)
      throw DataError("'" + path.string() + "' is not schema " + kDataSchema);
    std::vector<DatasetManifest> out;
    for (const auto& hj : j.at("households")) {
      DatasetManifest m;
      m.household_id = hj.at("household_id").get<std::string>();
      m.interval_seconds = hj.at("interval_seconds").get<int>();
      m.appliance_names = hj.at("appliance_names").get<std::vector<std::string>>();
      m.file = hj.at("file").get<std::string>();
      m.start_step = hj.value("start_step", 0L);
      if (m.interval_seconds <= 0 || 86400 % m.interval_seconds != 0)
        throw DataError("household '" + m.household_id + "' has an invalid interval");
      out.push_back(std::move(m));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest '" + path.string() + "': " + e.what());
  }
}

inline LabeledDataset load_household(const std::filesystem::path& dir, const DatasetManifest& m) {
  LabeledDataset d = read_dataset(dir / m.file, ReadOptions{m.interval_seconds});
  d.household_id = m.household_id;
  if (d.appliances.names != m.appliance_names)
    throw DataError("household '" + m.household_id + "': file columns do not match the manifest");
  return d;
}

}  // namespace disagg
