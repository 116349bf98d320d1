#include "cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "disagg/disagg.hpp"

namespace disagg::cli {
namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string log_level = "warn";
};

struct TrainFlags {
  int states = 3;
  int bins = 24;
  double alpha = 0.5;
  bool per_bin_noise = false;

  TrainConfig config() const {
    TrainConfig cfg;
    cfg.num_states = states;
    cfg.bins_per_day = bins;
    cfg.smoothing_alpha = alpha;
    cfg.per_bin_noise = per_bin_noise;
    return cfg;
  }
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--states", f.states, "States per appliance")->check(CLI::PositiveNumber);
  cmd->add_option("--bins", f.bins, "Time-of-day bins for per-bin transitions")->check(CLI::PositiveNumber);
  cmd->add_option("--alpha", f.alpha, "Additive smoothing pseudo-count")->check(CLI::NonNegativeNumber);
  cmd->add_flag("--per-bin-noise", f.per_bin_noise, "Estimate one noise sigma per bin");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<ModelVariant> parse_variants(const std::string& text) {
  std::vector<ModelVariant> out;
  try {
    for (const auto& v : split_list(text)) out.push_back(parse_variant(v));
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  if (out.empty()) throw UsageError("no variants given");
  return out;
}

SimConfig sim_config_from_json(const nlohmann::json& j) {
  SimConfig c;
  c.num_appliances = j.value("num_appliances", c.num_appliances);
  c.states_per_appliance = j.value("states_per_appliance", c.states_per_appliance);
  c.days = j.value("days", c.days);
  c.sampling.interval_seconds = j.value("interval_seconds", c.sampling.interval_seconds);
  c.sampling.bins_per_day = j.value("bins_per_day", c.sampling.bins_per_day);
  c.mean_scale = j.value("mean_scale", c.mean_scale);
  c.self_loop_bias = j.value("self_loop_bias", c.self_loop_bias);
  c.nonhomogeneous_strength = j.value("nonhomogeneous_strength", c.nonhomogeneous_strength);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.seed = j.value("seed", c.seed);
  return c;
}

// Align `estimate` against the matching window of `truth`, selecting the
// truth columns named in the estimate.
ApplianceMatrix align_truth(const TraceTable& truth, const TraceTable& estimate) {
  if (truth.interval_seconds != estimate.interval_seconds)
    throw DataError("truth and estimate use different sampling intervals");
  const long offset = estimate.start_step - truth.start_step;
  if (offset < 0 || offset + static_cast<long>(estimate.num_steps) > static_cast<long>(truth.num_steps))
    throw DataError("estimate covers steps outside the truth file");
  if (estimate.appliances.names.empty()) throw DataError("estimate has no appliance columns");
  ApplianceMatrix out;
  out.start_step = estimate.start_step;
  for (const auto& name : estimate.appliances.names) {
    const auto i = truth.appliances.index_of(name);
    if (!i) throw DataError("appliance '" + name + "' is missing from the truth file");
    const auto& row = truth.appliances.values[*i];
    out.names.push_back(name);
    out.values.emplace_back(row.begin() + offset, row.begin() + offset + static_cast<long>(estimate.num_steps));
  }
  return out;
}

LabeledDataset load_training_data(const fs::path& path, const std::string& household) {
  if (!fs::is_directory(path)) return read_dataset(path);
  const auto manifest = read_manifest(path);
  if (manifest.empty()) throw DataError("manifest lists no households");
  if (household.empty()) return load_household(path, manifest.front());
  for (const auto& m : manifest)
    if (m.household_id == household) return load_household(path, m);
  throw DataError("household '" + household + "' is not in the manifest");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Energy disaggregation with factorial hidden Markov models", "disagg"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Base random seed");
  app.add_option("--threads", g.threads, "Household-level parallelism for compare")->check(CLI::PositiveNumber);
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::string config_path, out_path, data_path, model_path, variant_text, variants_text, truth_path, estimate_path,
      appliances_text, household;
  int train_days = 20, test_days = 5, skip_days = 0, days = 0, max_sweeps = 50;
  long day = 0;
  bool truth_as_estimate = false;
  TrainFlags train_flags;

  auto* simulate_cmd = app.add_subcommand("simulate", "Simulate synthetic households");
  simulate_cmd->add_option("--config", config_path, "Simulation config (JSON)")->required();
  simulate_cmd->add_option("--out", out_path, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a household model");
  train_cmd->add_option("--data", data_path, "Dataset CSV or directory with manifest.json")->required();
  train_cmd->add_option("--out", out_path, "Model JSON to write")->required();
  train_cmd->add_option("--household", household, "Household id when --data is a directory");
  train_cmd->add_option("--train-days", days, "Use only the first N days")->check(CLI::NonNegativeNumber);
  add_train_flags(train_cmd, train_flags);

  auto* disagg_cmd = app.add_subcommand("disaggregate", "Decode appliance energy from an aggregate");
  disagg_cmd->add_option("--model", model_path, "Model JSON")->required();
  disagg_cmd->add_option("--data", data_path, "CSV with an aggregate or appliance columns")->required();
  disagg_cmd->add_option("--variant", variant_text, "fhmm, fnhmm, ifhmm or ifnhmm")->required();
  disagg_cmd->add_option("--out", out_path, "Estimate CSV to write")->required();
  disagg_cmd->add_option("--skip-days", skip_days, "Skip the first N days of the file")->check(CLI::NonNegativeNumber);
  disagg_cmd->add_option("--days", days, "Decode at most N days (0 = all)")->check(CLI::NonNegativeNumber);
  disagg_cmd->add_option("--max-sweeps", max_sweeps, "Coordinate-ascent sweep limit")->check(CLI::PositiveNumber);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Normalized squared error of an estimate");
  evaluate_cmd->add_option("--truth", truth_path, "Ground-truth CSV")->required();
  evaluate_cmd->add_option("--estimate", estimate_path, "Estimate CSV")->required();

  auto* compare_cmd = app.add_subcommand("compare", "Compare model variants across households");
  compare_cmd->add_option("--data", data_path, "Directory with manifest.json")->required();
  compare_cmd->add_option("--variants", variants_text, "Comma-separated variants")->default_val("fhmm,fnhmm,ifhmm,ifnhmm");
  compare_cmd->add_option("--train-days", train_days, "Training days")->check(CLI::PositiveNumber);
  compare_cmd->add_option("--test-days", test_days, "Test days")->check(CLI::PositiveNumber);
  compare_cmd->add_option("--out", out_path, "Report CSV to write")->required();
  compare_cmd->add_flag("--truth-as-estimate", truth_as_estimate, "Diagnostic: score the truth against itself");
  add_train_flags(compare_cmd, train_flags);

  auto* plot_cmd = app.add_subcommand("plot-data", "Export one day of true vs estimated energy");
  plot_cmd->add_option("--truth", truth_path, "Ground-truth CSV")->required();
  plot_cmd->add_option("--estimate", estimate_path, "Estimate CSV")->required();
  plot_cmd->add_option("--appliances", appliances_text, "Comma-separated appliance names")->required();
  plot_cmd->add_option("--day", day, "Day index since day 0")->required()->check(CLI::NonNegativeNumber);
  plot_cmd->add_option("--out", out_path, "Plot CSV to write")->required();

  std::vector<ModelVariant> variants;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    if (disagg_cmd->parsed()) variants = parse_variants(variant_text);
    if (compare_cmd->parsed()) variants = parse_variants(variants_text);
    if (plot_cmd->parsed() && split_list(appliances_text).empty()) throw UsageError("--appliances is empty");
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  spdlog::logger log("disagg", sink);
  log.set_pattern("[%l] %v");
  log.set_level(spdlog::level::from_str(g.log_level));

  try {
    if (simulate_cmd->parsed()) {
      nlohmann::json cfg_json;
      try {
        cfg_json = nlohmann::json::parse(detail::read_file(config_path));
      } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse simulation config: " + std::string(e.what()));
      }
      SimConfig cfg = sim_config_from_json(cfg_json);
      if (g.seed) cfg.seed = *g.seed;
      const int households = cfg_json.value("households", 1);
      const ModelVariant variant = parse_variant(cfg_json.value("variant", std::string("ifnhmm")));
      if (households < 1) throw DataError("households must be at least 1");
      cfg.validate();

      const fs::path dir(out_path);
      fs::create_directories(dir);
      std::vector<DatasetManifest> manifest;
      for (int h = 0; h < households; ++h) {
        SimConfig hc = cfg;
        hc.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(2 * h));
        const HouseholdModel model = sample_household_model(hc);
        const auto sim = simulate(model, cfg.days, variant, mix_seed(cfg.seed, static_cast<std::uint64_t>(2 * h + 1)));
        char id[32];
        std::snprintf(id, sizeof id, "household_%03d", h);
        LabeledDataset d;
        d.household_id = id;
        d.sampling = cfg.sampling;
        d.appliances = sim.x;
        d.aggregate = sim.y;
        write_dataset(d, dir / (std::string(id) + ".csv"));
        save_model(model, dir / (std::string(id) + ".truth.json"));
        manifest.push_back({id, cfg.sampling.interval_seconds, sim.x.names, std::string(id) + ".csv", 0});
        if (sim.truncated > 0) log.info("{}: {} noisy readings truncated at zero", id, sim.truncated);
      }
      write_manifest(manifest, dir);
      out << "simulated " << households << " household(s) into " << dir.string() << "\n";
      return kExitOk;
    }

    if (train_cmd->parsed()) {
      LabeledDataset data = load_training_data(data_path, household);
      if (days > 0) {
        const auto steps = static_cast<std::size_t>(days) * static_cast<std::size_t>(data.sampling.steps_per_day());
        if (steps > data.num_steps()) throw DataError("dataset is shorter than --train-days");
        data = data.slice(0, steps);
      }
      auto trained = train(data, train_flags.config());
      for (const auto& w : trained.warnings) log.warn("{}", w);
      save_model(trained.model, out_path);
      out << "trained " << trained.model.num_chains() << " chain(s) on " << data.num_steps() << " steps\n";
      return kExitOk;
    }

    if (disagg_cmd->parsed()) {
      const HouseholdModel model = load_model(model_path);
      const ModelVariant variant = variants.front();
      model.require(variant);
      AggregateSeries y = read_aggregate(data_path, ReadOptions{model.sampling.interval_seconds});
      const auto spd = static_cast<std::size_t>(model.sampling.steps_per_day());
      const std::size_t begin = static_cast<std::size_t>(skip_days) * spd;
      if (begin >= y.size()) throw DataError("--skip-days leaves no data to decode");
      std::size_t count = y.size() - begin;
      if (days > 0) count = std::min(count, static_cast<std::size_t>(days) * spd);
      y.values = std::vector<double>(y.values.begin() + static_cast<long>(begin),
                                     y.values.begin() + static_cast<long>(begin + count));
      y.start_step += static_cast<long>(begin);

      DecodeConfig dcfg;
      dcfg.max_sweeps = max_sweeps;
      const auto result = decode(model, y, variant, dcfg);
      if (!result.converged) log.warn("decoder stopped after {} sweeps without converging", result.sweeps_used);
      write_disaggregation(result, y, model.sampling, out_path);
      out << to_string(variant) << " log-posterior " << format_number(result.log_posterior) << " after "
          << result.sweeps_used << " sweep(s)\n";
      return kExitOk;
    }

    if (evaluate_cmd->parsed()) {
      const TraceTable truth = read_trace_table(truth_path);
      const TraceTable estimate = read_trace_table(estimate_path);
      const ApplianceMatrix aligned = align_truth(truth, estimate);
      out << format_fixed(normalized_error(aligned, estimate.appliances), 6) << "\n";
      return kExitOk;
    }

    if (compare_cmd->parsed()) {
      const fs::path dir(data_path);
      std::vector<LabeledDataset> households;
      for (const auto& m : read_manifest(dir)) households.push_back(load_household(dir, m));
      CompareConfig cfg;
      cfg.train = train_flags.config();
      cfg.threads = g.threads;
      cfg.truth_as_estimate = truth_as_estimate;
      cfg.seed = g.seed.value_or(0);
      const auto report = compare_models(households, variants, train_days, test_days, cfg);
      for (const auto& s : report.skipped) log.warn("skipped {}: {}", s.household_id, s.reason);
      detail::write_file_atomically(out_path, report.to_csv());
      out << report.format_table();
      return kExitOk;
    }

    if (plot_cmd->parsed()) {
      const TraceTable truth = read_trace_table(truth_path);
      const TraceTable estimate = read_trace_table(estimate_path);
      const ApplianceMatrix aligned = align_truth(truth, estimate);
      SamplingSpec sampling;
      sampling.interval_seconds = truth.interval_seconds;
      const auto table = export_plot_table(aligned, estimate.appliances, split_list(appliances_text), day, sampling);
      detail::write_file_atomically(out_path, table.to_csv());
      out << "wrote " << table.rows.size() << " rows\n";
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace disagg::cli
