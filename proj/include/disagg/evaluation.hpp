#pragma once

// Disaggregation error metric and the four-variant comparison protocol.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "disagg/estimation.hpp"
#include "disagg/inference.hpp"
#include "disagg/types.hpp"

namespace disagg {

/// E = sum_{i,t} (xhat_it - x_it)^2 / sum_{i,t} x_it^2, pooled over all
/// appliances and steps.
inline double normalized_error(const ApplianceMatrix& truth, const ApplianceMatrix& estimate) {
  if (truth.num_appliances() != estimate.num_appliances() || truth.num_steps() != estimate.num_steps())
    throw ContractError("normalized_error: truth and estimate shapes differ");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.num_appliances(); ++i) {
    if (truth.values[i].size() != estimate.values[i].size())
      throw ContractError("normalized_error: ragged matrices");
    for (std::size_t t = 0; t < truth.values[i].size(); ++t) {
      const double d = estimate.values[i][t] - truth.values[i][t];
      num += d * d;
      den += truth.values[i][t] * truth.values[i][t];
    }
  }
  if (!(den > 0.0)) throw DataError("normalized_error is undefined for an all-zero ground truth");
  return num / den;
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

struct CompareConfig {
  TrainConfig train;
  DecodeConfig decode;
  int threads = 1;
  // Diagnostic: replace every decode by the ground truth. Exercises the
  // protocol and report plumbing with a perfect decoder.
  bool truth_as_estimate = false;
  std::uint64_t seed = 0;  // recorded in the report metadata
};

struct ComparisonReport {
  struct Row {
    std::string household_id;
    std::vector<double> errors;  // parallel to `variants`
  };
  struct Skipped {
    std::string household_id;
    std::string reason;
  };

  std::vector<ModelVariant> variants;
  std::vector<Row> rows;
  std::vector<Skipped> skipped;
  std::vector<double> mean;
  std::vector<double> stdev;  // population standard deviation across households
  int train_days = 0;
  int test_days = 0;
  std::uint64_t seed = 0;

  /// "m (s)" with three decimals, as in a mean(std) results table.
  std::string cell(std::size_t v) const { return format_fixed(mean[v], 3) + " (" + format_fixed(stdev[v], 3) + ")"; }

  std::string format_table() const {
    constexpr int width = 16;
    auto pad = [](std::string s) {
      if (s.size() < width) s.insert(0, width - s.size(), ' ');
      return s;
    };
    std::ostringstream out;
    for (auto v : variants) out << pad(std::string(to_string(v)));
    out << '\n';
    for (std::size_t v = 0; v < variants.size(); ++v) out << pad(rows.empty() ? "n/a" : cell(v));
    out << '\n';
    out << "households=" << rows.size() << " skipped=" << skipped.size() << " train_days=" << train_days
        << " test_days=" << test_days << '\n';
    return out.str();
  }

  /// Household x variant error grid followed by mean and std rows.
  std::string to_csv() const {
    std::ostringstream out;
    out << "# train_days=" << train_days << ",test_days=" << test_days << ",seed=" << seed << '\n';
    for (const auto& s : skipped) out << "# skipped " << s.household_id << ": " << s.reason << '\n';
    out << "household";
    for (auto v : variants) out << ',' << to_string(v);
    out << '\n';
    for (const auto& r : rows) {
      out << r.household_id;
      for (double e : r.errors) out << ',' << format_fixed(e, 6);
      out << '\n';
    }
    if (!rows.empty()) {
      out << "mean";
      for (double m : mean) out << ',' << format_fixed(m, 6);
      out << "\nstd";
      for (double s : stdev) out << ',' << format_fixed(s, 6);
      out << '\n';
    }
    return out.str();
  }
};

namespace detail {

struct HouseholdOutcome {
  std::optional<std::vector<double>> errors;
  std::string failure;
};

inline HouseholdOutcome evaluate_household(const LabeledDataset& data, const std::vector<ModelVariant>& variants,
                                           int train_days, int test_days, const CompareConfig& cfg) {
  HouseholdOutcome outcome;
  const auto spd = static_cast<std::size_t>(data.sampling.steps_per_day());
  const std::size_t train_steps = static_cast<std::size_t>(train_days) * spd;
  const std::size_t test_steps = static_cast<std::size_t>(test_days) * spd;
  if (data.num_steps() < train_steps + test_steps) {
    outcome.failure = "spans " + std::to_string(data.num_steps()) + " steps, needs " +
                      std::to_string(train_steps + test_steps);
    return outcome;
  }
  try {
    const LabeledDataset train_part = data.slice(0, train_steps);
    const LabeledDataset test_part = data.slice(train_steps, test_steps);
    const HouseholdModel model = train(train_part, cfg.train).model;
    const AggregateSeries y = test_part.observed();
    std::vector<double> errors;
    for (auto v : variants) {
      if (cfg.truth_as_estimate) {
        errors.push_back(normalized_error(test_part.appliances, test_part.appliances));
        continue;
      }
      const auto result = decode(model, y, v, cfg.decode);
      errors.push_back(normalized_error(test_part.appliances, result.energy));
    }
    outcome.errors = std::move(errors);
  } catch (const Error& e) {
    outcome.failure = e.what();
  }
  return outcome;
}

}  // namespace detail

/// Chronological protocol: the first `train_days` of each household train a
/// model, the following `test_days` are decoded under every variant. Errors
/// are computed per household, then averaged across households.
inline ComparisonReport compare_models(const std::vector<LabeledDataset>& households,
                                       const std::vector<ModelVariant>& variants, int train_days, int test_days,
                                       const CompareConfig& cfg = {}) {
  if (variants.empty()) throw ContractError("compare_models: no variants requested");
  if (train_days < 1 || test_days < 1) throw ContractError("compare_models: day counts must be positive");

  std::vector<detail::HouseholdOutcome> outcomes(households.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t h = next++; h < households.size(); h = next++)
      outcomes[h] = detail::evaluate_household(households[h], variants, train_days, test_days, cfg);
  };
  const int threads = std::max(1, std::min<int>(cfg.threads, static_cast<int>(households.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
  }

  ComparisonReport report;
  report.variants = variants;
  report.train_days = train_days;
  report.test_days = test_days;
  report.seed = cfg.seed;
  for (std::size_t h = 0; h < households.size(); ++h) {
    if (outcomes[h].errors)
      report.rows.push_back({households[h].household_id, std::move(*outcomes[h].errors)});
    else
      report.skipped.push_back({households[h].household_id, outcomes[h].failure});
  }

  const std::size_t V = variants.size();
  report.mean.assign(V, 0.0);
  report.stdev.assign(V, 0.0);
  if (!report.rows.empty()) {
    const auto n = static_cast<double>(report.rows.size());
    for (std::size_t v = 0; v < V; ++v) {
      double sum = 0.0;
      for (const auto& r : report.rows) sum += r.errors[v];
      report.mean[v] = sum / n;
      double ss = 0.0;
      for (const auto& r : report.rows) ss += (r.errors[v] - report.mean[v]) * (r.errors[v] - report.mean[v]);
      report.stdev[v] = std::sqrt(ss / n);
    }
  }
  return report;
}

}  // namespace disagg
