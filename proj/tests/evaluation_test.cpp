#include <gtest/gtest.h>

#include <random>

#include "disagg/evaluation.hpp"
#include "disagg/simulation.hpp"
#include "test_support.hpp"

namespace disagg {
namespace {

ApplianceMatrix matrix(std::vector<std::vector<double>> v) {
  ApplianceMatrix x;
  for (std::size_t i = 0; i < v.size(); ++i) x.names.push_back("a" + std::to_string(i));
  x.values = std::move(v);
  return x;
}

TEST(NormalizedError, WorkedExamples) {
  const auto truth = matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(normalized_error(truth, truth), 0.0);
  EXPECT_EQ(normalized_error(truth, matrix({{0, 0}, {0, 0}})), 1.0);
  EXPECT_NEAR(normalized_error(truth, matrix({{1, 1}, {3, 5}})), 2.0 / 30.0, 1e-12);
}

TEST(NormalizedError, ScaleCovariantNonNegativeAndZeroOnlyWhenEqual) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<std::vector<double>> a(3, std::vector<double>(7)), b = a;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t t = 0; t < 7; ++t) {
        a[i][t] = testing::uniform(rng, 0, 10);
        b[i][t] = rep % 4 == 0 ? a[i][t] : testing::uniform(rng, 0, 10);
      }
    const double e = normalized_error(matrix(a), matrix(b));
    EXPECT_GE(e, 0.0);
    EXPECT_EQ(e == 0.0, a == b);
    const double c = testing::uniform(rng, 0.01, 100.0);
    auto as = a, bs = b;
    for (auto* m : {&as, &bs})
      for (auto& row : *m)
        for (auto& v : row) v *= c;
    EXPECT_NEAR(normalized_error(matrix(as), matrix(bs)), e, 1e-12 * std::max(1.0, e));
  }
}

TEST(NormalizedError, Errors) {
  EXPECT_THROW(normalized_error(matrix({{0, 0}}), matrix({{1, 0}})), DataError);
  EXPECT_THROW(normalized_error(matrix({{1, 2}}), matrix({{1, 2}, {3, 4}})), ContractError);
  EXPECT_THROW(normalized_error(matrix({{1, 2}}), matrix({{1, 2, 3}})), ContractError);
}

TEST(ComparisonReport, TableCellFormat) {
  ComparisonReport r;
  r.variants = {ModelVariant::FHMM, ModelVariant::IFNHMM};
  r.rows.push_back({"h", {1.024, 0.847}});
  r.mean = {1.024, 0.847};
  r.stdev = {0.396, 0.289};
  EXPECT_EQ(r.cell(0), "1.024 (0.396)");
  EXPECT_EQ(r.cell(1), "0.847 (0.289)");
  const auto table = r.format_table();
  EXPECT_NE(table.find("FHMM"), std::string::npos);
  EXPECT_NE(table.find("IFNHMM"), std::string::npos);
  EXPECT_NE(table.find("1.024 (0.396)"), std::string::npos);
}

std::vector<LabeledDataset> cohort(int households, int days, std::uint64_t seed) {
  std::vector<LabeledDataset> out;
  for (int h = 0; h < households; ++h) {
    SimConfig cfg;
    cfg.num_appliances = 2;
    cfg.states_per_appliance = 2;
    cfg.seed = mix_seed(seed, static_cast<std::uint64_t>(h));
    const auto m = sample_household_model(cfg);
    const auto s = simulate(m, days, ModelVariant::IFNHMM, mix_seed(seed, 1000 + static_cast<std::uint64_t>(h)));
    LabeledDataset d;
    d.household_id = "h" + std::to_string(h);
    d.appliances = s.x;
    d.aggregate = s.y;
    d.sampling = m.sampling;
    out.push_back(std::move(d));
  }
  return out;
}

TEST(CompareModels, TruthAsEstimateReportsZero) {
  const auto data = cohort(1, 3, 4);
  CompareConfig cfg;
  cfg.truth_as_estimate = true;
  const auto r = compare_models(data, {std::begin(kAllVariants), std::end(kAllVariants)}, 2, 1, cfg);
  ASSERT_EQ(r.rows.size(), 1u);
  for (std::size_t v = 0; v < 4; ++v) EXPECT_EQ(r.cell(v), "0.000 (0.000)");
}

TEST(CompareModels, SkipsShortHouseholdsAndIsThreadInvariant) {
  auto data = cohort(3, 3, 8);
  data[1] = data[1].slice(0, 720);
  const std::vector<ModelVariant> variants{ModelVariant::FHMM, ModelVariant::IFNHMM};
  CompareConfig one;
  one.seed = 8;
  CompareConfig many = one;
  many.threads = 3;
  const auto a = compare_models(data, variants, 2, 1, one);
  const auto b = compare_models(data, variants, 2, 1, many);
  ASSERT_EQ(a.rows.size(), 2u);
  ASSERT_EQ(a.skipped.size(), 1u);
  EXPECT_EQ(a.skipped[0].household_id, "h1");
  EXPECT_EQ(a.to_csv(), b.to_csv());
  EXPECT_EQ(a.format_table(), b.format_table());

  // Mean and population std recomputed from the rows.
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const double e0 = a.rows[0].errors[v], e1 = a.rows[1].errors[v];
    EXPECT_NEAR(a.mean[v], (e0 + e1) / 2, 1e-15);
    EXPECT_NEAR(a.stdev[v], std::abs(e0 - e1) / 2, 1e-15);
  }
  const auto csv = a.to_csv();
  EXPECT_EQ(csv.rfind("# train_days=2,test_days=1,seed=8\n", 0), 0u);
  EXPECT_NE(csv.find("# skipped h1:"), std::string::npos);
  EXPECT_NE(csv.find("\nhousehold,FHMM,IFNHMM\n"), std::string::npos);
  EXPECT_NE(csv.find("\nmean,"), std::string::npos);
  EXPECT_NE(csv.find("\nstd,"), std::string::npos);
}

TEST(CompareModels, ContractErrors) {
  const auto data = cohort(1, 2, 1);
  EXPECT_THROW(compare_models(data, {}, 1, 1), ContractError);
  EXPECT_THROW(compare_models(data, {ModelVariant::FHMM}, 0, 1), ContractError);
}

}  // namespace
}  // namespace disagg
