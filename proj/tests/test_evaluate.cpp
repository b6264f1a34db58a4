#include <gtest/gtest.h>

#include <set>

#include "leap/error.hpp"
#include "leap/evaluate.hpp"
#include "leap/metrics.hpp"
#include "oracles.hpp"

using namespace leap;
using namespace leap::evaluate;

namespace {

TEST(Spearman, BasicsAndTies) {
  std::vector<double> x = {1, 2, 3};
  EXPECT_DOUBLE_EQ(*metrics::spearman(x, x), 1.0);
  EXPECT_DOUBLE_EQ(*metrics::spearman(x, std::vector<double>{3, 2, 1}), -1.0);
  std::vector<double> a = {1, 2, 2, 3}, b = {1, 3, 2, 4};
  EXPECT_EQ(metrics::average_ranks(a), (std::vector<double>{1, 2.5, 2.5, 4}));
  EXPECT_NEAR(*metrics::spearman(a, b), oracle::spearman(a, b), 1e-12);
  EXPECT_FALSE(metrics::spearman(std::vector<double>{1, 1, 1}, x));
  EXPECT_THROW(metrics::spearman(a, x), ValidationError);
}

TEST(Pearson, LinearAndTwoPass) {
  std::vector<double> x = {1, 2, 5, 7}, y;
  for (double v : x) y.push_back(2 * v + 1);
  EXPECT_NEAR(*metrics::pearson(x, y), 1.0, 1e-15);
  EXPECT_EQ(metrics::mse(x, x), 0.0);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = oracle::random_matrix(30, 1, s).column(0), b = oracle::random_matrix(30, 1, s + 99).column(0);
    EXPECT_NEAR(*metrics::pearson(a, b), oracle::pearson(a, b), 1e-12);
  }
}

TEST(Score, SinglePerturbationEqualsOverall) {
  ResponseTable t;
  PredictionTable p;
  for (int i = 0; i < 10; ++i) {
    t.records.push_back({"S" + std::to_string(i), "P", double(i * i % 7), "x"});
    p.records.push_back({"S" + std::to_string(i), "P", double(i)});
  }
  const auto r = score(t, p);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].spearman, r.overall().spearman);
  EXPECT_EQ(r.rows[0].pearson, r.overall().pearson);
  EXPECT_EQ(r.rows[0].mse, r.overall().mse);
  p.records.pop_back();
  EXPECT_THROW(score(t, p), ValidationError);
}

TEST(Score, MatchesGroupByOracle) {
  Rng rng(3);
  ResponseTable t;
  PredictionTable p;
  for (int s = 0; s < 25; ++s)
    for (int q = 0; q < 4; ++q) {
      if (rng.bernoulli(0.3)) continue;
      const std::string sid = "S" + std::to_string(s), pid = "P" + std::to_string(q);
      t.records.push_back({sid, pid, rng.normal(), "x"});
      p.records.push_back({sid, pid, rng.normal()});
    }
  const auto r = score(t, p);
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> g;
  for (std::size_t i = 0; i < t.records.size(); ++i) {
    g[t.records[i].perturbation_id].first.push_back(t.records[i].value);
    g[t.records[i].perturbation_id].second.push_back(p.records[i].value);
  }
  ASSERT_EQ(r.rows.size(), g.size() + 1);
  std::size_t k = 0;
  double mean_sp = 0;
  for (const auto& [pid, v] : g) {
    EXPECT_EQ(r.rows[k].perturbation_id, pid);
    EXPECT_NEAR(*r.rows[k].spearman, oracle::spearman(v.first, v.second), 1e-12);
    EXPECT_NEAR(*r.rows[k].pearson, oracle::pearson(v.first, v.second), 1e-12);
    EXPECT_EQ(r.rows[k].n_pairs, v.first.size());
    mean_sp += *r.rows[k].spearman;
    ++k;
  }
  EXPECT_NEAR(r.mean_spearman(), mean_sp / double(g.size()), 1e-12);
}

TEST(Plans, HoldoutShapes) {
  std::vector<std::string> ten;
  for (int i = 0; i < 10; ++i) ten.push_back("S" + std::to_string(i));
  const auto plan = plan_repeated_holdout(ten, 0.2, 10, 1);
  ASSERT_EQ(plan.repeats.size(), 10u);
  std::set<std::vector<std::string>> distinct;
  for (const auto& r : plan.repeats) {
    EXPECT_EQ(r.test.size(), 2u);
    EXPECT_EQ(plan.train_of(r).size(), 8u);
    distinct.insert(r.test);
  }
  EXPECT_GT(distinct.size(), 1u);
  std::vector<std::string> hundred;
  for (int i = 0; i < 100; ++i) hundred.push_back("S" + std::to_string(i));
  const auto p100 = plan_repeated_holdout(hundred, 0.2, 10, 2);
  std::set<std::string> in_train;
  for (const auto& r : p100.repeats) in_train.insert(p100.train_of(r).begin(), p100.train_of(r).end());
  EXPECT_EQ(in_train.size(), 100u);
}

TEST(Plans, LeaveOneTissueOut) {
  std::vector<std::string> s, t;
  for (int i = 0; i < 60; ++i) {
    s.push_back("S" + std::to_string(i));
    t.push_back(i < 20 ? "a" : i < 40 ? "b" : i < 52 ? "c" : "d");
  }
  const auto plan = plan_leave_one_tissue_out(s, t, 10, 4, 5);
  std::set<std::string> groups;
  for (const auto& r : plan.repeats) groups.insert(r.group);
  EXPECT_EQ(groups, (std::set<std::string>{"a", "b"}));  // c has 12 < 15, d has 8
  const auto single = plan_leave_one_tissue_out(s, t, 10, 1, 5);
  EXPECT_EQ(single.repeats.size(), 2u);
  EXPECT_EQ(single.repeats[0].test, plan_leave_one_tissue_out(s, t, 10, 1, 5).repeats[0].test);
}

TEST(Plans, Transfer) {
  std::vector<std::string> train, test;
  for (int i = 0; i < 30; ++i) train.push_back("C" + std::to_string(i));
  for (int i = 0; i < 140; ++i) test.push_back("X" + std::to_string(i));
  const auto plan = plan_transfer(train, test, 10, 10, 1);
  ASSERT_EQ(plan.train_sets.size(), 1u);
  for (const auto& r : plan.repeats) EXPECT_EQ(r.test.size(), 130u);
  const auto full = plan_transfer(train, test, 0, 1, 1);
  ASSERT_EQ(full.repeats.size(), 1u);
  EXPECT_EQ(full.repeats[0].test.size(), 140u);
}

TEST(Report, CsvAndSummaryAreStable) {
  ResponseTable t;
  PredictionTable p;
  for (int i = 0; i < 6; ++i) {
    t.records.push_back({"S" + std::to_string(i), "P", double(i), "x"});
    p.records.push_back({"S" + std::to_string(i), "P", double(i % 3)});
  }
  EvaluationReport a, b;
  a.task = b.task = "t";
  for (auto* r : {&a, &b}) {
    r->add("m", {"all", "0", score(t, p)});
    r->add("m", {"all", "1", score(t, p)});
  }
  EXPECT_EQ(a.to_csv(), b.to_csv());
  EXPECT_EQ(a.summary_json(), b.summary_json());
  EXPECT_EQ(a.to_csv().substr(0, a.to_csv().find('\n')), "model,group,repeat,perturbation_id,spearman,pearson,mse,n_pairs");
}

TEST(Summarize, MeanSdPercentiles) {
  const auto s = summarize({1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.sd, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_DOUBLE_EQ(s.median, 2.5);
  EXPECT_NEAR(s.ci_low, 1.075, 1e-12);
  EXPECT_NEAR(s.ci_high, 3.925, 1e-12);
}

}  // namespace
