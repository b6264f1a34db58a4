#include "leap/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include "json.hpp"
#include <numeric>
#include <set>

#include "leap/error.hpp"
#include "leap/io.hpp"
#include "leap/metrics.hpp"
#include "leap/rng.hpp"

namespace leap::evaluate {

namespace {

MetricRow make_row(std::string id, const std::vector<double>& truth, const std::vector<double>& pred) {
  MetricRow row;
  row.perturbation_id = std::move(id);
  row.n_pairs = truth.size();
  row.mse = metrics::mse(truth, pred);
  if (truth.size() >= 2) {
    row.spearman = metrics::spearman(truth, pred);
    row.pearson = metrics::pearson(truth, pred);
  }
  return row;
}

template <typename Get>
double mean_over(const ScoreResult& s, Get get) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < s.rows.size(); ++i) {
    if (auto v = get(s.rows[i])) {
      sum += *v;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : std::nan("");
}

}  // namespace

double ScoreResult::mean_spearman() const {
  return mean_over(*this, [](const MetricRow& r) { return r.spearman; });
}
double ScoreResult::mean_pearson() const {
  return mean_over(*this, [](const MetricRow& r) { return r.pearson; });
}
double ScoreResult::mean_mse() const {
  return mean_over(*this, [](const MetricRow& r) { return std::optional<double>(r.mse); });
}

ScoreResult score(const ResponseTable& truth, const PredictionTable& predictions) {
  std::map<std::pair<std::string, std::string>, double> pred;
  for (const auto& p : predictions.records) pred[{p.sample_id, p.perturbation_id}] = p.value;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
  std::vector<double> all_t, all_p;
  for (const auto& r : truth.records) {
    auto it = pred.find({r.sample_id, r.perturbation_id});
    if (it == pred.end())
      throw ValidationError("score: missing prediction for (" + r.sample_id + ", " + r.perturbation_id + ")");
    auto& g = groups[r.perturbation_id];
    g.first.push_back(r.value);
    g.second.push_back(it->second);
  }
  if (groups.empty()) throw ValidationError("score: no truth records");
  ScoreResult out;
  for (const auto& [id, g] : groups) {
    out.rows.push_back(make_row(id, g.first, g.second));
    if (!out.rows.back().spearman || !out.rows.back().pearson) ++out.excluded;
    all_t.insert(all_t.end(), g.first.begin(), g.first.end());
    all_p.insert(all_p.end(), g.second.begin(), g.second.end());
  }
  out.rows.push_back(make_row(kOverall, all_t, all_p));
  return out;
}

// --- plans ----------------------------------------------------------------------

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::repeated_holdout: return "repeated_holdout";
    case Strategy::leave_one_tissue_out: return "leave_one_tissue_out";
    case Strategy::transfer: return "transfer";
  }
  return "?";
}

void SplitPlan::validate() const {
  for (const auto& r : repeats) {
    if (r.test.empty()) throw ValidationError("split plan: empty test set in repeat " + r.label);
    const auto& train = train_of(r);
    std::set<std::string> tr(train.begin(), train.end());
    for (const auto& s : r.test)
      if (tr.count(s)) throw ValidationError("split plan: sample " + s + " in both train and test");
  }
}

namespace {

std::vector<std::string> sorted_unique(const std::vector<std::string>& v, const char* what) {
  std::vector<std::string> out(v);
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end())
    throw ValidationError(std::string(what) + ": duplicate sample ids");
  return out;
}

}  // namespace

SplitPlan plan_repeated_holdout(const std::vector<std::string>& samples, double fraction, std::size_t repeats,
                                std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("repeated holdout: fraction must be in (0,1)");
  if (repeats < 1) throw ValidationError("repeated holdout: repeats must be >= 1");
  const auto ids = sorted_unique(samples, "repeated holdout");
  const auto n_test = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
  if (n_test < 1 || n_test >= ids.size())
    throw ValidationError("repeated holdout: " + std::to_string(ids.size()) + " samples give an empty train or test set");
  SplitPlan plan;
  plan.strategy = Strategy::repeated_holdout;
  plan.seed = seed;
  for (std::size_t r = 0; r < repeats; ++r) {
    auto order = ids;
    Rng rng(derive_seed(seed, "split/holdout", r));
    rng.shuffle(order);
    std::vector<std::string> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::string> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    plan.train_sets.push_back(std::move(train));
    plan.repeats.push_back({r, std::move(test), "all", std::to_string(r)});
  }
  return plan;
}

SplitPlan plan_leave_one_tissue_out(const std::vector<std::string>& samples, const std::vector<std::string>& tissues,
                                    std::size_t test_subset_size, std::size_t n_bootstrap, std::uint64_t seed) {
  if (samples.size() != tissues.size()) throw ValidationError("leave-one-tissue-out: one tissue per sample required");
  if (n_bootstrap < 1) throw ValidationError("leave-one-tissue-out: n_bootstrap must be >= 1");
  sorted_unique(samples, "leave-one-tissue-out");
  std::map<std::string, std::vector<std::string>> by_tissue;
  for (std::size_t i = 0; i < samples.size(); ++i) by_tissue[tissues[i]].push_back(samples[i]);
  SplitPlan plan;
  plan.strategy = Strategy::leave_one_tissue_out;
  plan.seed = seed;
  for (auto& [tissue, members] : by_tissue) {
    if (members.size() < test_subset_size + 5) continue;
    std::sort(members.begin(), members.end());
    std::vector<std::string> train;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (tissues[i] != tissue) train.push_back(samples[i]);
    std::sort(train.begin(), train.end());
    const std::size_t set = plan.train_sets.size();
    plan.train_sets.push_back(std::move(train));
    for (std::size_t b = 0; b < n_bootstrap; ++b) {
      auto order = members;
      Rng rng(derive_seed(seed, "split/tissue/" + tissue, b));
      rng.shuffle(order);
      std::vector<std::string> test(order.begin() + static_cast<std::ptrdiff_t>(test_subset_size), order.end());
      std::sort(test.begin(), test.end());
      plan.repeats.push_back({set, std::move(test), tissue, std::to_string(b)});
    }
  }
  if (plan.repeats.empty())
    throw ValidationError("leave-one-tissue-out: no tissue has at least " + std::to_string(test_subset_size + 5) +
                          " samples");
  return plan;
}

SplitPlan plan_transfer(const std::vector<std::string>& train_domain, const std::vector<std::string>& test_domain,
                        std::size_t removed_per_repeat, std::size_t repeats, std::uint64_t seed) {
  if (repeats < 1) throw ValidationError("transfer: repeats must be >= 1");
  auto train = sorted_unique(train_domain, "transfer");
  const auto test_ids = sorted_unique(test_domain, "transfer");
  if (test_ids.size() < removed_per_repeat + 2)
    throw ValidationError("transfer: test domain has " + std::to_string(test_ids.size()) + " samples, need at least " +
                          std::to_string(removed_per_repeat + 2));
  SplitPlan plan;
  plan.strategy = Strategy::transfer;
  plan.seed = seed;
  plan.train_sets.push_back(std::move(train));
  for (std::size_t r = 0; r < repeats; ++r) {
    auto order = test_ids;
    Rng rng(derive_seed(seed, "split/transfer", r));
    rng.shuffle(order);
    std::vector<std::string> test(order.begin() + static_cast<std::ptrdiff_t>(removed_per_repeat), order.end());
    std::sort(test.begin(), test.end());
    plan.repeats.push_back({0, std::move(test), "all", std::to_string(r)});
  }
  plan.validate();
  return plan;
}

// --- reports ----------------------------------------------------------------------

Stat summarize(const std::vector<double>& values) {
  Stat s;
  std::vector<double> v;
  for (double x : values)
    if (std::isfinite(x)) v.push_back(x);
  s.n = v.size();
  if (v.empty()) {
    s.mean = s.sd = s.median = s.ci_low = s.ci_high = std::nan("");
    return s;
  }
  s.mean = metrics::mean(v);
  s.sd = metrics::sample_sd(v);
  s.median = metrics::percentile(v, 50.0);
  s.ci_low = metrics::percentile(v, 2.5);
  s.ci_high = metrics::percentile(v, 97.5);
  return s;
}

void EvaluationReport::add(const std::string& model, RepeatScore score) {
  for (auto& [name, scores] : models) {
    if (name == model) {
      scores.push_back(std::move(score));
      return;
    }
  }
  models.emplace_back(model, std::vector<RepeatScore>{std::move(score)});
}

const std::vector<RepeatScore>& EvaluationReport::model(const std::string& name) const {
  for (const auto& [n, scores] : models)
    if (n == name) return scores;
  throw ValidationError("report has no model " + name);
}

double EvaluationReport::mean_spearman(const std::string& name) const {
  std::vector<double> v;
  for (const auto& r : model(name)) v.push_back(r.result.mean_spearman());
  return summarize(v).mean;
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? io::format_real(*v) : "NA"; }

nlohmann::ordered_json stat_json(const Stat& s) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::ordered_json(x) : nlohmann::ordered_json(nullptr); };
  nlohmann::ordered_json j;
  j["mean"] = num(s.mean);
  j["sd"] = num(s.sd);
  j["median"] = num(s.median);
  j["ci95_low"] = num(s.ci_low);
  j["ci95_high"] = num(s.ci_high);
  j["n"] = s.n;
  return j;
}

nlohmann::ordered_json block_json(const std::vector<const RepeatScore*>& repeats) {
  std::vector<double> ps, pp, pm, os, op, om;
  std::size_t excluded = 0;
  for (const auto* r : repeats) {
    ps.push_back(r->result.mean_spearman());
    pp.push_back(r->result.mean_pearson());
    pm.push_back(r->result.mean_mse());
    const auto& o = r->result.overall();
    os.push_back(o.spearman.value_or(std::nan("")));
    op.push_back(o.pearson.value_or(std::nan("")));
    om.push_back(o.mse);
    excluded += r->result.excluded;
  }
  nlohmann::ordered_json j;
  j["n_repeats"] = repeats.size();
  j["per_perturbation"]["spearman"] = stat_json(summarize(ps));
  j["per_perturbation"]["pearson"] = stat_json(summarize(pp));
  j["per_perturbation"]["mse"] = stat_json(summarize(pm));
  j["overall"]["spearman"] = stat_json(summarize(os));
  j["overall"]["pearson"] = stat_json(summarize(op));
  j["overall"]["mse"] = stat_json(summarize(om));
  j["excluded_perturbation_rows"] = excluded;
  return j;
}

}  // namespace

std::string EvaluationReport::to_csv() const {
  std::string s = "model,group,repeat,perturbation_id,spearman,pearson,mse,n_pairs\n";
  for (const auto& [name, scores] : models)
    for (const auto& r : scores)
      for (const auto& row : r.result.rows)
        s += name + ',' + r.group + ',' + r.label + ',' + row.perturbation_id + ',' + opt(row.spearman) + ',' +
             opt(row.pearson) + ',' + io::format_real(row.mse) + ',' + std::to_string(row.n_pairs) + '\n';
  return s;
}

std::string EvaluationReport::summary_json() const {
  nlohmann::ordered_json root;
  root["task"] = task;
  for (const auto& [name, scores] : models) {
    std::vector<std::string> group_order;
    std::map<std::string, std::vector<const RepeatScore*>> groups;
    std::vector<const RepeatScore*> all;
    for (const auto& r : scores) {
      if (!groups.count(r.group)) group_order.push_back(r.group);
      groups[r.group].push_back(&r);
      all.push_back(&r);
    }
    auto& m = root["models"][name];
    for (const auto& g : group_order) m["groups"][g] = block_json(groups[g]);
    if (group_order.size() > 1) {
      // Average of per-group means, e.g. over held-out tissues.
      std::vector<double> ps, os;
      for (const auto& g : group_order) {
        std::vector<double> v, w;
        for (const auto* r : groups[g]) {
          v.push_back(r->result.mean_spearman());
          w.push_back(r->result.overall().spearman.value_or(std::nan("")));
        }
        ps.push_back(summarize(v).mean);
        os.push_back(summarize(w).mean);
      }
      m["group_average"]["per_perturbation_spearman"] = stat_json(summarize(ps));
      m["group_average"]["overall_spearman"] = stat_json(summarize(os));
    }
    m["all_repeats"] = block_json(all);
  }
  return root.dump(2) + "\n";
}

}  // namespace leap::evaluate
