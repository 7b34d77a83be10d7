#include "dpv/validation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "dpv/config.hpp"
#include "dpv/error.hpp"

namespace dpv {

void SyntheticConfig::validate() const {
  if (n_instances < 2) raise(errc::config_invalid, "synthetic.n_instances must be >= 2");
  if (F < 1) raise(errc::config_invalid, "synthetic.F must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    raise(errc::config_invalid, "synthetic.test_fraction must be in (0,1)");
  if (!(noise_sd >= 0.0)) raise(errc::config_invalid, "synthetic.noise_sd must be >= 0");
  if (feature_level_count < 1)
    raise(errc::config_invalid, "synthetic.feature_level_count must be >= 1");
  for (const PlantedDirection& p : planted_directions) {
    if (static_cast<int>(p.h.size()) != F)
      raise(errc::config_invalid, "synthetic.planted_directions: h must have length F");
    double norm_sq = 0.0;
    for (double v : p.h) norm_sq += v * v;
    if (std::abs(norm_sq - 1.0) > 1e-9)
      raise(errc::config_invalid, "synthetic.planted_directions: h must be unit-norm");
  }
}

SyntheticResult generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> level(0, cfg.feature_level_count - 1);
  std::bernoulli_distribution in_test(cfg.test_fraction);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr double kGrid = 1e-6;

  SyntheticResult res;
  res.dataset.F = cfg.F;
  res.dataset.instances.reserve(static_cast<std::size_t>(cfg.n_instances));
  res.true_effect.reserve(static_cast<std::size_t>(cfg.n_instances));

  int width = 1;
  for (std::int64_t v = cfg.n_instances; v >= 10 && width < 19; v /= 10) ++width;

  for (std::int64_t i = 0; i < cfg.n_instances; ++i) {
    Instance ins;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%0*lld", width, static_cast<long long>(i));
    ins.id = buf;
    ins.timestamp = i;
    ins.context.resize(static_cast<std::size_t>(cfg.F));
    for (int f = 0; f < cfg.F; ++f) ins.context[f] = static_cast<double>(level(rng));
    ins.arm = in_test(rng) ? Arm::Test : Arm::Control;

    double effect = 0.0;
    for (const PlantedDirection& p : cfg.planted_directions) {
      double proj = 0.0;
      for (int f = 0; f < cfg.F; ++f) proj += p.h[f] * ins.context[f];
      effect = p.effect_minus;
      if (quantize(proj, kGrid) == quantize(p.v0, kGrid)) {
        effect = p.effect_plus;
        break;  // first matching direction wins
      }
    }

    double mean = cfg.baseline_mean + (ins.arm == Arm::Test ? effect : 0.0);
    if (cfg.metric_model == MetricModel::Gaussian) {
      ins.metric = mean + cfg.noise_sd * noise(rng);
    } else {
      double p_click = std::clamp(mean, 0.0, 1.0);
      ins.metric = unit(rng) < p_click ? 1.0 : 0.0;
    }
    res.dataset.instances.push_back(std::move(ins));
    res.true_effect.push_back(effect);
  }

  if (res.dataset.arm_count(Arm::Test) == 0 || res.dataset.arm_count(Arm::Control) == 0)
    raise(errc::empty_arm, "synthetic draw left one arm empty; adjust test_fraction or n");
  res.dataset.refresh_feature_levels();
  return res;
}

std::array<std::vector<std::string>, 4> quartile_groups(
    const std::vector<std::pair<std::string, double>>& scores) {
  if (scores.size() < 4)
    raise(errc::too_few_instances, "quartile_groups needs at least 4 scores, got " +
                                       std::to_string(scores.size()));
  std::vector<double> sorted;
  sorted.reserve(scores.size());
  for (const auto& [id, v] : scores) sorted.push_back(v);
  std::sort(sorted.begin(), sorted.end());

  const auto n = sorted.size();
  auto rank = [&](double p) {
    auto idx = static_cast<std::size_t>(std::floor(p * static_cast<double>(n)));
    return sorted[std::min(idx, n - 1)];
  };
  double q1 = rank(0.25), q2 = rank(0.50), q3 = rank(0.75);

  std::array<std::vector<std::string>, 4> groups;
  for (const auto& [id, v] : scores) {
    int g = v < q1 ? 0 : v < q2 ? 1 : v < q3 ? 2 : 3;  // ties go up
    groups[static_cast<std::size_t>(g)].push_back(id);
  }
  return groups;
}

IncrementalMetric incremental_metric(const std::vector<std::string>& group,
                                     const ExperimentDataset& test_data,
                                     const EligibilityConfig& cfg) {
  std::unordered_map<std::string, const Instance*> by_id;
  by_id.reserve(test_data.instances.size());
  for (const Instance& ins : test_data.instances) by_id.emplace(ins.id, &ins);

  std::vector<double> yt, yc;
  for (const std::string& id : group) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      raise(errc::domain_error, "incremental_metric: unknown instance id " + id);
    (it->second->arm == Arm::Test ? yt : yc).push_back(it->second->metric);
  }
  IncrementalMetric m;
  ArmStats st = arm_stats(yt), sc = arm_stats(yc);
  m.n = group.size();
  m.n_test = st.n;
  m.n_control = sc.n;
  if (st.n >= 1 && sc.n >= 1) m.diff = st.mean - sc.mean;
  if (st.n >= 2 && sc.n >= 2)
    m.sd = std::sqrt(st.var / static_cast<double>(st.n) +
                     sc.var / static_cast<double>(sc.n));
  m.significant = is_eligible(st, sc, cfg);
  return m;
}

ValidationOutcome run_validation(const ExperimentDataset& train,
                                 const ExperimentDataset& test,
                                 const RunConfig& cfg) {
  train.validate();
  if (train.F != test.F)
    raise(errc::dimension_mismatch, "train and test feature counts differ");

  ValidationOutcome out;
  out.search = search_all(train, cfg.search);

  std::vector<Subpopulation> subpops;
  for (std::size_t r = 0; r < out.search.accepted.size(); ++r) {
    auto groups = enumerate_subpopulations(out.search.accepted[r].rep, train,
                                           cfg.quantization, static_cast<int>(r));
    auto eligible = filter_eligible(std::move(groups), cfg.eligibility);
    subpops.insert(subpops.end(), std::make_move_iterator(eligible.begin()),
                   std::make_move_iterator(eligible.end()));
  }
  subpops = dedupe(std::move(subpops));

  out.model.representations = out.search.accepted;
  out.model.subpops = std::move(subpops);
  out.model.quantization = cfg.quantization;
  out.model.level = cfg.eligibility.level;
  out.model.var_floor = cfg.eligibility.var_floor;
  out.model.seed = cfg.search.seed;
  out.model.F = train.F;

  out.scores = score_dataset(test, out.model);

  // Test metrics enter only from here on.
  auto groups = quartile_groups(out.scores);

  std::unordered_map<std::string, double> score_of;
  for (const auto& [id, v] : out.scores) score_of.emplace(id, v);

  QuartileReport& rep = out.report;
  rep.level = cfg.eligibility.level;
  rep.eligible_subpopulations = out.model.subpops.size();
  static const char* kLabels[4] = {"<Q1", "Q1-Q2", "Q2-Q3", ">Q3"};
  for (std::size_t g = 0; g < 4; ++g) {
    GroupReport& gr = rep.groups[g];
    gr.label = kLabels[g];
    gr.size = groups[g].size();
    double sum = 0.0;
    for (const std::string& id : groups[g]) sum += score_of.at(id);
    gr.mean_dpv = groups[g].empty() ? 0.0 : sum / static_cast<double>(groups[g].size());
    gr.incremental = incremental_metric(groups[g], test, cfg.eligibility);
  }

  std::vector<double> sorted;
  for (const auto& [id, v] : out.scores) sorted.push_back(v);
  std::sort(sorted.begin(), sorted.end());
  auto rank = [&](double p) {
    auto idx = static_cast<std::size_t>(std::floor(p * static_cast<double>(sorted.size())));
    return sorted[std::min(idx, sorted.size() - 1)];
  };
  rep.q1 = rank(0.25);
  rep.q2 = rank(0.50);
  rep.q3 = rank(0.75);

  // Global train comparison, reported alongside but never part of the model.
  std::vector<std::string> everyone;
  everyone.reserve(train.instances.size());
  for (const Instance& ins : train.instances) everyone.push_back(ins.id);
  rep.global = incremental_metric(everyone, train, cfg.eligibility);

  return out;
}

namespace {

nlohmann::ordered_json incremental_to_json(const IncrementalMetric& m) {
  nlohmann::ordered_json j;
  j["diff"] = m.diff ? nlohmann::ordered_json(*m.diff) : nlohmann::ordered_json(nullptr);
  j["sd"] = m.sd ? nlohmann::ordered_json(*m.sd) : nlohmann::ordered_json(nullptr);
  j["n"] = m.n;
  j["n_test"] = m.n_test;
  j["n_control"] = m.n_control;
  j["significant"] = m.significant;
  return j;
}

}  // namespace

nlohmann::ordered_json report_to_json(const QuartileReport& r) {
  nlohmann::ordered_json j;
  j["level"] = r.level;
  j["eligible_subpopulations"] = r.eligible_subpopulations;
  j["quartiles"] = {{"q1", r.q1}, {"q2", r.q2}, {"q3", r.q3}};
  j["groups"] = nlohmann::ordered_json::array();
  for (const GroupReport& g : r.groups) {
    nlohmann::ordered_json jg;
    jg["group"] = g.label;
    jg["size"] = g.size;
    jg["mean_dpv"] = g.mean_dpv;
    jg["incremental"] = incremental_to_json(g.incremental);
    j["groups"].push_back(std::move(jg));
  }
  j["global"] = incremental_to_json(r.global);
  return j;
}

std::string report_to_table(const QuartileReport& r,
                            const std::string& metric_name) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %-8s %10s %12s %12s %6s  %s\n", "metric",
                "group", "size", "diff", "sd", "n", "significant");
  os << line;
  auto row = [&](const std::string& label, const IncrementalMetric& m, std::size_t size) {
    char diff[32] = "n/a", sd[32] = "n/a";
    if (m.diff) std::snprintf(diff, sizeof(diff), "%.6g", *m.diff);
    if (m.sd) std::snprintf(sd, sizeof(sd), "%.6g", *m.sd);
    std::snprintf(line, sizeof(line), "%-10s %-8s %10zu %12s %12s %6zu  %s\n",
                  metric_name.c_str(), label.c_str(), size, diff, sd, m.n,
                  m.significant ? "yes" : "no");
    os << line;
  };
  for (const GroupReport& g : r.groups) row(g.label, g.incremental, g.size);
  row("global", r.global, r.global.n);
  return os.str();
}

}  // namespace dpv
