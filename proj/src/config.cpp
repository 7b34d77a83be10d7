#include "dpv/config.hpp"

#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "dpv/error.hpp"

namespace dpv {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!known.contains(key))
      raise(errc::config_invalid, "unknown key '" + key + "' in " + where);
}

FeatureRule rule_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"type", "count", "min_count"}, "discretization rule");
  std::string type = j.at("type").get<std::string>();
  if (type == "passthrough") return Passthrough{};
  if (type == "equal_width") return EqualWidthBins{j.at("count").get<int>()};
  if (type == "quantile") return QuantileBins{j.at("count").get<int>()};
  if (type == "merge_below_count")
    return MergeBelowCount{j.at("min_count").get<std::int64_t>()};
  raise(errc::config_invalid, "unknown discretization rule type '" + type + "'");
}

nlohmann::ordered_json rule_to_json(const FeatureRule& r) {
  nlohmann::ordered_json j;
  if (std::holds_alternative<Passthrough>(r)) {
    j["type"] = "passthrough";
  } else if (const auto* e = std::get_if<EqualWidthBins>(&r)) {
    j["type"] = "equal_width";
    j["count"] = e->count;
  } else if (const auto* q = std::get_if<QuantileBins>(&r)) {
    j["type"] = "quantile";
    j["count"] = q->count;
  } else {
    j["type"] = "merge_below_count";
    j["min_count"] = std::get<MergeBelowCount>(r).min_count;
  }
  return j;
}

}  // namespace

void RunConfig::validate() const {
  eligibility.validate();
  synthetic.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    raise(errc::config_invalid, "train_fraction must be in (0,1)");
  if (!(quantization > 0.0))
    raise(errc::config_invalid, "quantization must be > 0");
  // search.K_values depend on the dataset's F; checked in search_all.
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  reject_unknown(j, {"discretization", "eligibility", "search", "synthetic",
                     "train_fraction", "quantization"}, "config");

  if (j.contains("train_fraction")) cfg.train_fraction = j["train_fraction"].get<double>();
  if (j.contains("quantization")) cfg.quantization = j["quantization"].get<double>();

  if (j.contains("discretization")) {
    const auto& jd = j["discretization"];
    reject_unknown(jd, {"rules"}, "discretization");
    if (jd.contains("rules"))
      for (const auto& jr : jd["rules"]) cfg.discretization.rules.push_back(rule_from_json(jr));
  }

  if (j.contains("eligibility")) {
    const auto& je = j["eligibility"];
    reject_unknown(je, {"level", "n_min", "var_floor"}, "eligibility");
    if (je.contains("level")) cfg.eligibility.level = je["level"].get<double>();
    if (je.contains("n_min")) cfg.eligibility.n_min = je["n_min"].get<std::int64_t>();
    if (je.contains("var_floor")) cfg.eligibility.var_floor = je["var_floor"].get<double>();
  }

  if (j.contains("search")) {
    const auto& js = j["search"];
    reject_unknown(js,
                   {"K_values", "D", "epsilon", "theta", "gamma", "mu", "max_iters",
                    "max_matrices", "min_objective_fraction", "pair_cap",
                    "objective_tol", "seed"},
                   "search");
    auto& s = cfg.search;
    if (js.contains("K_values")) s.K_values = js["K_values"].get<std::vector<int>>();
    if (js.contains("D")) s.D = js["D"].get<double>();
    if (js.contains("epsilon")) s.epsilon = js["epsilon"].get<double>();
    if (js.contains("theta")) s.theta = js["theta"].get<double>();
    if (js.contains("gamma")) s.gamma = js["gamma"].get<double>();
    if (js.contains("mu")) s.mu = js["mu"].get<double>();
    if (js.contains("max_iters")) s.max_iters = js["max_iters"].get<int>();
    if (js.contains("max_matrices")) s.max_matrices = js["max_matrices"].get<int>();
    if (js.contains("min_objective_fraction"))
      s.min_objective_fraction = js["min_objective_fraction"].get<double>();
    if (js.contains("pair_cap")) s.pair_cap = js["pair_cap"].get<std::uint64_t>();
    if (js.contains("objective_tol")) s.objective_tol = js["objective_tol"].get<double>();
    if (js.contains("seed")) s.seed = js["seed"].get<std::uint64_t>();
  }

  if (j.contains("synthetic")) {
    const auto& jy = j["synthetic"];
    reject_unknown(jy,
                   {"n_instances", "F", "test_fraction", "noise_sd",
                    "planted_directions", "baseline_mean", "feature_level_count",
                    "seed", "metric_model"},
                   "synthetic");
    auto& y = cfg.synthetic;
    if (jy.contains("n_instances")) y.n_instances = jy["n_instances"].get<std::int64_t>();
    if (jy.contains("F")) y.F = jy["F"].get<int>();
    if (jy.contains("test_fraction")) y.test_fraction = jy["test_fraction"].get<double>();
    if (jy.contains("noise_sd")) y.noise_sd = jy["noise_sd"].get<double>();
    if (jy.contains("baseline_mean")) y.baseline_mean = jy["baseline_mean"].get<double>();
    if (jy.contains("feature_level_count"))
      y.feature_level_count = jy["feature_level_count"].get<int>();
    if (jy.contains("seed")) y.seed = jy["seed"].get<std::uint64_t>();
    if (jy.contains("metric_model")) {
      std::string m = jy["metric_model"].get<std::string>();
      if (m == "gaussian") y.metric_model = MetricModel::Gaussian;
      else if (m == "bernoulli") y.metric_model = MetricModel::Bernoulli;
      else raise(errc::config_invalid, "synthetic.metric_model must be 'gaussian' or 'bernoulli'");
    }
    if (jy.contains("planted_directions")) {
      for (const auto& jp : jy["planted_directions"]) {
        reject_unknown(jp, {"h", "v0", "effect_plus", "effect_minus"}, "planted direction");
        PlantedDirection p;
        p.h = jp.at("h").get<std::vector<double>>();
        p.v0 = jp.at("v0").get<double>();
        p.effect_plus = jp.at("effect_plus").get<double>();
        p.effect_minus = jp.at("effect_minus").get<double>();
        y.planted_directions.push_back(std::move(p));
      }
    }
  }

  cfg.validate();
  return cfg;
}

nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["train_fraction"] = cfg.train_fraction;
  j["quantization"] = cfg.quantization;

  j["discretization"]["rules"] = nlohmann::ordered_json::array();
  for (const FeatureRule& r : cfg.discretization.rules)
    j["discretization"]["rules"].push_back(rule_to_json(r));

  j["eligibility"] = {{"level", cfg.eligibility.level},
                      {"n_min", cfg.eligibility.n_min},
                      {"var_floor", cfg.eligibility.var_floor}};

  j["search"] = {{"K_values", cfg.search.K_values},
                 {"D", cfg.search.D},
                 {"epsilon", cfg.search.epsilon},
                 {"theta", cfg.search.theta},
                 {"gamma", cfg.search.gamma},
                 {"mu", cfg.search.mu},
                 {"max_iters", cfg.search.max_iters},
                 {"max_matrices", cfg.search.max_matrices},
                 {"min_objective_fraction", cfg.search.min_objective_fraction},
                 {"pair_cap", cfg.search.pair_cap},
                 {"objective_tol", cfg.search.objective_tol},
                 {"seed", cfg.search.seed}};

  nlohmann::ordered_json jy;
  jy["n_instances"] = cfg.synthetic.n_instances;
  jy["F"] = cfg.synthetic.F;
  jy["test_fraction"] = cfg.synthetic.test_fraction;
  jy["noise_sd"] = cfg.synthetic.noise_sd;
  jy["baseline_mean"] = cfg.synthetic.baseline_mean;
  jy["feature_level_count"] = cfg.synthetic.feature_level_count;
  jy["seed"] = cfg.synthetic.seed;
  jy["metric_model"] =
      cfg.synthetic.metric_model == MetricModel::Gaussian ? "gaussian" : "bernoulli";
  jy["planted_directions"] = nlohmann::ordered_json::array();
  for (const PlantedDirection& p : cfg.synthetic.planted_directions)
    jy["planted_directions"].push_back({{"h", p.h},
                                        {"v0", p.v0},
                                        {"effect_plus", p.effect_plus},
                                        {"effect_minus", p.effect_minus}});
  j["synthetic"] = std::move(jy);
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(errc::io_error, "cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(errc::config_invalid, "config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace dpv
