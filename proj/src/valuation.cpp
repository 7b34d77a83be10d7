#include "dpv/valuation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "dpv/error.hpp"

namespace dpv {

double quantize(double value, double grid) {
  double q = std::round(value / grid) * grid;
  return q == 0.0 ? 0.0 : q;  // normalize -0.0
}

namespace {

void fill_group_stats(Subpopulation& s, const ExperimentDataset& dataset,
                      const std::vector<std::size_t>& members) {
  std::vector<double> yt, yc;
  for (std::size_t i : members) {
    const Instance& ins = dataset.instances[i];
    s.member_ids.push_back(ins.id);
    (ins.arm == Arm::Test ? yt : yc).push_back(ins.metric);
  }
  s.stats_test = arm_stats(yt);
  s.stats_control = arm_stats(yc);
  if (s.stats_test.n >= 1 && s.stats_control.n >= 1)
    s.effect = s.stats_test.mean - s.stats_control.mean;
  if (s.stats_test.n >= 2 && s.stats_control.n >= 2)
    s.volatility = std::sqrt(s.stats_test.var / static_cast<double>(s.stats_test.n) +
                             s.stats_control.var / static_cast<double>(s.stats_control.n));
}

std::vector<double> quantized_key(const Representation& H,
                                  const std::vector<double>& context,
                                  double quantization) {
  Eigen::Map<const Eigen::VectorXd> x(context.data(),
                                      static_cast<Eigen::Index>(context.size()));
  Eigen::VectorXd hx = H.H * x;
  std::vector<double> key(static_cast<std::size_t>(hx.size()));
  for (Eigen::Index i = 0; i < hx.size(); ++i)
    key[static_cast<std::size_t>(i)] = quantize(hx(i), quantization);
  return key;
}

}  // namespace

std::vector<Subpopulation> enumerate_subpopulations(
    const Representation& H, const ExperimentDataset& dataset,
    double quantization, int rep_index) {
  if (!(quantization > 0.0))
    raise(errc::domain_error, "enumerate_subpopulations: quantization must be > 0");
  if (H.F() != dataset.F)
    raise(errc::dimension_mismatch, "representation has F=" + std::to_string(H.F()) +
                                        ", dataset has F=" + std::to_string(dataset.F));

  std::map<std::vector<double>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < dataset.instances.size(); ++i)
    groups[quantized_key(H, dataset.instances[i].context, quantization)].push_back(i);

  std::vector<Subpopulation> out;
  out.reserve(groups.size());
  for (const auto& [key, members] : groups) {
    Subpopulation s;
    s.rep_index = rep_index;
    s.v = key;
    fill_group_stats(s, dataset, members);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Subpopulation> filter_eligible(std::vector<Subpopulation> groups,
                                           const EligibilityConfig& cfg) {
  cfg.validate();
  std::vector<Subpopulation> out;
  for (Subpopulation& s : groups) {
    if (!is_eligible(s.stats_test, s.stats_control, cfg)) continue;
    s.eligible = true;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Subpopulation> dedupe(std::vector<Subpopulation> subpops) {
  std::set<std::vector<std::string>> seen;
  std::vector<Subpopulation> out;
  for (Subpopulation& s : subpops) {
    std::vector<std::string> key = s.member_ids;
    std::sort(key.begin(), key.end());
    if (seen.insert(std::move(key)).second) out.push_back(std::move(s));
  }
  return out;
}

std::vector<double> dpv_weights(const Eigen::VectorXd& x,
                                const EligibleSet& model) {
  if (static_cast<int>(x.size()) != model.F)
    raise(errc::dimension_mismatch, "context has length " + std::to_string(x.size()) +
                                        ", model expects " + std::to_string(model.F));

  // quantized H x per representation, computed once
  std::vector<std::vector<double>> keys(model.representations.size());
  std::vector<bool> key_done(model.representations.size(), false);

  std::vector<double> w(model.subpops.size(), 0.0);
  double total = 0.0;
  for (std::size_t s = 0; s < model.subpops.size(); ++s) {
    const Subpopulation& sub = model.subpops[s];
    auto r = static_cast<std::size_t>(sub.rep_index);
    if (!key_done[r]) {
      std::vector<double> ctx(x.data(), x.data() + x.size());
      keys[r] = quantized_key(model.representations[r].rep, ctx, model.quantization);
      key_done[r] = true;
    }
    if (keys[r] != sub.v) continue;
    double sigma = std::max(sub.volatility, std::sqrt(model.var_floor));
    w[s] = 1.0 / (sigma * std::sqrt(static_cast<double>(sub.total_count())));
    total += w[s];
  }
  if (total > 0.0)
    for (double& v : w) v /= total;
  return w;
}

double dpv(const Eigen::VectorXd& x, const EligibleSet& model) {
  std::vector<double> w = dpv_weights(x, model);
  double v = 0.0;
  for (std::size_t s = 0; s < w.size(); ++s)
    if (w[s] > 0.0) v += w[s] * model.subpops[s].effect;
  return v;
}

std::vector<std::pair<std::string, double>> score_dataset(
    const ExperimentDataset& test, const EligibleSet& model) {
  if (test.F != model.F)
    raise(errc::dimension_mismatch, "dataset has F=" + std::to_string(test.F) +
                                        ", model expects F=" + std::to_string(model.F));
  std::vector<std::pair<std::string, double>> out;
  out.reserve(test.instances.size());
  for (const Instance& ins : test.instances) {
    Eigen::Map<const Eigen::VectorXd> x(ins.context.data(),
                                        static_cast<Eigen::Index>(ins.context.size()));
    out.emplace_back(ins.id, dpv(x, model));
  }
  return out;
}

nlohmann::ordered_json model_to_json(const EligibleSet& model) {
  nlohmann::ordered_json j;
  j["level"] = model.level;
  j["quantization"] = model.quantization;
  j["var_floor"] = model.var_floor;
  j["seed"] = model.seed;
  j["F"] = model.F;
  j["representations"] = nlohmann::ordered_json::array();
  for (const AcceptedRepresentation& r : model.representations) {
    nlohmann::ordered_json jr;
    jr["K"] = r.rep.K();
    jr["F"] = r.rep.F();
    std::vector<double> rows;
    rows.reserve(static_cast<std::size_t>(r.rep.H.size()));
    for (int i = 0; i < r.rep.K(); ++i)
      for (int f = 0; f < r.rep.F(); ++f) rows.push_back(r.rep.H(i, f));
    jr["rows"] = rows;
    jr["objective"] = r.objective;
    jr["order_index"] = r.order_index;
    jr["seed"] = model.seed;
    j["representations"].push_back(std::move(jr));
  }
  j["subpops"] = nlohmann::ordered_json::array();
  for (const Subpopulation& s : model.subpops) {
    nlohmann::ordered_json js;
    js["rep_index"] = s.rep_index;
    js["v"] = s.v;
    js["n_T"] = s.stats_test.n;
    js["n_C"] = s.stats_control.n;
    js["mean_T"] = s.stats_test.mean;
    js["mean_C"] = s.stats_control.mean;
    js["var_T"] = s.stats_test.var;
    js["var_C"] = s.stats_control.var;
    js["effect"] = s.effect;
    js["volatility"] = s.volatility;
    j["subpops"].push_back(std::move(js));
  }
  return j;
}

EligibleSet model_from_json(const nlohmann::json& j) {
  EligibleSet m;
  m.level = j.at("level").get<double>();
  m.quantization = j.at("quantization").get<double>();
  m.var_floor = j.at("var_floor").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.F = j.at("F").get<int>();
  for (const auto& jr : j.at("representations")) {
    AcceptedRepresentation r;
    int K = jr.at("K").get<int>();
    int F = jr.at("F").get<int>();
    auto rows = jr.at("rows").get<std::vector<double>>();
    if (static_cast<int>(rows.size()) != K * F)
      raise(errc::io_error, "model representation has wrong row length");
    r.rep.H.resize(K, F);
    for (int i = 0; i < K; ++i)
      for (int f = 0; f < F; ++f) r.rep.H(i, f) = rows[static_cast<std::size_t>(i) * F + f];
    r.objective = jr.at("objective").get<std::int64_t>();
    r.order_index = jr.at("order_index").get<int>();
    m.representations.push_back(std::move(r));
  }
  for (const auto& js : j.at("subpops")) {
    Subpopulation s;
    s.rep_index = js.at("rep_index").get<int>();
    s.v = js.at("v").get<std::vector<double>>();
    s.stats_test.n = js.at("n_T").get<std::int64_t>();
    s.stats_control.n = js.at("n_C").get<std::int64_t>();
    s.stats_test.mean = js.at("mean_T").get<double>();
    s.stats_control.mean = js.at("mean_C").get<double>();
    s.stats_test.var = js.at("var_T").get<double>();
    s.stats_control.var = js.at("var_C").get<double>();
    s.effect = js.at("effect").get<double>();
    s.volatility = js.at("volatility").get<double>();
    s.eligible = true;
    if (s.rep_index < 0 || s.rep_index >= static_cast<int>(m.representations.size()))
      raise(errc::io_error, "model subpopulation points at a missing representation");
    m.subpops.push_back(std::move(s));
  }
  return m;
}

}  // namespace dpv
