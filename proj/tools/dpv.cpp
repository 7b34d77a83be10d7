// Command-line pipeline: simulate -> discover -> score -> validate.
// Every command is a pure function of (input files, config, seed); artifacts
// embed the resolved config for provenance.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dpv/config.hpp"
#include "dpv/error.hpp"
#include "dpv/experiment_data.hpp"
#include "dpv/representation.hpp"
#include "dpv/stats.hpp"
#include "dpv/validation.hpp"
#include "dpv/valuation.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNoEligible = 3;

int exit_code_for(const dpv::Error& e) {
  switch (e.code()) {
    case dpv::errc::config_invalid:
    case dpv::errc::domain_error:
    case dpv::errc::dimension_mismatch:
    case dpv::errc::empty_split:
    case dpv::errc::too_few_instances:
      return kExitConfig;
    default:
      return kExitIo;
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) dpv::raise(dpv::errc::io_error, "cannot open output file " + path);
  return out;
}

dpv::ExperimentDataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) dpv::raise(dpv::errc::io_error, "cannot open input file " + path);
  return dpv::ingest_csv(in);
}

std::string config_comment(const dpv::RunConfig& cfg) {
  return "config: " + dpv::config_to_json(cfg).dump();
}

int cmd_simulate(const dpv::RunConfig& cfg, const std::string& out_path) {
  dpv::SyntheticResult res = dpv::generate_synthetic(cfg.synthetic);

  auto out = open_out(out_path);
  dpv::emit_csv(res.dataset, out, {}, config_comment(cfg));
  out.close();

  auto truth = open_out(out_path + ".truth.csv");
  truth << "# " << config_comment(cfg) << "\n";
  truth << "id,true_effect\n";
  char buf[64];
  for (std::size_t i = 0; i < res.dataset.instances.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", res.true_effect[i]);
    truth << res.dataset.instances[i].id << ',' << buf << '\n';
  }
  return kExitOk;
}

dpv::EligibleSet build_model(const dpv::ExperimentDataset& train,
                             const dpv::RunConfig& cfg,
                             dpv::SearchOutcome* search_out) {
  dpv::SearchOutcome search = dpv::search_all(train, cfg.search);
  std::vector<dpv::Subpopulation> subpops;
  for (std::size_t r = 0; r < search.accepted.size(); ++r) {
    auto groups = dpv::enumerate_subpopulations(search.accepted[r].rep, train,
                                                cfg.quantization, static_cast<int>(r));
    auto eligible = dpv::filter_eligible(std::move(groups), cfg.eligibility);
    for (auto& s : eligible) subpops.push_back(std::move(s));
  }
  subpops = dpv::dedupe(std::move(subpops));

  dpv::EligibleSet model;
  model.representations = search.accepted;
  model.subpops = std::move(subpops);
  model.quantization = cfg.quantization;
  model.level = cfg.eligibility.level;
  model.var_floor = cfg.eligibility.var_floor;
  model.seed = cfg.search.seed;
  model.F = train.F;
  if (search_out) *search_out = std::move(search);
  return model;
}

int cmd_discover(const std::string& data_path, const dpv::RunConfig& cfg,
                 const std::string& model_path) {
  dpv::ExperimentDataset data = read_dataset(data_path);
  auto disc = dpv::discretize(data, cfg.discretization);
  for (const std::string& w : disc.warnings) std::cerr << "warning: " << w << '\n';
  auto [train, test] = dpv::chronological_split(disc.dataset, cfg.train_fraction);

  dpv::SearchOutcome search;
  dpv::EligibleSet model = build_model(train, cfg, &search);

  nlohmann::ordered_json jm = dpv::model_to_json(model);
  jm["config"] = dpv::config_to_json(cfg);
  open_out(model_path) << jm.dump(2) << '\n';

  nlohmann::ordered_json log;
  log["pair_count"] = search.pair_count;
  log["max_ortho_error"] = search.max_ortho_error;
  log["accepted"] = nlohmann::ordered_json::array();
  for (const auto& a : search.accepted)
    log["accepted"].push_back({{"order_index", a.order_index},
                               {"K", a.rep.K()},
                               {"objective", a.objective}});
  log["eligible_subpopulations"] = model.subpops.size();
  log["config"] = dpv::config_to_json(cfg);
  open_out(model_path + ".log.json") << log.dump(2) << '\n';

  if (model.subpops.empty()) {
    std::cerr << "no eligible subpopulations found\n";
    return kExitNoEligible;
  }
  std::cout << "accepted " << search.accepted.size() << " representations, "
            << model.subpops.size() << " eligible subpopulations\n";
  return kExitOk;
}

int cmd_score(const std::string& data_path, const std::string& model_path,
              const std::string& out_path) {
  std::ifstream min(model_path, std::ios::binary);
  if (!min) dpv::raise(dpv::errc::io_error, "cannot open model file " + model_path);
  nlohmann::json jm;
  try {
    min >> jm;
  } catch (const nlohmann::json::exception& e) {
    dpv::raise(dpv::errc::io_error, "model " + model_path + ": " + e.what());
  }
  dpv::EligibleSet model = dpv::model_from_json(jm);

  dpv::ExperimentDataset data = read_dataset(data_path);
  auto scores = dpv::score_dataset(data, model);

  auto out = open_out(out_path);
  if (jm.contains("config"))
    out << "# config: " << nlohmann::ordered_json(jm["config"]).dump() << '\n';
  out << "id,dpv\n";
  char buf[64];
  for (const auto& [id, v] : scores) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << id << ',' << buf << '\n';
  }
  return kExitOk;
}

int cmd_validate(const std::string& data_path, const dpv::RunConfig& cfg,
                 const std::string& out_path) {
  dpv::ExperimentDataset data = read_dataset(data_path);
  auto disc = dpv::discretize(data, cfg.discretization);
  for (const std::string& w : disc.warnings) std::cerr << "warning: " << w << '\n';
  auto [train, test] = dpv::chronological_split(disc.dataset, cfg.train_fraction);

  dpv::ValidationOutcome vo = dpv::run_validation(train, test, cfg);

  nlohmann::ordered_json j = dpv::report_to_json(vo.report);
  j["max_ortho_error"] = vo.search.max_ortho_error;
  j["config"] = dpv::config_to_json(cfg);
  open_out(out_path) << j.dump(2) << '\n';

  std::cout << dpv::report_to_table(vo.report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"subpopulation discovery and personal-valuation pipeline"};
  app.require_subcommand(1);

  std::string config_path, input_path, model_path, out_path;
  std::optional<std::uint64_t> seed_override;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config)
      sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--seed", seed_override, "overrides the config seeds");
  };

  CLI::App* sim = app.add_subcommand("simulate", "write a synthetic experiment CSV");
  add_common(sim, true);
  sim->add_option("--out", out_path, "output CSV path")->required();

  CLI::App* disc = app.add_subcommand("discover", "find eligible subpopulations");
  add_common(disc, true);
  disc->add_option("--input", input_path, "experiment CSV")->required();
  disc->add_option("--model", model_path, "model JSON output")->required();

  CLI::App* score = app.add_subcommand("score", "compute DPV for each instance");
  add_common(score, false);
  score->add_option("--input", input_path, "experiment CSV")->required();
  score->add_option("--model", model_path, "model JSON")->required();
  score->add_option("--out", out_path, "scores CSV output")->required();

  CLI::App* val = app.add_subcommand("validate", "run the quartile validation");
  add_common(val, true);
  val->add_option("--input", input_path, "experiment CSV")->required();
  val->add_option("--out", out_path, "report JSON output")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    dpv::RunConfig cfg;
    if (!config_path.empty()) cfg = dpv::load_config(config_path);
    if (seed_override) {
      cfg.search.seed = *seed_override;
      cfg.synthetic.seed = *seed_override;
    }

    if (sim->parsed()) return cmd_simulate(cfg, out_path);
    if (disc->parsed()) return cmd_discover(input_path, cfg, model_path);
    if (score->parsed()) return cmd_score(input_path, model_path, out_path);
    if (val->parsed()) return cmd_validate(input_path, cfg, out_path);
  } catch (const dpv::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitOk;
}
