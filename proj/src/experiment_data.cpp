#include "dpv/experiment_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "dpv/error.hpp"

namespace dpv {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) raise(errc::unparsable_row, "trailing characters in numeric field at line " + std::to_string(line_no));
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    raise(errc::unparsable_row, "cannot parse '" + s + "' as a number at line " + std::to_string(line_no));
  }
}

Arm parse_arm(std::string s, std::size_t line_no) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "t" || s == "test") return Arm::Test;
  if (s == "c" || s == "control") return Arm::Control;
  raise(errc::unparsable_row, "unknown arm '" + s + "' at line " + std::to_string(line_no));
}

}  // namespace

std::size_t ExperimentDataset::arm_count(Arm a) const {
  return static_cast<std::size_t>(std::count_if(
      instances.begin(), instances.end(),
      [a](const Instance& i) { return i.arm == a; }));
}

void ExperimentDataset::refresh_feature_levels() {
  feature_levels.assign(static_cast<std::size_t>(F), {});
  std::vector<std::set<double>> levels(static_cast<std::size_t>(F));
  for (const Instance& ins : instances)
    for (int j = 0; j < F; ++j) levels[j].insert(ins.context[j]);
  for (int j = 0; j < F; ++j)
    feature_levels[j].assign(levels[j].begin(), levels[j].end());
}

void ExperimentDataset::validate() const {
  for (const Instance& ins : instances) {
    if (static_cast<int>(ins.context.size()) != F)
      raise(errc::dimension_mismatch, "instance " + ins.id + " has context length " +
                                          std::to_string(ins.context.size()) + ", expected " + std::to_string(F));
    if (!std::isfinite(ins.metric))
      raise(errc::non_finite_metric, "instance " + ins.id + " has a non-finite metric");
  }
  for (std::size_t i = 1; i < instances.size(); ++i)
    if (instances[i - 1].timestamp > instances[i].timestamp)
      raise(errc::domain_error, "instances not sorted by timestamp");
  if (arm_count(Arm::Test) == 0 || arm_count(Arm::Control) == 0)
    raise(errc::empty_arm, "test and control subsets must both be non-empty");
}

ExperimentDataset ingest_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  std::size_t line_no = 0;

  // header (skipping '#' comment lines)
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line[0] == '#') continue;
    if (line.empty()) continue;
    header = split_csv_line(line);
    break;
  }
  if (header.empty()) raise(errc::unparsable_row, "empty CSV input");

  std::unordered_map<std::string, int> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = static_cast<int>(i);

  auto require = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) raise(errc::missing_column, "missing column '" + name + "'");
    return it->second;
  };
  int id_col = require(schema.id);
  int ts_col = require(schema.timestamp);
  int arm_col = require(schema.arm);
  int metric_col = require(schema.metric);

  std::vector<int> feature_cols;
  if (schema.features.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      int c = static_cast<int>(i);
      if (c != id_col && c != ts_col && c != arm_col && c != metric_col)
        feature_cols.push_back(c);
    }
  } else {
    for (const std::string& f : schema.features) feature_cols.push_back(require(f));
  }
  if (feature_cols.empty()) raise(errc::missing_column, "no feature columns");

  ExperimentDataset ds;
  ds.F = static_cast<int>(feature_cols.size());

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      raise(errc::unparsable_row, "expected " + std::to_string(header.size()) + " fields, got " +
                                      std::to_string(fields.size()) + " at line " + std::to_string(line_no));
    Instance ins;
    ins.id = fields[id_col];
    try {
      ins.timestamp = std::stoll(fields[ts_col]);
    } catch (const std::exception&) {
      raise(errc::unparsable_row, "bad timestamp at line " + std::to_string(line_no));
    }
    ins.arm = parse_arm(fields[arm_col], line_no);
    ins.metric = parse_double(fields[metric_col], line_no);
    if (!std::isfinite(ins.metric))
      raise(errc::non_finite_metric, "non-finite metric at line " + std::to_string(line_no));
    ins.context.reserve(feature_cols.size());
    for (int fc : feature_cols) {
      double v = parse_double(fields[fc], line_no);
      if (!std::isfinite(v))
        raise(errc::unparsable_row, "non-finite feature value at line " + std::to_string(line_no));
      ins.context.push_back(v);
    }
    ds.instances.push_back(std::move(ins));
  }

  std::stable_sort(ds.instances.begin(), ds.instances.end(),
                   [](const Instance& a, const Instance& b) { return a.timestamp < b.timestamp; });
  if (ds.arm_count(Arm::Test) == 0 || ds.arm_count(Arm::Control) == 0)
    raise(errc::empty_arm, "test and control subsets must both be non-empty");
  ds.refresh_feature_levels();
  return ds;
}

void emit_csv(const ExperimentDataset& d, std::ostream& out,
              const CsvSchema& schema, const std::string& header_comment) {
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << schema.id << ',' << schema.timestamp << ',' << schema.arm << ',' << schema.metric;
  if (schema.features.empty()) {
    for (int j = 1; j <= d.F; ++j) out << ",f" << j;
  } else {
    for (const std::string& f : schema.features) out << ',' << f;
  }
  out << '\n';
  for (const Instance& ins : d.instances) {
    out << ins.id << ',' << ins.timestamp << ','
        << (ins.arm == Arm::Test ? 'T' : 'C') << ',' << format_double(ins.metric);
    for (double v : ins.context) out << ',' << format_double(v);
    out << '\n';
  }
}

void DiscretizationConfig::validate(int F) const {
  if (!rules.empty() && static_cast<int>(rules.size()) != F)
    raise(errc::config_invalid, "discretization.rules: expected " + std::to_string(F) + " rules, got " +
                                    std::to_string(rules.size()));
  for (const FeatureRule& r : rules) {
    if (const auto* e = std::get_if<EqualWidthBins>(&r); e && e->count < 1)
      raise(errc::config_invalid, "discretization: bin count must be >= 1");
    if (const auto* q = std::get_if<QuantileBins>(&r); q && q->count < 1)
      raise(errc::config_invalid, "discretization: bin count must be >= 1");
    if (const auto* m = std::get_if<MergeBelowCount>(&r); m && m->min_count < 1)
      raise(errc::config_invalid, "discretization: min_count must be >= 1");
  }
}

namespace {

// Maps every observed value of one feature column to its bin representative.
std::map<double, double> build_value_map(const std::vector<double>& column,
                                         const FeatureRule& rule, int feature,
                                         std::vector<std::string>& warnings) {
  std::map<double, std::int64_t> counts;
  for (double v : column) ++counts[v];
  std::map<double, double> out;

  auto degenerate = [&](int wanted) {
    if (counts.size() == 1 && wanted > 1)
      warnings.push_back("feature " + std::to_string(feature + 1) +
                         " is constant; requested " + std::to_string(wanted) +
                         " bins, produced 1 level");
  };

  if (std::holds_alternative<Passthrough>(rule)) {
    for (auto& [v, c] : counts) out[v] = v;
  } else if (const auto* ew = std::get_if<EqualWidthBins>(&rule)) {
    degenerate(ew->count);
    double lo = counts.begin()->first;
    double hi = counts.rbegin()->first;
    if (lo == hi || ew->count == 1) {
      for (auto& [v, c] : counts) out[v] = lo;
    } else {
      double width = (hi - lo) / ew->count;
      for (auto& [v, c] : counts) {
        auto b = static_cast<std::int64_t>(std::floor((v - lo) / width));
        b = std::clamp<std::int64_t>(b, 0, ew->count - 1);
        out[v] = lo + static_cast<double>(b) * width;
      }
    }
  } else if (const auto* qb = std::get_if<QuantileBins>(&rule)) {
    degenerate(qb->count);
    std::vector<double> sorted(column);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> edges;  // lower edges, ascending, distinct
    for (int i = 0; i < qb->count; ++i) {
      auto idx = static_cast<std::size_t>(
          std::floor(static_cast<double>(i) * static_cast<double>(sorted.size()) / qb->count));
      double e = sorted[std::min(idx, sorted.size() - 1)];
      if (edges.empty() || e > edges.back()) edges.push_back(e);
    }
    for (auto& [v, c] : counts) {
      auto it = std::upper_bound(edges.begin(), edges.end(), v);
      out[v] = *(it == edges.begin() ? it : std::prev(it));
    }
  } else {
    const auto& mb = std::get<MergeBelowCount>(rule);
    // Ascending greedy merge: accumulate consecutive values until the
    // grouped count reaches min_count; an undersized tail joins the
    // previous group.
    std::vector<std::pair<double, std::vector<double>>> groups;  // rep -> members
    std::int64_t acc = 0;
    std::vector<double> members;
    double rep = 0.0;
    for (auto& [v, c] : counts) {
      if (members.empty()) rep = v;
      members.push_back(v);
      acc += c;
      if (acc >= mb.min_count) {
        groups.emplace_back(rep, members);
        members.clear();
        acc = 0;
      }
    }
    if (!members.empty()) {
      if (groups.empty()) {
        groups.emplace_back(rep, members);
      } else {
        auto& last = groups.back().second;
        last.insert(last.end(), members.begin(), members.end());
      }
    }
    for (auto& [r, mem] : groups)
      for (double v : mem) out[v] = r;
  }
  return out;
}

}  // namespace

DiscretizeResult discretize(const ExperimentDataset& d,
                            const DiscretizationConfig& cfg) {
  if (d.instances.empty()) raise(errc::domain_error, "discretize: empty dataset");
  cfg.validate(d.F);

  DiscretizeResult res;
  res.dataset = d;
  if (cfg.rules.empty()) {
    res.dataset.refresh_feature_levels();
    return res;
  }

  for (int j = 0; j < d.F; ++j) {
    if (std::holds_alternative<Passthrough>(cfg.rules[j])) continue;
    std::vector<double> column;
    column.reserve(d.instances.size());
    for (const Instance& ins : d.instances) column.push_back(ins.context[j]);
    auto vmap = build_value_map(column, cfg.rules[j], j, res.warnings);
    for (Instance& ins : res.dataset.instances) ins.context[j] = vmap.at(ins.context[j]);
  }
  res.dataset.refresh_feature_levels();
  return res;
}

std::pair<ExperimentDataset, ExperimentDataset> chronological_split(
    const ExperimentDataset& d, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    raise(errc::config_invalid, "train_fraction must be in (0,1)");
  auto n = d.instances.size();
  auto n_train = static_cast<std::size_t>(
      std::ceil(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n)
    raise(errc::empty_split, "split would leave an empty side (" + std::to_string(n_train) + " of " +
                                 std::to_string(n) + " in train)");
  ExperimentDataset train, test;
  train.F = test.F = d.F;
  train.instances.assign(d.instances.begin(), d.instances.begin() + static_cast<std::ptrdiff_t>(n_train));
  test.instances.assign(d.instances.begin() + static_cast<std::ptrdiff_t>(n_train), d.instances.end());
  train.refresh_feature_levels();
  test.refresh_feature_levels();
  return {std::move(train), std::move(test)};
}

nlohmann::ordered_json dataset_to_json(const ExperimentDataset& d) {
  nlohmann::ordered_json j;
  j["F"] = d.F;
  j["instances"] = nlohmann::ordered_json::array();
  for (const Instance& ins : d.instances) {
    nlohmann::ordered_json ji;
    ji["id"] = ins.id;
    ji["ts"] = ins.timestamp;
    ji["arm"] = ins.arm == Arm::Test ? "T" : "C";
    ji["y"] = ins.metric;
    ji["x"] = ins.context;
    j["instances"].push_back(std::move(ji));
  }
  j["feature_levels"] = d.feature_levels;
  return j;
}

ExperimentDataset dataset_from_json(const nlohmann::json& j) {
  ExperimentDataset d;
  d.F = j.at("F").get<int>();
  for (const auto& ji : j.at("instances")) {
    Instance ins;
    ins.id = ji.at("id").get<std::string>();
    ins.timestamp = ji.at("ts").get<std::int64_t>();
    ins.arm = ji.at("arm").get<std::string>() == "T" ? Arm::Test : Arm::Control;
    ins.metric = ji.at("y").get<double>();
    ins.context = ji.at("x").get<std::vector<double>>();
    d.instances.push_back(std::move(ins));
  }
  d.feature_levels = j.at("feature_levels").get<std::vector<std::vector<double>>>();
  d.validate();
  return d;
}

}  // namespace dpv
