#include "dpv/representation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include "dpv/error.hpp"

namespace dpv {

namespace {

constexpr double kZeroGradTol = 1e-14;
constexpr double kRankTol = 1e-10;
constexpr double kStallEpsilon = 1e-13;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

double Representation::orthonormality_error() const {
  Eigen::MatrixXd G = H * H.transpose();
  G.diagonal().array() -= 1.0;
  return G.cwiseAbs().maxCoeff();
}

void SearchConfig::validate(int F) const {
  if (K_values.empty()) raise(errc::config_invalid, "search.K_values must be non-empty");
  int prev = 0;
  for (int K : K_values) {
    if (K < 1 || K >= F)
      raise(errc::config_invalid, "search.K_values entries must satisfy 1 <= K < F (F=" + std::to_string(F) + ")");
    if (K <= prev) raise(errc::config_invalid, "search.K_values must be strictly ascending");
    prev = K;
  }
  if (!(D > 0.0)) raise(errc::config_invalid, "search.D must be > 0");
  if (!(epsilon > 0.0)) raise(errc::config_invalid, "search.epsilon must be > 0");
  if (!(theta > 0.0 && theta < 1.0)) raise(errc::config_invalid, "search.theta must be in (0,1)");
  if (!(gamma > 0.0)) raise(errc::config_invalid, "search.gamma must be > 0");
  if (max_iters < 1) raise(errc::config_invalid, "search.max_iters must be >= 1");
  if (max_matrices < 1) raise(errc::config_invalid, "search.max_matrices must be >= 1");
  if (!(min_objective_fraction > 0.0 && min_objective_fraction < 1.0))
    raise(errc::config_invalid, "search.min_objective_fraction must be in (0,1)");
  if (pair_cap < 1) raise(errc::config_invalid, "search.pair_cap must be >= 1");
  if (objective_tol < 0.0) raise(errc::config_invalid, "search.objective_tol must be >= 0");
}

PairMatrix build_pair_matrix(const ExperimentDataset& train,
                             std::uint64_t pair_cap, std::uint64_t seed) {
  std::vector<std::size_t> test_idx, control_idx;
  for (std::size_t i = 0; i < train.instances.size(); ++i)
    (train.instances[i].arm == Arm::Test ? test_idx : control_idx).push_back(i);
  if (test_idx.empty() || control_idx.empty())
    raise(errc::empty_arm, "pair matrix needs non-empty test and control arms");

  const std::uint64_t nt = test_idx.size();
  const std::uint64_t nc = control_idx.size();
  PairMatrix Z;
  Z.total_pairs = nt * nc;

  std::vector<std::uint64_t> picks;
  if (Z.total_pairs <= pair_cap) {
    picks.resize(Z.total_pairs);
    for (std::uint64_t k = 0; k < Z.total_pairs; ++k) picks[k] = k;
    Z.sampled = false;
  } else {
    // Floyd's algorithm: pair_cap distinct draws from [0, total_pairs)
    std::mt19937_64 rng(splitmix64(seed));
    std::set<std::uint64_t> chosen;
    for (std::uint64_t j = Z.total_pairs - pair_cap; j < Z.total_pairs; ++j) {
      std::uniform_int_distribution<std::uint64_t> dist(0, j);
      std::uint64_t r = dist(rng);
      if (!chosen.insert(r).second) chosen.insert(j);
    }
    picks.assign(chosen.begin(), chosen.end());
    Z.sampled = true;
  }

  Z.columns.resize(train.F, static_cast<Eigen::Index>(picks.size()));
  Z.pair_ids.reserve(picks.size());
  for (std::size_t c = 0; c < picks.size(); ++c) {
    const Instance& t = train.instances[test_idx[picks[c] / nc]];
    const Instance& u = train.instances[control_idx[picks[c] % nc]];
    for (int f = 0; f < train.F; ++f)
      Z.columns(f, static_cast<Eigen::Index>(c)) = t.context[f] - u.context[f];
    Z.pair_ids.emplace_back(t.id, u.id);
  }
  return Z;
}

std::int64_t objective_value(const Representation& H, const PairMatrix& Z,
                             double zero_tol) {
  if (zero_tol < 0.0) raise(errc::domain_error, "objective_value: zero_tol must be >= 0");
  Eigen::MatrixXd S = H.H * Z.columns;  // K x m
  std::int64_t count = 0;
  for (Eigen::Index k = 0; k < S.cols(); ++k)
    if (S.col(k).cwiseAbs().maxCoeff() <= zero_tol) ++count;
  return count;
}

Eigen::MatrixXd lagrangian_gradient(const SearchState& state,
                                    const PairMatrix& Z,
                                    const SearchConfig& cfg) {
  const Eigen::MatrixXd& H = state.H_current.H;
  if (static_cast<Eigen::Index>(state.a.size()) != Z.count())
    raise(errc::dimension_mismatch, "slack vector does not match pair matrix");

  Eigen::MatrixXd S = H * Z.columns;  // K x m
  Eigen::MatrixXd coeff(S.rows(), S.cols());
  for (Eigen::Index k = 0; k < S.cols(); ++k) {
    if (!state.a[static_cast<std::size_t>(k)]) {
      coeff.col(k).setZero();
      continue;
    }
    for (Eigen::Index i = 0; i < S.rows(); ++i)
      coeff(i, k) = -sign0(S(i, k));
  }
  Eigen::MatrixXd grad = coeff * Z.columns.transpose();  // K x F

  if (!state.priors.empty()) {
    const auto F = H.cols();
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(F, F);
    for (const Representation& prior : state.priors) {
      P += Eigen::MatrixXd::Identity(F, F) - prior.H.transpose() * prior.H;
    }
    grad += cfg.mu * H * P;
  }
  return grad;
}

Eigen::MatrixXd projected_step(const Representation& H,
                               const Eigen::MatrixXd& grad, double epsilon) {
  Eigen::MatrixXd G = grad - (grad * H.H.transpose()) * H.H;
  double norm = G.norm();
  if (norm < kZeroGradTol)
    raise(errc::zero_projected_gradient, "projected gradient is numerically zero");
  return H.H + (epsilon / norm) * G;
}

Representation gram_schmidt(const Eigen::MatrixXd& M) {
  Eigen::MatrixXd Q(M.rows(), M.cols());
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    Eigen::RowVectorXd v = M.row(i);
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index j = 0; j < i; ++j)
        v -= (v.dot(Q.row(j))) * Q.row(j);
    double norm = v.norm();
    if (norm < kRankTol)
      raise(errc::rank_deficient, "row " + std::to_string(i + 1) + " is linearly dependent");
    Q.row(i) = v / norm;
  }
  return Representation{std::move(Q)};
}

std::pair<std::vector<std::uint8_t>, double> update_slacks(
    const Representation& H, const PairMatrix& Z, double theta) {
  if (!(theta > 0.0 && theta < 1.0))
    raise(errc::domain_error, "update_slacks: theta must be in (0,1)");
  Eigen::MatrixXd S = H.H * Z.columns;
  Eigen::VectorXd mags(S.cols());
  for (Eigen::Index k = 0; k < S.cols(); ++k)
    mags(k) = S.col(k).cwiseAbs().maxCoeff();
  double MAX = S.cols() > 0 ? mags.maxCoeff() : 0.0;
  std::vector<std::uint8_t> a(static_cast<std::size_t>(S.cols()));
  for (Eigen::Index k = 0; k < S.cols(); ++k)
    a[static_cast<std::size_t>(k)] = mags(k) > theta * MAX ? 0 : 1;
  return {std::move(a), MAX};
}

double exclusion_margin(const Representation& H, const Representation& prior) {
  // sum_j h_j (I - P^T P) h_j^T = K - ||H P^T||_F^2 for orthonormal rows
  return static_cast<double>(H.K()) - (H.H * prior.H.transpose()).squaredNorm();
}

Representation initial_H(int n, const std::vector<Representation>& priors,
                         int K, int F, const SearchConfig& cfg,
                         const PairMatrix& Z) {
  if (K < 1 || K >= F) raise(errc::config_invalid, "initial_H: need 1 <= K < F");

  Eigen::MatrixXd ident = Eigen::MatrixXd::Zero(K, F);
  ident.topLeftCorner(K, K).setIdentity();
  if (n == 0 || priors.empty()) return Representation{std::move(ident)};

  const Representation& last = priors.back();
  const bool shape_matches = last.K() == K;

  Eigen::MatrixXd direction;
  if (shape_matches) {
    SearchState st;
    st.H_current = last;
    st.a.assign(static_cast<std::size_t>(Z.count()), 1);
    st.priors = priors;
    Eigen::MatrixXd grad = lagrangian_gradient(st, Z, cfg);
    Eigen::MatrixXd G = grad - (grad * last.H.transpose()) * last.H;
    double norm = G.norm();
    if (norm < kZeroGradTol)
      raise(errc::initialization_failed,
            "perturbation gradient vanishes; no direction leaves the prior row space");
    direction = G / norm;
  }

  std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(n) * 0x51ed2701ULL + static_cast<std::uint64_t>(K))));
  std::normal_distribution<double> gauss(0.0, 1.0);

  double eps = cfg.epsilon;
  for (int attempt = 0; attempt < 10; ++attempt, eps *= 2.0) {
    Eigen::MatrixXd cand_raw;
    if (shape_matches) {
      cand_raw = last.H + eps * direction;
    } else {
      // Prior has a different row count; Eq.-(7)-style perturbation is
      // inapplicable. Identity block plus a seeded random perturbation.
      Eigen::MatrixXd noise(K, F);
      for (Eigen::Index i = 0; i < noise.size(); ++i)
        noise(i / F, i % F) = gauss(rng);
      cand_raw = ident + eps * noise;
    }
    Representation cand;
    try {
      cand = gram_schmidt(cand_raw);
    } catch (const Error& e) {
      if (e.code() == errc::rank_deficient) continue;
      throw;
    }
    bool ok = true;
    for (const Representation& prior : priors)
      if (exclusion_margin(cand, prior) <= cfg.D) {
        ok = false;
        break;
      }
    if (ok) return cand;
  }
  raise(errc::initialization_failed,
        "no initialization cleared the exclusion margin after 10 retries");
}

std::optional<AcceptedRepresentation> search_next_H(
    const std::vector<Representation>& priors, const PairMatrix& Z, int K,
    const SearchConfig& cfg, SearchDiagnostics* diag) {
  SearchDiagnostics local;
  SearchDiagnostics& d = diag ? *diag : local;
  d = SearchDiagnostics{};

  const int F = static_cast<int>(Z.features());
  SearchState st;
  try {
    st.H_current = initial_H(static_cast<int>(priors.size()), priors, K, F, cfg, Z);
  } catch (const Error& e) {
    if (e.code() == errc::initialization_failed) {
      d.stop_reason = "initialization_failed";
      return std::nullopt;
    }
    throw;
  }
  st.a.assign(static_cast<std::size_t>(Z.count()), 1);
  st.priors = priors;
  d.max_ortho_error = st.H_current.orthonormality_error();

  auto accept = [&](const std::string& reason) -> std::optional<AcceptedRepresentation> {
    d.stop_reason = reason;
    for (const Representation& prior : priors)
      if (exclusion_margin(st.H_current, prior) <= cfg.D) {
        d.stop_reason = "margin_violation";
        return std::nullopt;
      }
    std::int64_t obj = objective_value(st.H_current, Z, cfg.objective_tol);
    if (obj < 1) {
      d.stop_reason = "empty_objective";
      return std::nullopt;
    }
    return AcceptedRepresentation{st.H_current, obj, 0};
  };

  double eps = cfg.epsilon;
  bool slacks_updated = false;

  for (st.iteration = 1; st.iteration <= cfg.max_iters; ++st.iteration) {
    d.iterations = st.iteration;

    Eigen::MatrixXd grad = lagrangian_gradient(st, Z, cfg);

    // masked MAX over active pairs, current H
    Eigen::MatrixXd S = st.H_current.H * Z.columns;
    double MAX = 0.0;
    for (Eigen::Index k = 0; k < S.cols(); ++k)
      if (st.a[static_cast<std::size_t>(k)])
        MAX = std::max(MAX, S.col(k).cwiseAbs().maxCoeff());
    st.MAX = MAX;
    d.final_max = MAX;

    if (MAX < cfg.gamma) return accept("converged");

    Eigen::MatrixXd stepped;
    try {
      stepped = projected_step(st.H_current, grad, eps);
    } catch (const Error& e) {
      if (e.code() != errc::zero_projected_gradient) throw;
      if (slacks_updated) return accept("zero_gradient");
      d.stop_reason = "zero_gradient_before_slack_update";
      return std::nullopt;
    }
    try {
      st.H_current = gram_schmidt(stepped);
    } catch (const Error& e) {
      if (e.code() != errc::rank_deficient) throw;
      d.stop_reason = "rank_deficient";
      return std::nullopt;
    }
    d.max_ortho_error = std::max(d.max_ortho_error, st.H_current.orthonormality_error());

    auto [a_new, max_unmasked] = update_slacks(st.H_current, Z, cfg.theta);
    // A fixed step cannot drive the iterate below gamma: once the slack
    // pattern stabilizes the remaining motion is the continuous polish, so
    // the step is halved; any slack flip resets it.
    if (a_new == st.a) {
      eps *= 0.5;
    } else {
      eps = cfg.epsilon;
    }
    st.a = std::move(a_new);
    slacks_updated = true;

    if (eps < kStallEpsilon) {
      d.stop_reason = "stalled";
      return std::nullopt;
    }
  }
  d.stop_reason = "max_iters";
  return std::nullopt;
}

SearchOutcome search_all(const ExperimentDataset& train,
                         const SearchConfig& cfg) {
  train.validate();
  cfg.validate(train.F);

  PairMatrix Z = build_pair_matrix(train, cfg.pair_cap, cfg.seed);
  SearchOutcome out;
  out.pair_count = static_cast<std::uint64_t>(Z.count());

  const auto min_objective = static_cast<std::int64_t>(
      std::ceil(cfg.min_objective_fraction * static_cast<double>(Z.count())));

  std::vector<Representation> priors;
  for (int K : cfg.K_values) {
    while (static_cast<int>(out.accepted.size()) < cfg.max_matrices) {
      SearchDiagnostics diag;
      // Seed variation per attempt so fallback initializations differ.
      SearchConfig run_cfg = cfg;
      run_cfg.seed = splitmix64(cfg.seed + out.accepted.size() * 1000003ULL + static_cast<std::uint64_t>(K));
      auto res = search_next_H(priors, Z, K, run_cfg, &diag);
      out.max_ortho_error = std::max(out.max_ortho_error, diag.max_ortho_error);
      if (!res) break;
      if (res->objective < min_objective) break;
      res->order_index = static_cast<int>(out.accepted.size());
      priors.push_back(res->rep);
      out.accepted.push_back(std::move(*res));
    }
    if (static_cast<int>(out.accepted.size()) >= cfg.max_matrices) break;
  }
  return out;
}

}  // namespace dpv
