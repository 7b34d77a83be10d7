#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dpv/experiment_data.hpp"

namespace dpv {

/// Columns are context differences x_i (test) - x_j (control).
struct PairMatrix {
  Eigen::MatrixXd columns;  // F x m
  std::vector<std::pair<std::string, std::string>> pair_ids;
  bool sampled = false;
  std::uint64_t total_pairs = 0;

  Eigen::Index count() const { return columns.cols(); }
  Eigen::Index features() const { return columns.rows(); }
};

/// K x F matrix with orthonormal rows; its level sets {H x = v}
/// partition the population into subpopulations.
struct Representation {
  Eigen::MatrixXd H;

  int K() const { return static_cast<int>(H.rows()); }
  int F() const { return static_cast<int>(H.cols()); }

  /// max elementwise |H H^T - I|
  double orthonormality_error() const;
};

struct SearchConfig {
  std::vector<int> K_values = {1, 2};
  double D = 0.01;        // row-space exclusion margin
  double epsilon = 0.05;  // gradient step size
  double theta = 0.5;     // slack threshold
  double gamma = 1e-6;    // stopping threshold on the masked max magnitude
  double mu = 0.5;        // exclusion penalty weight
  int max_iters = 500;
  int max_matrices = 20;
  double min_objective_fraction = 0.05;
  std::uint64_t pair_cap = 200000;
  double objective_tol = 1e-4;  // magnitude below which a pair counts as collapsed
  std::uint64_t seed = 1;

  void validate(int F) const;
};

struct SearchState {
  Representation H_current;
  std::vector<std::uint8_t> a;  // slack variables, one per pair column
  std::vector<Representation> priors;
  int iteration = 0;
  double MAX = 0.0;
};

struct SearchDiagnostics {
  int iterations = 0;
  double max_ortho_error = 0.0;
  double final_max = 0.0;
  std::string stop_reason;
};

struct AcceptedRepresentation {
  Representation rep;
  std::int64_t objective = 0;
  int order_index = 0;
};

struct SearchOutcome {
  std::vector<AcceptedRepresentation> accepted;
  std::uint64_t pair_count = 0;
  double max_ortho_error = 0.0;  // across every iteration of every run
};

PairMatrix build_pair_matrix(const ExperimentDataset& train,
                             std::uint64_t pair_cap, std::uint64_t seed);

/// Number of pair columns with ||H z||_inf <= zero_tol. With zero_tol = 0
/// this is |P| times the size-weighted expected pair count over the
/// subpopulations induced by H (restricted to sampled pairs).
std::int64_t objective_value(const Representation& H, const PairMatrix& Z,
                             double zero_tol);

/// Unprojected gradient of the Lagrangian w.r.t. H: per row,
/// sum_k -sign(H_j . z_k) a_k z_k^T plus mu * [H sum_i (I - H_i^T H_i)]_j
/// over the priors. sign(0) is 0.
Eigen::MatrixXd lagrangian_gradient(const SearchState& state,
                                    const PairMatrix& Z,
                                    const SearchConfig& cfg);

/// H + epsilon * G / ||G||_F with G = grad (I - H^T H). Throws
/// zero_projected_gradient when ||G||_F < 1e-14.
Eigen::MatrixXd projected_step(const Representation& H,
                               const Eigen::MatrixXd& grad, double epsilon);

/// Classical Gram-Schmidt with one re-orthogonalization pass. Throws
/// rank_deficient when a residual row norm falls below 1e-10.
Representation gram_schmidt(const Eigen::MatrixXd& M);

/// MAX = max_k max_i |H_i . z_k|; a_k = 0 iff that pair's magnitude
/// exceeds theta * MAX.
std::pair<std::vector<std::uint8_t>, double> update_slacks(
    const Representation& H, const PairMatrix& Z, double theta);

/// sum_j H_j (I - P^T P) H_j^T for prior P; positive when the row space
/// of H is not contained in the row space of P.
double exclusion_margin(const Representation& H, const Representation& prior);

/// n = 0: [I_K | 0]. Otherwise the last prior perturbed along its
/// projected gradient, orthonormalized, retried with the step doubled
/// until the exclusion margin clears D.
Representation initial_H(int n, const std::vector<Representation>& priors,
                         int K, int F, const SearchConfig& cfg,
                         const PairMatrix& Z);

std::optional<AcceptedRepresentation> search_next_H(
    const std::vector<Representation>& priors, const PairMatrix& Z, int K,
    const SearchConfig& cfg, SearchDiagnostics* diag = nullptr);

SearchOutcome search_all(const ExperimentDataset& train,
                         const SearchConfig& cfg);

}  // namespace dpv
