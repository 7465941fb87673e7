#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "p2preg/cloud.hpp"
#include "p2preg/features.hpp"
#include "p2preg/types.hpp"

namespace p2preg {

struct Correspondence {
    int source;
    int target;
    double weight;
};

struct CorrespondenceSet {
    std::vector<Correspondence> pairs;

    std::size_t size() const { return pairs.size(); }
    bool empty() const { return pairs.empty(); }
};

/// Per-candidate record kept for diagnostics and selection-rule assertions.
struct CandidateDiagnostics {
    int node_index = -1;  // -1 for the baseline candidate
    bool failed = false;
    int match_count = 0;
    double selection_score = 0.0;
    RigidTransform transform;
};

struct RegistrationResult {
    RigidTransform transform;
    CorrespondenceSet correspondences;
    std::vector<CandidateDiagnostics> candidates;
    int selected = 0;  // index into candidates
    std::string selection_rule;
};

/// S(i,j) = dot(xS row i, xT row j); cosine similarity for unit-norm rows.
Eigen::MatrixXd score_matrix(const FeatureMatrix& xs, const FeatureMatrix& xt);

/// M(i,j) = softmax_row_i(j) * softmax_col_j(i), logits scaled by 1/temperature.
Eigen::MatrixXd dual_softmax(const Eigen::MatrixXd& scores, double temperature);

using RowMajorMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// The two dual-softmax factors kept separate so row subsets can be
/// renormalized without recomputing exponentials: a subset's row softmax is
/// the matching rows of `row_softmax` (same column set), and its column
/// softmax is `col_exp` rows divided by their per-column subset sums.
/// `subset_safe` is false when the logit spread is large enough that a row
/// subset could underflow an entire column of `col_exp` (which is shifted by
/// the global, not subset, column max).
struct DualSoftmaxTables {
    RowMajorMatrixXd row_softmax;
    RowMajorMatrixXd col_exp;
    bool subset_safe = false;

    /// Full confidence matrix; same quantity as dual_softmax().
    Eigen::MatrixXd confidence() const;
};
DualSoftmaxTables dual_softmax_tables(const Eigen::MatrixXd& scores, double temperature);

/// Scaled dot-product default when no temperature is configured.
inline double default_temperature(int feature_dim) {
    return 1.0 / std::sqrt(static_cast<double>(feature_dim));
}

/// Pairs (i,j) where M(i,j) is the strict maximum of both row i and column j.
/// Weight is the confidence. Exact ties are excluded.
CorrespondenceSet mutual_nn_matches(const Eigen::MatrixXd& confidence);

/// mutual_nn_matches on the confidence implied by the factor tables, without
/// materializing it. `rows` restricts the matrix to that subset of source
/// rows (empty = all); both softmax factors are renormalized over the subset
/// implicitly, so this equals running dual_softmax + mutual_nn_matches on the
/// corresponding score submatrix (requires subset_safe when `rows` is a
/// proper subset). Result source indices are positions within `rows` when it
/// is given, global row indices otherwise.
CorrespondenceSet mutual_nn_from_tables(const DualSoftmaxTables& tables,
                                        const std::vector<int>& rows = {});

/// Weighted Procrustes: R, t minimizing sum_j w_j |R p_j + t - q_j|^2 with a
/// det(R) = +1 reflection correction. Throws DegenerateConfigurationError for
/// fewer than 3 pairs or a rank-deficient configuration.
RigidTransform weighted_svd(const std::vector<Vec3>& source_points,
                            const std::vector<Vec3>& target_points,
                            const CorrespondenceSet& corr);

/// Baseline complete-to-partial path:
/// score_matrix -> dual_softmax -> mutual_nn_matches -> weighted_svd.
RegistrationResult match_and_estimate(const FeatureMatrix& xs, const FeatureMatrix& xt,
                                      const PointCloud& source, const PointCloud& target,
                                      double temperature = 0.0);

}  // namespace p2preg
