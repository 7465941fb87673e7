#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "p2preg/kdtree.hpp"
#include "p2preg/matching.hpp"

namespace p2preg {

/// Per-source-point visibility: row sums of the raw score matrix.
Eigen::VectorXd visibility_scores(const Eigen::MatrixXd& scores);

/// Indices of the min(m, N) largest scores; ties break toward lower index.
std::vector<int> select_visible(const Eigen::VectorXd& scores, int m);

/// K patch nodes chosen by farthest point sampling restricted to the visible
/// subset. seed == 0 starts at visible[0] (the highest-visibility point);
/// other seeds draw a uniform start. Returned indices refer to the full
/// source cloud.
std::vector<int> generate_patch_nodes(const PointCloud& source,
                                      const std::vector<int>& visible, int k, uint64_t seed);

struct PatchCandidate {
    int node = -1;                 // source index of the patch node
    std::vector<int> members;      // source indices, nearest-first
    FeatureMatrix features;        // rows of xS for the members
    bool clamped = false;          // requested size exceeded the source count
    bool failed = false;           // fewer than 3 mutual matches
    RigidTransform transform;
    CorrespondenceSet correspondences;  // member-local source indices
    double selection_score = 0.0;
};

/// The m source points nearest the node (the node included), with their
/// feature rows. m > N clamps to N and sets the `clamped` flag.
PatchCandidate sample_patch(const PointCloud& source, const SpatialIndex& index, int node,
                            int m, const FeatureMatrix& xs);

/// Matches every patch against the target and estimates its rigid transform.
/// When `full_scores` (the N x M source-target score matrix) is given, patch
/// scores are gathered from its rows instead of recomputed, so the cost per
/// patch is the rematch only. When `tables` (with subset_safe set) is also
/// given, its shared softmax factors are reused and no exponentials are
/// recomputed at all. Patches with < 3 mutual matches are marked failed and
/// left out of selection.
void register_patches(std::vector<PatchCandidate>& patches, const FeatureMatrix& xt,
                      const PointCloud& source, const PointCloud& target, double temperature,
                      const Eigen::MatrixXd* full_scores = nullptr,
                      const DualSoftmaxTables* tables = nullptr);

/// Index of the candidate with the most correspondences within `tau` of
/// their target point; ties break toward the lower candidate index.
/// Correspondences in `all` use full-source indices.
int select_by_inliers(const std::vector<RigidTransform>& candidates,
                      const CorrespondenceSet& all, const PointCloud& source,
                      const PointCloud& target, double tau,
                      std::vector<double>* scores = nullptr);

/// Index of the candidate minimizing the mean distance from each target
/// point to its nearest transformed source point; ties break low.
int select_by_closest_distance(const std::vector<RigidTransform>& candidates,
                               const PointCloud& source, const PointCloud& target,
                               std::vector<double>* scores = nullptr);

enum class SelectionRule { ClosestDistance, InlierCount };

struct P2PConfig {
    int patch_count = 5;                                      // K
    SelectionRule selection = SelectionRule::ClosestDistance;
    double inlier_radius = 0.05;                              // tau, normalized units
    double temperature = 0.0;                                 // 0 -> 1/sqrt(d)
    uint64_t seed = 0;
    bool propose_candidates = true;  // ablation switch: false = FPS on the whole source
};

/// Full patches-to-partial pipeline: baseline matching, visibility-ranked
/// patch proposal, per-patch registration, and best-candidate selection over
/// {baseline} ∪ {K patches}.
RegistrationResult p2p_register(const PointCloud& source, const PointCloud& target,
                                const FeatureMatrix& xs, const FeatureMatrix& xt,
                                const P2PConfig& config);

}  // namespace p2preg
