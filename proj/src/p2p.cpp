#include "p2preg/p2p.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

namespace p2preg {

Eigen::VectorXd visibility_scores(const Eigen::MatrixXd& scores) {
    if (scores.size() == 0) throw ParameterError("visibility_scores: empty score matrix");
    return scores.rowwise().sum();
}

std::vector<int> select_visible(const Eigen::VectorXd& scores, int m) {
    if (scores.size() == 0) throw ParameterError("select_visible: empty scores");
    if (m < 1) throw ParameterError("select_visible: m must be >= 1");

    int n = static_cast<int>(scores.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    int take = std::min(m, n);
    std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    idx.resize(take);
    return idx;
}

std::vector<int> generate_patch_nodes(const PointCloud& source,
                                      const std::vector<int>& visible, int k, uint64_t seed) {
    if (k < 1 || static_cast<std::size_t>(k) > visible.size())
        throw ParameterError("generate_patch_nodes: k exceeds visible subset");

    PointCloud sub;
    sub.points.reserve(visible.size());
    for (int i : visible) sub.points.push_back(source.points[i]);
    // `visible` is ordered by visibility score, so local index 0 seeds the
    // walk at the most confidently visible point; a boundary start (the FPS
    // default) wastes the first patches on the edge of the visible region.
    std::vector<int> local = seed == 0 ? farthest_point_sample_from(sub, k, 0)
                                       : farthest_point_sample(sub, k, seed);
    std::vector<int> nodes(local.size());
    for (std::size_t i = 0; i < local.size(); ++i) nodes[i] = visible[local[i]];
    return nodes;
}

PatchCandidate sample_patch(const PointCloud& source, const SpatialIndex& index, int node,
                            int m, const FeatureMatrix& xs) {
    if (node < 0 || static_cast<std::size_t>(node) >= source.size())
        throw ParameterError("sample_patch: node index out of range");

    PatchCandidate patch;
    patch.node = node;
    int n = static_cast<int>(source.size());
    if (m > n) {
        patch.clamped = true;
        m = n;
    }
    std::vector<double> dist;
    index.knn(source.points[node], m, patch.members, dist);
    patch.features = xs.slice(patch.members);
    return patch;
}

void register_patches(std::vector<PatchCandidate>& patches, const FeatureMatrix& xt,
                      const PointCloud& source, const PointCloud& target, double temperature,
                      const Eigen::MatrixXd* full_scores, const DualSoftmaxTables* tables) {
    if (patches.empty()) throw ParameterError("register_patches: no patches");
    if (temperature <= 0.0) temperature = default_temperature(xt.dim());

    // With the full score matrix available, the per-patch softmax factors can
    // be assembled from shared tables: a patch's row softmax equals the
    // corresponding rows of the full row softmax (same target set), and its
    // column softmax is a per-column renormalization of a shared exp table.
    // The shared table uses the global column max as shift, which is exact up
    // to rounding as long as the logit spread cannot underflow exp.
    DualSoftmaxTables own_tables;
    const DualSoftmaxTables* shared_tables = nullptr;
    if (tables && tables->subset_safe) {
        shared_tables = tables;
    } else if (full_scores && full_scores->size() > 0) {
        own_tables = dual_softmax_tables(*full_scores, temperature);
        if (own_tables.subset_safe) shared_tables = &own_tables;
    }

    for (PatchCandidate& patch : patches) {
        if (shared_tables) {
            patch.correspondences = mutual_nn_from_tables(*shared_tables, patch.members);
        } else {
            Eigen::MatrixXd scores;
            if (full_scores) {
                scores.resize(static_cast<Eigen::Index>(patch.members.size()),
                              full_scores->cols());
                for (std::size_t i = 0; i < patch.members.size(); ++i)
                    scores.row(static_cast<Eigen::Index>(i)) =
                        full_scores->row(patch.members[i]);
            } else {
                scores = score_matrix(patch.features, xt);
            }
            patch.correspondences = mutual_nn_matches(dual_softmax(scores, temperature));
        }
        if (patch.correspondences.size() < 3) {
            patch.failed = true;
            continue;
        }
        std::vector<Vec3> patch_points(patch.members.size());
        for (std::size_t i = 0; i < patch.members.size(); ++i)
            patch_points[i] = source.points[patch.members[i]];
        try {
            patch.transform = weighted_svd(patch_points, target.points, patch.correspondences);
        } catch (const DegenerateConfigurationError&) {
            patch.failed = true;
        }
    }
}

int select_by_inliers(const std::vector<RigidTransform>& candidates,
                      const CorrespondenceSet& all, const PointCloud& source,
                      const PointCloud& target, double tau, std::vector<double>* scores) {
    if (candidates.empty()) throw ParameterError("select_by_inliers: no candidates");
    if (all.empty()) throw ParameterError("select_by_inliers: empty correspondence set");
    if (!(tau > 0.0)) throw ParameterError("select_by_inliers: tau must be > 0");

    int best = 0;
    long best_count = -1;
    if (scores) scores->assign(candidates.size(), 0.0);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        long count = 0;
        for (const Correspondence& pair : all.pairs) {
            double d = (candidates[c].apply(source.points[pair.source]) -
                        target.points[pair.target]).norm();
            if (d < tau) ++count;
        }
        if (scores) (*scores)[c] = static_cast<double>(count);
        if (count > best_count) {
            best_count = count;
            best = static_cast<int>(c);
        }
    }
    return best;
}

int select_by_closest_distance(const std::vector<RigidTransform>& candidates,
                               const PointCloud& source, const PointCloud& target,
                               std::vector<double>* scores) {
    if (candidates.empty()) throw ParameterError("select_by_closest_distance: no candidates");

    int best = 0;
    double best_mean = std::numeric_limits<double>::infinity();
    if (scores) scores->assign(candidates.size(), 0.0);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        KdTree tree(apply_transform(source, candidates[c]).points);
        double sum = 0.0;
        for (const Vec3& q : target.points) {
            double d = 0.0;
            tree.nearest(q, &d);
            sum += d;
        }
        double mean = sum / static_cast<double>(target.size());
        if (scores) (*scores)[c] = mean;
        if (mean < best_mean) {
            best_mean = mean;
            best = static_cast<int>(c);
        }
    }
    return best;
}

RegistrationResult p2p_register(const PointCloud& source, const PointCloud& target,
                                const FeatureMatrix& xs, const FeatureMatrix& xt,
                                const P2PConfig& config) {
    if (xs.rows() != static_cast<int>(source.size()) ||
        xt.rows() != static_cast<int>(target.size()))
        throw ParameterError("p2p_register: feature/cloud row count mismatch");
    if (config.patch_count < 1) throw ParameterError("p2p_register: patch_count must be >= 1");

    double temperature = config.temperature > 0.0 ? config.temperature
                                                  : default_temperature(xs.dim());
    const int n = static_cast<int>(source.size());
    const int m_target = static_cast<int>(target.size());

    Eigen::MatrixXd scores = score_matrix(xs, xt);
    DualSoftmaxTables tables = dual_softmax_tables(scores, temperature);

    // baseline candidate
    CandidateDiagnostics baseline;
    baseline.node_index = -1;
    CorrespondenceSet baseline_corr;
    {
        baseline_corr = mutual_nn_from_tables(tables);
        baseline.match_count = static_cast<int>(baseline_corr.size());
        if (baseline_corr.size() >= 3) {
            try {
                baseline.transform = weighted_svd(source.points, target.points, baseline_corr);
            } catch (const DegenerateConfigurationError&) {
                baseline.failed = true;
            }
        } else {
            baseline.failed = true;
        }
    }

    // visibility-guided patch proposal
    std::vector<int> visible;
    if (config.propose_candidates) {
        visible = select_visible(visibility_scores(scores), m_target);
    } else {
        visible.resize(n);
        std::iota(visible.begin(), visible.end(), 0);
    }
    int k = std::min<int>(config.patch_count, static_cast<int>(visible.size()));
    std::vector<int> nodes = generate_patch_nodes(source, visible, k, config.seed);

    SpatialIndex index(source);
    std::vector<PatchCandidate> patches;
    patches.reserve(nodes.size());
    for (int node : nodes) patches.push_back(sample_patch(source, index, node, m_target, xs));
    register_patches(patches, xt, source, target, temperature, &scores, &tables);

    // candidate table: baseline first, patches in node order
    RegistrationResult result;
    result.candidates.push_back(baseline);
    for (const PatchCandidate& patch : patches) {
        CandidateDiagnostics diag;
        diag.node_index = patch.node;
        diag.failed = patch.failed;
        diag.match_count = static_cast<int>(patch.correspondences.size());
        diag.transform = patch.transform;
        result.candidates.push_back(diag);
    }

    std::vector<int> viable;  // indices into result.candidates
    std::vector<RigidTransform> transforms;
    for (std::size_t c = 0; c < result.candidates.size(); ++c) {
        if (!result.candidates[c].failed) {
            viable.push_back(static_cast<int>(c));
            transforms.push_back(result.candidates[c].transform);
        }
    }
    if (viable.empty())
        throw StateError("p2p_register: every candidate failed (no viable transform)");

    // C_all: baseline pairs plus patch pairs mapped to full-source indices
    CorrespondenceSet all = baseline_corr;
    std::unordered_set<int64_t> seen;
    for (const Correspondence& pair : all.pairs)
        seen.insert(static_cast<int64_t>(pair.source) * m_target + pair.target);
    for (const PatchCandidate& patch : patches) {
        for (const Correspondence& pair : patch.correspondences.pairs) {
            int global = patch.members[pair.source];
            int64_t key = static_cast<int64_t>(global) * m_target + pair.target;
            if (seen.insert(key).second)
                all.pairs.push_back({global, pair.target, pair.weight});
        }
    }

    std::vector<double> selection_scores;
    int winner_local;
    if (config.selection == SelectionRule::InlierCount) {
        winner_local = select_by_inliers(transforms, all, source, target,
                                         config.inlier_radius, &selection_scores);
        result.selection_rule = "inlier-count";
    } else {
        winner_local = select_by_closest_distance(transforms, source, target, &selection_scores);
        result.selection_rule = "closest-distance";
    }

    for (std::size_t v = 0; v < viable.size(); ++v)
        result.candidates[viable[v]].selection_score = selection_scores[v];
    for (CandidateDiagnostics& diag : result.candidates)
        if (diag.failed) diag.selection_score = std::numeric_limits<double>::quiet_NaN();

    result.selected = viable[winner_local];
    result.transform = result.candidates[result.selected].transform;
    if (result.selected == 0) {
        result.correspondences = std::move(baseline_corr);
    } else {
        const PatchCandidate& patch = patches[result.selected - 1];
        for (const Correspondence& pair : patch.correspondences.pairs)
            result.correspondences.pairs.push_back(
                {patch.members[pair.source], pair.target, pair.weight});
    }
    return result;
}

}  // namespace p2preg
