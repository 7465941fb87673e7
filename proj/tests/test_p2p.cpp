#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>
#include <set>

#include "p2preg/p2p.hpp"
#include "test_support.hpp"

using namespace p2preg;

namespace {

OracleFeatures oracle_for(const PointCloud& source, const std::vector<int>& map,
                          double sigma, uint64_t seed) {
    return oracle_descriptor(static_cast<int>(source.size()), map,
                             OracleNoiseSpec{32, sigma, seed});
}

std::vector<int> identity_map(int n) {
    std::vector<int> map(n);
    std::iota(map.begin(), map.end(), 0);
    return map;
}

}  // namespace

TEST_CASE("visibility_scores are row sums of the score matrix") {
    Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(5, 8, 0.25);
    Eigen::VectorXd vis = visibility_scores(constant);
    for (int i = 0; i < 5; ++i) CHECK(vis[i] == doctest::Approx(0.25 * 8));

    Eigen::MatrixXd with_zero = Eigen::MatrixXd::Random(6, 4);
    with_zero.row(3).setZero();
    CHECK(visibility_scores(with_zero)[3] == doctest::Approx(0.0));

    Rng rng(2);
    Eigen::MatrixXd random(40, 30);
    for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 30; ++j) random(i, j) = rng.uniform(-1, 1);
    Eigen::VectorXd scores = visibility_scores(random);
    for (int i = 0; i < 40; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 30; ++j) sum += random(i, j);
        CHECK(scores[i] == doctest::Approx(sum).epsilon(1e-12));
    }
}

TEST_CASE("select_visible keeps the top-M scores") {
    Eigen::VectorXd scores(3);
    scores << 3, 1, 2;
    CHECK(select_visible(scores, 2) == std::vector<int>{0, 2});
    CHECK(select_visible(scores, 3).size() == 3);
    CHECK(select_visible(scores, 10).size() == 3);  // clamps

    Rng rng(3);
    Eigen::VectorXd big(1000);
    for (int i = 0; i < 1000; ++i) big[i] = rng.uniform();
    std::vector<int> got = select_visible(big, 250);

    std::vector<int> order(1000);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (big[a] != big[b]) return big[a] > big[b];
        return a < b;
    });
    order.resize(250);
    CHECK(got == order);
}

TEST_CASE("select_visible breaks ties toward the lower index") {
    Eigen::VectorXd scores(4);
    scores << 1, 2, 2, 1;
    CHECK(select_visible(scores, 3) == std::vector<int>{1, 2, 0});
}

TEST_CASE("generate_patch_nodes runs FPS on the visible subset") {
    PointCloud c;
    // two clusters ten units apart
    for (int i = 0; i < 5; ++i) c.points.push_back(Vec3(0.1 * i, 0, 0));
    for (int i = 0; i < 5; ++i) c.points.push_back(Vec3(10 + 0.1 * i, 0, 0));
    std::vector<int> visible(10);
    std::iota(visible.begin(), visible.end(), 0);

    std::vector<int> two = generate_patch_nodes(c, visible, 2, 0);
    CHECK(((two[0] < 5) != (two[1] < 5)));  // one node per cluster

    std::vector<int> one = generate_patch_nodes(c, visible, 1, 0);
    REQUIRE(one.size() == 1);

    std::vector<int> all = generate_patch_nodes(c, visible, 10, 0);
    CHECK(std::set<int>(all.begin(), all.end()).size() == 10);

    std::vector<int> shifted(visible.begin() + 2, visible.end());
    std::vector<int> mapped = generate_patch_nodes(c, shifted, 3, 0);
    for (int node : mapped) CHECK(node >= 2);  // indices refer to the full cloud

    CHECK_THROWS_AS(generate_patch_nodes(c, shifted, 9, 0), ParameterError);
}

TEST_CASE("sample_patch gathers the node's nearest neighbors") {
    PointCloud line;
    for (int i = 0; i < 8; ++i) line.points.push_back(Vec3(i, 0, 0));
    FeatureMatrix xs = FeatureMatrix::from_rows(Eigen::MatrixXd::Random(8, 4));
    SpatialIndex index(line);

    PatchCandidate end = sample_patch(line, index, 0, 3, xs);
    CHECK(end.members == std::vector<int>{0, 1, 2});
    CHECK_FALSE(end.clamped);
    CHECK((end.features.values - xs.slice(end.members).values).cwiseAbs().maxCoeff() == 0.0);

    PatchCandidate whole = sample_patch(line, index, 4, 8, xs);
    CHECK(std::set<int>(whole.members.begin(), whole.members.end()).size() == 8);

    PatchCandidate clamped = sample_patch(line, index, 4, 12, xs);
    CHECK(clamped.clamped);
    CHECK(clamped.members.size() == 8);

    CHECK_THROWS_AS(sample_patch(line, index, 99, 3, xs), ParameterError);
}

TEST_CASE("sample_patch equals brute-force k-NN of each node") {
    PointCloud c = test::random_cloud(400, 9);
    FeatureMatrix xs = FeatureMatrix::from_rows(Eigen::MatrixXd::Random(400, 8));
    SpatialIndex index(c);
    for (int node : {3, 77, 150, 288, 399}) {
        PatchCandidate patch = sample_patch(c, index, node, 100, xs);
        std::vector<std::pair<double, int>> brute;
        for (int i = 0; i < 400; ++i) brute.push_back({(c.points[i] - c.points[node]).norm(), i});
        std::sort(brute.begin(), brute.end());
        for (int k = 0; k < 100; ++k) CHECK(patch.members[k] == brute[k].second);
        CHECK(patch.members[0] == node);
    }
}

TEST_CASE("register_patches solves the complete-to-complete reduction exactly") {
    PointCloud source = test::random_cloud(200, 10);
    RigidTransform truth = test::random_transform(11, 0.5);

    // target = a cropped half of the source, transformed
    std::vector<int> crop_indices;
    for (int i = 0; i < 200; ++i)
        if (source.points[i].x() > 0) crop_indices.push_back(i);
    PointCloud target;
    target.role = CloudRole::Target;
    for (int i : crop_indices) target.points.push_back(truth.apply(source.points[i]));

    OracleFeatures f = oracle_for(source, crop_indices, 0.0, 12);
    SpatialIndex index(source);

    // a patch exactly covering the true region vs one disjoint from it
    PatchCandidate covering;
    covering.node = crop_indices[0];
    covering.members = crop_indices;
    covering.features = f.source.slice(crop_indices);
    PatchCandidate disjoint;
    std::vector<int> rest;
    for (int i = 0; i < 200; ++i)
        if (source.points[i].x() <= 0) rest.push_back(i);
    disjoint.node = rest[0];
    disjoint.members = rest;
    disjoint.features = f.source.slice(rest);

    std::vector<PatchCandidate> patches = {covering, disjoint};
    register_patches(patches, f.target, source, target, 0.0);

    REQUIRE_FALSE(patches[0].failed);
    CHECK(test::transform_error(patches[0].transform, truth) < 1e-6);

    // the disjoint patch either fails or scores far worse under Eq. 4
    if (!patches[1].failed) {
        std::vector<RigidTransform> candidates = {patches[0].transform, patches[1].transform};
        std::vector<double> scores;
        int winner = select_by_closest_distance(candidates, source, target, &scores);
        CHECK(winner == 0);
        CHECK(scores[1] > scores[0]);
    }
}

TEST_CASE("register_patches isolates failed patches") {
    PointCloud source = test::random_cloud(50, 13);
    PointCloud target = test::random_cloud(40, 14, 1.0, CloudRole::Target);
    OracleFeatures f = oracle_for(source, identity_map(40), 0.0, 15);
    SpatialIndex index(source);

    std::vector<PatchCandidate> patches;
    patches.push_back(sample_patch(source, index, 0, 40, f.source));
    // adversarial patch: constant features make every confidence tie, so
    // mutual-NN yields no matches at all
    PatchCandidate adversarial = sample_patch(source, index, 1, 40, f.source);
    adversarial.features =
        FeatureMatrix::from_rows(Eigen::MatrixXd::Ones(40, f.source.dim()));
    patches.push_back(adversarial);

    register_patches(patches, f.target, source, target, 0.0);
    CHECK(patches[1].failed);
    CHECK_FALSE(patches[0].failed);
    CHECK(patches[0].correspondences.size() >= 3);
}

TEST_CASE("register_patches shared-table fast path matches per-patch dual softmax") {
    PointCloud source = test::random_cloud(120, 30);
    PointCloud target = test::random_cloud(80, 31, 1.0, CloudRole::Target);
    OracleFeatures f = oracle_for(source, identity_map(80), 0.4, 32);
    SpatialIndex index(source);

    std::vector<PatchCandidate> with_table, without;
    for (int node : {5, 50, 110}) {
        with_table.push_back(sample_patch(source, index, node, 80, f.source));
        without.push_back(sample_patch(source, index, node, 80, f.source));
    }
    Eigen::MatrixXd scores = score_matrix(f.source, f.target);
    register_patches(with_table, f.target, source, target, 0.0, &scores);
    register_patches(without, f.target, source, target, 0.0, nullptr);

    for (std::size_t k = 0; k < with_table.size(); ++k) {
        REQUIRE(with_table[k].failed == without[k].failed);
        if (with_table[k].failed) continue;
        REQUIRE(with_table[k].correspondences.size() == without[k].correspondences.size());
        for (std::size_t c = 0; c < with_table[k].correspondences.size(); ++c) {
            CHECK(with_table[k].correspondences.pairs[c].source ==
                  without[k].correspondences.pairs[c].source);
            CHECK(with_table[k].correspondences.pairs[c].target ==
                  without[k].correspondences.pairs[c].target);
        }
        CHECK(test::transform_error(with_table[k].transform, without[k].transform) < 1e-9);
    }
}

TEST_CASE("select_by_inliers counts strict inliers over C_all") {
    PointCloud source = test::random_cloud(100, 16);
    RigidTransform truth = test::random_transform(17, 0.3);
    PointCloud target = apply_transform(source, truth);
    CorrespondenceSet all;
    for (int i = 0; i < 100; ++i) all.pairs.push_back({i, i, 1.0});

    RigidTransform off = truth;
    off.rotation = test::rotation_xyz(0, 0, 30.0 * M_PI / 180.0) * truth.rotation;

    std::vector<double> scores;
    int winner = select_by_inliers({truth, off}, all, source, target, 0.05, &scores);
    CHECK(winner == 0);
    CHECK(scores[0] == doctest::Approx(100.0));
    CHECK(scores[1] < 100.0);

    // tau -> infinity saturates every candidate; lowest index wins
    CHECK(select_by_inliers({off, truth}, all, source, target, 1e9) == 0);
    // single candidate returned regardless
    CHECK(select_by_inliers({off}, all, source, target, 0.05) == 0);

    CHECK_THROWS_AS(select_by_inliers({}, all, source, target, 0.05), ParameterError);
    CHECK_THROWS_AS(select_by_inliers({truth}, CorrespondenceSet{}, source, target, 0.05),
                    ParameterError);
    CHECK_THROWS_AS(select_by_inliers({truth}, all, source, target, 0.0), ParameterError);
}

TEST_CASE("select_by_inliers uses a strict distance inequality") {
    PointCloud source;
    source.points = {Vec3(0, 0, 0)};
    PointCloud target;
    target.points = {Vec3(0.05, 0, 0)};
    CorrespondenceSet one;
    one.pairs.push_back({0, 0, 1.0});
    std::vector<double> scores;
    select_by_inliers({RigidTransform::identity()}, one, source, target, 0.05, &scores);
    CHECK(scores[0] == 0.0);  // d == tau is not an inlier
}

TEST_CASE("select_by_closest_distance equals brute-force scoring") {
    PointCloud source = test::random_cloud(300, 18);
    PointCloud target = test::random_cloud(300, 19, 1.0, CloudRole::Target);
    std::vector<RigidTransform> candidates;
    for (int c = 0; c < 6; ++c) candidates.push_back(test::random_transform(100 + c, 0.5));

    std::vector<double> scores;
    int winner = select_by_closest_distance(candidates, source, target, &scores);

    int expect_winner = 0;
    double expect_best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 6; ++c) {
        double sum = 0.0;
        for (const Vec3& q : target.points) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec3& p : source.points)
                best = std::min(best, (candidates[c].apply(p) - q).norm());
            sum += best;
        }
        double mean = sum / 300.0;
        CHECK(scores[c] == doctest::Approx(mean).epsilon(1e-12));
        if (mean < expect_best) {
            expect_best = mean;
            expect_winner = c;
        }
    }
    CHECK(winner == expect_winner);
}

TEST_CASE("select_by_closest_distance prefers the exact overlay and breaks ties low") {
    PointCloud source = test::random_cloud(200, 20);
    RigidTransform truth = test::random_transform(21, 0.3);
    PointCloud target;
    for (int i = 0; i < 200; i += 2) target.points.push_back(truth.apply(source.points[i]));

    RigidTransform displaced = truth;
    displaced.translation += Vec3(0.3, 0, 0);
    CHECK(select_by_closest_distance({truth, displaced}, source, target) == 0);
    CHECK(select_by_closest_distance({displaced, truth}, source, target) == 1);
    CHECK(select_by_closest_distance({truth, truth}, source, target) == 0);  // tie -> first
}

TEST_CASE("p2p_register does not degrade the full-visibility case") {
    PointCloud source = test::random_cloud(250, 22);
    RigidTransform truth = test::random_transform(23, 0.4);
    PointCloud target = apply_transform(source, truth);
    target.role = CloudRole::Target;
    OracleFeatures f = oracle_for(source, identity_map(250), 0.0, 24);

    RegistrationResult r = p2p_register(source, target, f.source, f.target, P2PConfig{});
    CHECK(test::transform_error(r.transform, truth) < 1e-6);
    CHECK(r.candidates.size() == 6);  // baseline + K=5

    // selected candidate's score is minimal among viable candidates
    double selected_score = r.candidates[r.selected].selection_score;
    for (const CandidateDiagnostics& c : r.candidates)
        if (!c.failed) CHECK(selected_score <= c.selection_score + 1e-15);
}

TEST_CASE("p2p_register with K=1 reduces to a single-patch run") {
    PointCloud source = test::random_cloud(150, 25);
    std::vector<int> crop;
    for (int i = 0; i < 150; ++i)
        if (source.points[i].y() > 0.2) crop.push_back(i);
    RigidTransform truth = test::random_transform(26, 0.4);
    PointCloud target;
    target.role = CloudRole::Target;
    for (int i : crop) target.points.push_back(truth.apply(source.points[i]));
    OracleFeatures f = oracle_for(source, crop, 0.0, 27);

    P2PConfig config;
    config.patch_count = 1;
    RegistrationResult r = p2p_register(source, target, f.source, f.target, config);
    CHECK(r.candidates.size() == 2);
    CHECK(test::transform_error(r.transform, truth) < 1e-6);
}

TEST_CASE("p2p_register is deterministic and records diagnostics") {
    PointCloud source = test::random_cloud(180, 28);
    std::vector<int> crop;
    for (int i = 0; i < 180; ++i)
        if (source.points[i].x() < 0.3) crop.push_back(i);
    RigidTransform truth = test::random_transform(29, 0.4);
    PointCloud target;
    target.role = CloudRole::Target;
    for (int i : crop) target.points.push_back(truth.apply(source.points[i]));
    OracleFeatures f = oracle_for(source, crop, 0.3, 30);

    RegistrationResult a = p2p_register(source, target, f.source, f.target, P2PConfig{});
    RegistrationResult b = p2p_register(source, target, f.source, f.target, P2PConfig{});
    CHECK(a.selected == b.selected);
    CHECK(test::transform_error(a.transform, b.transform) == 0.0);
    CHECK(a.selection_rule == "closest-distance");
    for (std::size_t c = 0; c < a.candidates.size(); ++c) {
        CHECK(a.candidates[c].node_index == b.candidates[c].node_index);
        if (!a.candidates[c].failed)
            CHECK(a.candidates[c].selection_score ==
                  doctest::Approx(b.candidates[c].selection_score));
    }
    CHECK(a.candidates[0].node_index == -1);  // baseline is always present
}

TEST_CASE("p2p_register supports the inlier selection rule") {
    PointCloud source = test::random_cloud(160, 31);
    std::vector<int> crop;
    for (int i = 0; i < 160; ++i)
        if (source.points[i].z() > 0) crop.push_back(i);
    RigidTransform truth = test::random_transform(33, 0.4);
    PointCloud target;
    target.role = CloudRole::Target;
    for (int i : crop) target.points.push_back(truth.apply(source.points[i]));
    OracleFeatures f = oracle_for(source, crop, 0.0, 34);

    P2PConfig config;
    config.selection = SelectionRule::InlierCount;
    RegistrationResult r = p2p_register(source, target, f.source, f.target, config);
    CHECK(r.selection_rule == "inlier-count");
    CHECK(test::transform_error(r.transform, truth) < 1e-6);
    // inlier scores: the selected candidate maximizes
    double selected_score = r.candidates[r.selected].selection_score;
    for (const CandidateDiagnostics& c : r.candidates)
        if (!c.failed) CHECK(selected_score >= c.selection_score - 1e-15);
}

TEST_CASE("p2p_register validates inputs and surfaces total failure") {
    PointCloud source = test::random_cloud(30, 35);
    PointCloud target = test::random_cloud(20, 36, 1.0, CloudRole::Target);
    OracleFeatures f = oracle_for(source, identity_map(20), 0.0, 37);

    P2PConfig bad;
    bad.patch_count = 0;
    CHECK_THROWS_AS(p2p_register(source, target, f.source, f.target, bad), ParameterError);

    FeatureMatrix wrong = FeatureMatrix::from_rows(Eigen::MatrixXd::Random(9, 32));
    CHECK_THROWS_AS(p2p_register(source, target, wrong, f.target, P2PConfig{}),
                    ParameterError);

    // constant features: every candidate ties out to zero mutual matches
    FeatureMatrix flat_s = FeatureMatrix::from_rows(Eigen::MatrixXd::Ones(30, 8));
    FeatureMatrix flat_t = FeatureMatrix::from_rows(Eigen::MatrixXd::Ones(20, 8));
    CHECK_THROWS_AS(p2p_register(source, target, flat_s, flat_t, P2PConfig{}), StateError);
}
