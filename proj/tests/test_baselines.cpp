#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "p2preg/baselines.hpp"
#include "test_support.hpp"

using namespace p2preg;

namespace {

CorrespondenceSet identity_pairs(int n) {
    CorrespondenceSet corr;
    for (int i = 0; i < n; ++i) corr.pairs.push_back({i, i, 1.0});
    return corr;
}

}  // namespace

TEST_CASE("icp started at ground truth stays there") {
    PointCloud source = test::random_cloud(200, 1);
    RigidTransform truth = test::random_transform(2, 0.5);
    PointCloud target = apply_transform(source, truth);

    IcpResult r = icp(source, target, truth, IcpConfig{});
    CHECK(r.iterations <= 2);
    CHECK(test::transform_error(r.transform, truth) < 1e-9);
    CHECK(r.converged);
}

TEST_CASE("icp recovers a small rotation from identity") {
    PointCloud source = test::random_cloud(300, 3);
    RigidTransform truth;
    truth.rotation = test::rotation_xyz(0, 0, 5.0 * M_PI / 180.0);
    PointCloud target = apply_transform(source, truth);

    IcpResult r = icp(source, target, RigidTransform::identity(), IcpConfig{});
    CHECK(test::transform_error(r.transform, truth) < 1e-6);
    CHECK(r.residual_history.back() < 1e-9);
}

TEST_CASE("icp falls into a local optimum on a large rotation with partial overlap") {
    PointCloud source = test::random_cloud(400, 4);
    RigidTransform truth;
    truth.rotation = test::rotation_xyz(0, 0, 170.0 * M_PI / 180.0);

    // partial target: quarter of the source, rotated
    PointCloud target;
    target.role = CloudRole::Target;
    for (int i = 0; i < 100; ++i) target.points.push_back(truth.apply(source.points[i]));

    IcpResult r = icp(source, target, RigidTransform::identity(), IcpConfig{});
    CHECK(test::rotation_angle_between(r.transform.rotation, truth.rotation) >
          10.0 * M_PI / 180.0);
    CHECK(r.residual_history.back() > 0.0);
}

TEST_CASE("icp residual history is non-increasing") {
    PointCloud source = test::random_cloud(250, 5);
    RigidTransform truth = test::random_transform(6, 0.2);
    PointCloud target = apply_transform(source, truth);

    IcpResult r = icp(source, target, RigidTransform::identity(), IcpConfig{});
    for (std::size_t i = 1; i < r.residual_history.size(); ++i)
        CHECK(r.residual_history[i] <= r.residual_history[i - 1] + 1e-12);
}

TEST_CASE("icp stalls when the distance gate removes every correspondence") {
    PointCloud source = test::random_cloud(50, 7);
    PointCloud target = source;
    for (Vec3& p : target.points) p += Vec3(100, 0, 0);
    IcpConfig config;
    config.max_correspondence_distance = 0.01;
    CHECK_THROWS_AS(icp(source, target, RigidTransform::identity(), config), IcpStallError);
}

TEST_CASE("ransac recovers the transform from outlier-free correspondences") {
    PointCloud source = test::random_cloud(100, 8);
    RigidTransform truth = test::random_transform(9, 0.4);
    PointCloud target = apply_transform(source, truth);

    RansacResult r =
        ransac_registration(identity_pairs(100), source, target, RansacConfig{});
    CHECK(test::transform_error(r.transform, truth) < 1e-9);
    CHECK(r.inlier_count == 100);
}

TEST_CASE("ransac survives 50 percent gross outliers") {
    PointCloud source = test::random_cloud(100, 10);
    RigidTransform truth = test::random_transform(11, 0.4);
    PointCloud target = apply_transform(source, truth);

    // corrupt half the correspondences by pairing with far-away targets
    CorrespondenceSet corr = identity_pairs(100);
    Rng rng(12);
    for (int i = 0; i < 50; ++i)
        corr.pairs[i].target = static_cast<int>(50 + rng.uniform_index(50));
    for (int i = 0; i < 50; ++i) corr.pairs[i].source = i;  // keep sources distinct

    RansacConfig config;
    config.iterations = 1000;
    RansacResult r = ransac_registration(corr, source, target, config);
    CHECK(test::rotation_angle_between(r.transform.rotation, truth.rotation) < 1e-6);
    CHECK((r.transform.translation - truth.translation).norm() < 1e-6);
    CHECK(r.inlier_count >= 50);
}

TEST_CASE("ransac with exactly 3 pairs equals the direct SVD fit") {
    std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    RigidTransform truth = test::random_transform(13, 0.5);
    PointCloud source, target;
    source.points = pts;
    for (const Vec3& p : pts) target.points.push_back(truth.apply(p));

    CorrespondenceSet corr = identity_pairs(3);
    RansacResult r = ransac_registration(corr, source, target, RansacConfig{});
    RigidTransform direct = weighted_svd(source.points, target.points, corr);
    CHECK(test::transform_error(r.transform, direct) < 1e-12);
}

TEST_CASE("ransac is deterministic given its seed") {
    PointCloud source = test::random_cloud(80, 14);
    RigidTransform truth = test::random_transform(15, 0.4);
    PointCloud target = apply_transform(source, truth);
    CorrespondenceSet corr = identity_pairs(80);
    Rng rng(16);
    for (int i = 0; i < 30; ++i)
        corr.pairs[static_cast<int>(rng.uniform_index(80))].target =
            static_cast<int>(rng.uniform_index(80));

    RansacConfig config;
    config.seed = 99;
    RansacResult a = ransac_registration(corr, source, target, config);
    RansacResult b = ransac_registration(corr, source, target, config);
    CHECK(test::transform_error(a.transform, b.transform) == 0.0);
    CHECK(a.inliers == b.inliers);
}

TEST_CASE("ransac fails cleanly when no model ever reaches 3 inliers") {
    PointCloud source = test::random_cloud(20, 17);
    PointCloud target = test::random_cloud(20, 18);
    for (Vec3& p : target.points) p *= 100.0;  // nothing can be an inlier at gate 0.05
    CHECK_THROWS_AS(
        ransac_registration(identity_pairs(20), source, target, RansacConfig{}),
        DegenerateConfigurationError);
    CorrespondenceSet two = identity_pairs(2);
    CHECK_THROWS_AS(ransac_registration(two, source, target, RansacConfig{}),
                    ParameterError);
}

TEST_CASE("ransac optional icp polish improves a noisy fit") {
    PointCloud source = test::random_cloud(200, 19);
    RigidTransform truth = test::random_transform(20, 0.3);
    PointCloud target = apply_transform(source, truth);

    CorrespondenceSet corr;
    Rng rng(21);
    for (int i = 0; i < 40; ++i) {
        int s = static_cast<int>(rng.uniform_index(200));
        corr.pairs.push_back({s, s, 1.0});
    }
    RansacConfig config;
    config.refine_with_icp = true;
    RansacResult r = ransac_registration(corr, source, target, config);
    CHECK(test::transform_error(r.transform, truth) < 1e-6);
}
