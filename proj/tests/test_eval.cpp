#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "p2preg/eval.hpp"
#include "test_support.hpp"

using namespace p2preg;

namespace {

std::vector<Vec3> random_fiducials(int n, uint64_t seed, double extent = 100.0) {
    Rng rng(seed);
    std::vector<Vec3> pts;
    pts.reserve(n);
    for (int i = 0; i < n; ++i)
        pts.emplace_back(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                         rng.uniform(-extent, extent));
    return pts;
}

EvalRecord record(const std::string& method, double err, double vis, bool failed = false) {
    EvalRecord r;
    r.sample_id = "s";
    r.method = method;
    r.rms_tre_mm = err;
    r.visibility = vis;
    r.failed = failed;
    return r;
}

}  // namespace

TEST_CASE("rms_tre matches a hand-computed example") {
    // identity transform, offsets of 3 and 4 -> rms = sqrt((9+16)/2)
    std::vector<Vec3> src{{0, 0, 0}, {1, 1, 1}};
    std::vector<Vec3> tgt{{3, 0, 0}, {1, 5, 1}};
    RigidTransform identity;
    CHECK(rms_tre(identity, src, tgt) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
}

TEST_CASE("rms_tre equals the brute-force definition on random fiducials") {
    std::vector<Vec3> src = random_fiducials(50, 11);
    std::vector<Vec3> tgt = random_fiducials(50, 12);
    RigidTransform t = test::random_transform(13);

    double sum = 0.0;
    for (int i = 0; i < 50; ++i) {
        Vec3 moved = t.rotation * src[i] + t.translation;
        sum += (tgt[i] - moved).squaredNorm();
    }
    CHECK(rms_tre(t, src, tgt) == doctest::Approx(std::sqrt(sum / 50.0)).epsilon(1e-12));
}

TEST_CASE("rms_tre is zero exactly when the transform maps every fiducial") {
    std::vector<Vec3> src = random_fiducials(20, 21);
    RigidTransform t = test::random_transform(22);
    std::vector<Vec3> tgt;
    for (const Vec3& p : src) tgt.push_back(t.apply(p));
    CHECK(rms_tre(t, src, tgt) == doctest::Approx(0.0).epsilon(1e-9));
    RigidTransform off = t;
    off.translation += Vec3(1.0, 0, 0);
    CHECK(rms_tre(off, src, tgt) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("rms_tre rejects mismatched or empty fiducial sets") {
    RigidTransform t;
    std::vector<Vec3> a{{0, 0, 0}}, b;
    CHECK_THROWS_AS(rms_tre(t, a, b), ParameterError);
    CHECK_THROWS_AS(rms_tre(t, b, b), ParameterError);
}

TEST_CASE("procrustes_reference recovers an exact rigid relation") {
    std::vector<Vec3> src = random_fiducials(30, 31);
    RigidTransform t = test::random_transform(32);
    std::vector<Vec3> tgt;
    for (const Vec3& p : src) tgt.push_back(t.apply(p));

    ProcrustesReference ref = procrustes_reference(src, tgt);
    CHECK(ref.rms_tre == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(test::transform_error(ref.transform, t) < 1e-9);
}

TEST_CASE("procrustes_reference is optimal among perturbed rigid fits") {
    // non-rigid relation: rigid move plus per-point distortion
    std::vector<Vec3> src = random_fiducials(40, 41);
    RigidTransform t = test::random_transform(42);
    Rng rng(43);
    std::vector<Vec3> tgt;
    for (const Vec3& p : src) {
        Vec3 jitter(rng.normal(), rng.normal(), rng.normal());
        tgt.push_back(t.apply(p) + 3.0 * jitter);
    }

    ProcrustesReference ref = procrustes_reference(src, tgt);
    for (int k = 0; k < 50; ++k) {
        RigidTransform perturbed = ref.transform;
        double angle = rng.uniform(0.001, 0.2);
        perturbed.rotation =
            (Eigen::AngleAxisd(angle, Vec3(rng.normal(), rng.normal(), rng.normal())
                                          .normalized()) *
             perturbed.rotation)
                .eval();
        perturbed.translation += Vec3(rng.normal(), rng.normal(), rng.normal());
        CHECK(rms_tre(perturbed, src, tgt) >= ref.rms_tre - 1e-9);
    }
}

TEST_CASE("success_rate counts strictly-below errors as a percentage") {
    std::vector<double> errors{5.0, 15.0, 25.0};
    CHECK(success_rate(errors, 20.0) == doctest::Approx(200.0 / 3.0).epsilon(1e-12));
    CHECK(success_rate(errors, 15.0) == doctest::Approx(100.0 / 3.0).epsilon(1e-12));  // strict
    CHECK(success_rate(errors, 100.0) == doctest::Approx(100.0));
    CHECK(success_rate(errors, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("success_rate is non-decreasing in tau") {
    Rng rng(51);
    std::vector<double> errors;
    for (int i = 0; i < 200; ++i) errors.push_back(rng.uniform(0.0, 40.0));
    double prev = 0.0;
    for (double tau = 0.0; tau <= 45.0; tau += 1.5) {
        double rate = success_rate(errors, tau);
        CHECK(rate >= prev);
        prev = rate;
    }
    CHECK(prev == doctest::Approx(100.0));
}

TEST_CASE("success_rate rejects an empty error list") {
    CHECK_THROWS_AS(success_rate({}, 10.0), ParameterError);
}

TEST_CASE("bin_report computes hand-checked statistics per method and bin") {
    std::vector<EvalRecord> records{
        record("a", 2.0, 0.25), record("a", 4.0, 0.28), record("a", 6.0, 0.35),
        record("b", 1.0, 0.22), record("b", 0.0, 0.31, /*failed=*/true),
    };
    std::vector<double> edges{0.2, 0.3, 0.4};
    std::vector<BinRow> rows = bin_report(records, edges);

    REQUIRE(rows.size() == 4);  // 2 methods x 2 bins, methods sorted
    CHECK(rows[0].method == "a");
    CHECK(rows[0].count == 2);
    CHECK(rows[0].mean == doctest::Approx(3.0).epsilon(1e-12));
    // sample standard deviation of {2, 4}
    CHECK(rows[0].stddev == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(rows[1].count == 1);
    CHECK(rows[1].mean == doctest::Approx(6.0));
    CHECK(rows[1].stddev == doctest::Approx(0.0));
    CHECK(rows[2].method == "b");
    CHECK(rows[2].count == 1);
    CHECK(rows[2].failures == 0);
    CHECK(rows[3].count == 0);
    CHECK(rows[3].failures == 1);
    CHECK(rows[3].mean == doctest::Approx(0.0));
}

TEST_CASE("bin_report closes only the last bin on the right") {
    std::vector<EvalRecord> records{
        record("m", 1.0, 0.3),  // lands in [0.3, 0.4), not [0.2, 0.3)
        record("m", 2.0, 1.0),  // lands in the final closed bin
    };
    std::vector<BinRow> rows = bin_report(records, default_visibility_edges());
    REQUIRE(rows.size() == 8);
    CHECK(rows[0].count == 0);
    CHECK(rows[1].count == 1);
    CHECK(rows[7].count == 1);
    CHECK(rows[7].mean == doctest::Approx(2.0));
}

TEST_CASE("bin_report requires at least two edges") {
    CHECK_THROWS_AS(bin_report({}, {0.5}), ParameterError);
}

TEST_CASE("default visibility edges span [0.2, 1.0] in steps of 0.1") {
    std::vector<double> edges = default_visibility_edges();
    REQUIRE(edges.size() == 9);
    for (std::size_t i = 0; i < edges.size(); ++i)
        CHECK(edges[i] == doctest::Approx(0.2 + 0.1 * static_cast<double>(i)).epsilon(1e-12));
}

TEST_CASE("report writers emit one row per entry with the declared header") {
    std::vector<EvalRecord> records{record("a", 2.5, 0.25), record("b", 3.5, 0.25)};
    std::vector<BinRow> rows = bin_report(records, {0.2, 0.3});

    std::string dir = test::temp_dir("eval_writers");
    write_bin_report_csv(dir + "/bins.csv", rows);
    std::ifstream in(dir + "/bins.csv");
    std::string header, line;
    REQUIRE(std::getline(in, header));
    CHECK(header ==
          "method,bin_lo,bin_hi,count,failures,mean_rms_tre_mm,std_rms_tre_mm,mean_runtime_s");
    int count = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++count;
    CHECK(count == 2);

    write_success_rate_csv(dir + "/sr.csv", records, {1.0, 3.0, 10.0});
    std::ifstream sr(dir + "/sr.csv");
    REQUIRE(std::getline(sr, header));
    CHECK(header == "method,tau_mm,success_rate");
    std::vector<std::string> sr_lines;
    while (std::getline(sr, line))
        if (!line.empty()) sr_lines.push_back(line);
    REQUIRE(sr_lines.size() == 6);  // 2 methods x 3 taus
    CHECK(sr_lines[0] == "a,1,0");
    CHECK(sr_lines[1] == "a,3,100");
    CHECK(sr_lines[2] == "a,10,100");
}
