#include "p2preg/baselines.hpp"

#include <cmath>
#include <limits>

#include "p2preg/kdtree.hpp"
#include "p2preg/rng.hpp"

namespace p2preg {

IcpResult icp(const PointCloud& source, const PointCloud& target,
              const RigidTransform& init, const IcpConfig& config) {
    if (source.empty() || target.empty()) throw ParameterError("icp: empty cloud");
    if (config.max_iterations < 1) throw ParameterError("icp: max_iterations must be >= 1");
    if (!(config.tolerance > 0.0)) throw ParameterError("icp: tolerance must be > 0");

    KdTree tree(target);
    IcpResult result;
    result.transform = init;
    double previous = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < config.max_iterations; ++iter) {
        CorrespondenceSet corr;
        double sum = 0.0;
        for (std::size_t i = 0; i < source.size(); ++i) {
            Vec3 p = result.transform.apply(source.points[i]);
            double d = 0.0;
            int j = tree.nearest(p, &d);
            if (config.max_correspondence_distance > 0.0 &&
                d > config.max_correspondence_distance)
                continue;
            corr.pairs.push_back({static_cast<int>(i), j, 1.0});
            sum += d * d;
        }
        if (corr.size() < 3)
            throw IcpStallError("icp: too few correspondences under the distance gate",
                                result.transform);
        // RMS, not mean distance: the SVD step minimizes the sum of squared
        // distances, so this is the quantity that decreases monotonically.
        double mean = std::sqrt(sum / static_cast<double>(corr.size()));
        result.residual_history.push_back(mean);
        result.iterations = iter + 1;
        if (previous - mean < config.tolerance) {
            result.converged = true;
            break;
        }
        previous = mean;
        result.transform = weighted_svd(source.points, target.points, corr);
    }
    return result;
}

RansacResult ransac_registration(const CorrespondenceSet& corr, const PointCloud& source,
                                 const PointCloud& target, const RansacConfig& config) {
    int n = static_cast<int>(corr.size());
    if (n < 3) throw ParameterError("ransac_registration: need at least 3 correspondences");
    if (config.iterations < 1) throw ParameterError("ransac_registration: iterations >= 1");
    if (!(config.max_correspondence_distance > 0.0))
        throw ParameterError("ransac_registration: max_correspondence_distance must be > 0");
    int sample_size = std::max(config.sample_size, 3);

    auto count_inliers = [&](const RigidTransform& t, std::vector<int>* out) {
        int count = 0;
        for (int i = 0; i < n; ++i) {
            const Correspondence& pair = corr.pairs[i];
            double d = (t.apply(source.points[pair.source]) -
                        target.points[pair.target]).norm();
            if (d < config.max_correspondence_distance) {
                ++count;
                if (out) out->push_back(i);
            }
        }
        return count;
    };

    int best_count = -1;
    RigidTransform best_model;
    for (int iter = 0; iter < config.iterations; ++iter) {
        Rng rng = Rng::derive(config.seed, static_cast<uint64_t>(iter));
        CorrespondenceSet sample;
        std::vector<int> chosen;
        while (static_cast<int>(chosen.size()) < sample_size) {
            int c = static_cast<int>(rng.uniform_index(n));
            if (std::find(chosen.begin(), chosen.end(), c) == chosen.end())
                chosen.push_back(c);
        }
        for (int c : chosen)
            sample.pairs.push_back({corr.pairs[c].source, corr.pairs[c].target, 1.0});
        RigidTransform model;
        try {
            model = weighted_svd(source.points, target.points, sample);
        } catch (const DegenerateConfigurationError&) {
            continue;
        }
        int count = count_inliers(model, nullptr);
        if (count > best_count) {
            best_count = count;
            best_model = model;
        }
    }
    if (best_count < 3)
        throw DegenerateConfigurationError("ransac_registration: never found >= 3 inliers",
                                           best_count < 0 ? 0 : best_count);

    RansacResult result;
    count_inliers(best_model, &result.inliers);
    CorrespondenceSet inlier_set;
    for (int i : result.inliers)
        inlier_set.pairs.push_back({corr.pairs[i].source, corr.pairs[i].target, 1.0});
    result.transform = weighted_svd(source.points, target.points, inlier_set);
    // refit can shift the inlier set; report counts for the final model
    result.inliers.clear();
    result.inlier_count = count_inliers(result.transform, &result.inliers);

    if (config.refine_with_icp) {
        IcpConfig icp_cfg;
        icp_cfg.max_correspondence_distance = config.max_correspondence_distance;
        result.transform = icp(source, target, result.transform, icp_cfg).transform;
    }
    return result;
}

}  // namespace p2preg
