#pragma once

#include <cstdint>
#include <vector>

#include "p2preg/matching.hpp"

namespace p2preg {

struct IcpConfig {
    int max_iterations = 50;
    double tolerance = 1e-8;                  // stop when mean residual improves by less
    double max_correspondence_distance = 0.0; // 0 disables the gate
};

/// Thrown when the correspondence gate leaves no pairs; carries the last
/// transform so callers can still report it.
class IcpStallError : public std::runtime_error {
public:
    IcpStallError(const std::string& what, RigidTransform last)
        : std::runtime_error(what), last_transform(last) {}
    RigidTransform last_transform;
};

struct IcpResult {
    RigidTransform transform;
    std::vector<double> residual_history;  // RMS correspondence distance per iteration
    int iterations = 0;
    bool converged = false;
};

/// Point-to-point ICP: nearest neighbor from the transformed source into the
/// target, then an unweighted SVD update, repeated until the mean residual
/// stops improving.
IcpResult icp(const PointCloud& source, const PointCloud& target,
              const RigidTransform& init, const IcpConfig& config);

struct RansacConfig {
    int iterations = 1000;
    int sample_size = 3;
    double max_correspondence_distance = 0.05;
    uint64_t seed = 0;
    bool refine_with_icp = false;  // optional polish, off by default
};

struct RansacResult {
    RigidTransform transform;
    int inlier_count = 0;
    std::vector<int> inliers;  // indices into the input correspondence set
};

/// Correspondence-based RANSAC: minimal 3-pair SVD hypotheses, inlier count
/// under the distance gate, final refit on the best inlier set. Deterministic
/// given the seed (per-iteration derived streams).
RansacResult ransac_registration(const CorrespondenceSet& corr, const PointCloud& source,
                                 const PointCloud& target, const RansacConfig& config);

}  // namespace p2preg
