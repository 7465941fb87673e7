#pragma once

#include <cstdint>
#include <vector>

#include "p2preg/types.hpp"

namespace p2preg {

enum class CloudRole { Source, Target };

/// Ordered 3D point set, optionally with unit normals. Immutable by
/// convention after construction; all operations return new clouds.
struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;  // empty or same length as points
    CloudRole role = CloudRole::Source;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_normals() const { return !normals.empty(); }

    /// Throws ParameterError if the type invariants do not hold.
    void validate() const;
};

/// Merges points into cells of edge `voxel_size`; one centroid per occupied
/// cell. Output order follows the first input point seen in each cell.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size);

/// Centers the source at its centroid and scales it to the unit sphere; the
/// target is shifted and scaled by the same centroid/factor.
struct NormalizedPair {
    PointCloud source;
    PointCloud target;
    NormalizationInfo info;
};
NormalizedPair normalize_pair(const PointCloud& source, const PointCloud& target);

/// Farthest point sampling. seed == 0 starts at the point farthest from the
/// cloud centroid; any other seed draws a uniform start index. Distance ties
/// break toward the lower point index.
std::vector<int> farthest_point_sample(const PointCloud& cloud, int k, uint64_t seed);

/// Farthest point sampling from an explicit start index.
std::vector<int> farthest_point_sample_from(const PointCloud& cloud, int k, int start);

PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& t);

}  // namespace p2preg
