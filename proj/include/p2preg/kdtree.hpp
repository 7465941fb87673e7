#pragma once

#include <vector>

#include "p2preg/cloud.hpp"
#include "p2preg/types.hpp"

namespace p2preg {

/// Static kd-tree over a point set. Queries return exactly the brute-force
/// result; ties in distance break toward the lower point index.
class KdTree {
public:
    KdTree() = default;
    explicit KdTree(const std::vector<Vec3>& points);
    explicit KdTree(const PointCloud& cloud) : KdTree(cloud.points) {}

    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }
    const std::vector<Vec3>& points() const { return points_; }

    /// k nearest neighbors, ascending by distance. Throws StateError on an
    /// empty index and ParameterError when k exceeds the point count.
    void knn(const Vec3& query, int k, std::vector<int>& indices,
             std::vector<double>& distances) const;

    /// Index of the single nearest point (no allocation).
    int nearest(const Vec3& query, double* distance = nullptr) const;

    /// All indices within `radius` of the query (inclusive), ascending index.
    std::vector<int> radius_search(const Vec3& query, double radius) const;

private:
    struct Node {
        int left = -1, right = -1;
        int begin = 0, end = 0;  // leaf range into order_
        int axis = 0;
        double split = 0.0;
        Vec3 bbox_min, bbox_max;
        bool is_leaf() const { return left < 0; }
    };

    int build(int begin, int end);
    double bbox_distance_sq(const Node& node, const Vec3& q) const;

    template <typename Visit>
    void traverse(const Vec3& q, double& worst_sq, Visit&& visit) const;

    std::vector<Vec3> points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

/// Convenience wrapper matching the pipeline vocabulary.
using SpatialIndex = KdTree;

struct KnnResult {
    std::vector<int> indices;
    std::vector<double> distances;
};

inline KnnResult nearest_neighbors(const SpatialIndex& index, const Vec3& query, int k) {
    KnnResult r;
    index.knn(query, k, r.indices, r.distances);
    return r;
}

}  // namespace p2preg
