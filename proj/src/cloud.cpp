#include "p2preg/cloud.hpp"

#include <cmath>
#include <limits>
#include <unordered_map>

#include "p2preg/rng.hpp"

namespace p2preg {

void PointCloud::validate() const {
    if (points.empty()) throw ParameterError("PointCloud: point count must be >= 1");
    for (const Vec3& p : points)
        if (!p.allFinite()) throw ParameterError("PointCloud: non-finite coordinate");
    if (!normals.empty()) {
        if (normals.size() != points.size())
            throw ParameterError("PointCloud: normal count != point count");
        for (const Vec3& n : normals)
            if (std::abs(n.norm() - 1.0) > 1e-6)
                throw ParameterError("PointCloud: normal not unit length");
    }
}

namespace {
struct CellKey {
    int64_t x, y, z;
    bool operator==(const CellKey&) const = default;
};
struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const {
        uint64_t h = 1469598103934665603ULL;
        for (int64_t v : {k.x, k.y, k.z}) {
            h ^= static_cast<uint64_t>(v);
            h *= 1099511628211ULL;
        }
        return static_cast<std::size_t>(h);
    }
};
}  // namespace

PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size) {
    if (!(voxel_size > 0.0)) throw ParameterError("voxel_downsample: voxel_size must be > 0");
    if (cloud.empty()) throw ParameterError("voxel_downsample: empty cloud");

    struct Cell {
        Vec3 sum = Vec3::Zero();
        Vec3 normal_sum = Vec3::Zero();
        int count = 0;
        int order = 0;
    };
    std::unordered_map<CellKey, Cell, CellKeyHash> cells;
    cells.reserve(cloud.size());
    int next_order = 0;
    bool with_normals = cloud.has_normals();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[i];
        CellKey key{static_cast<int64_t>(std::floor(p.x() / voxel_size)),
                    static_cast<int64_t>(std::floor(p.y() / voxel_size)),
                    static_cast<int64_t>(std::floor(p.z() / voxel_size))};
        auto [it, inserted] = cells.try_emplace(key);
        if (inserted) it->second.order = next_order++;
        it->second.sum += p;
        if (with_normals) it->second.normal_sum += cloud.normals[i];
        it->second.count++;
    }

    PointCloud out;
    out.role = cloud.role;
    out.points.resize(cells.size());
    if (with_normals) out.normals.resize(cells.size());
    for (const auto& [key, cell] : cells) {
        out.points[cell.order] = cell.sum / cell.count;
        if (with_normals) {
            Vec3 n = cell.normal_sum;
            double len = n.norm();
            out.normals[cell.order] = len > 0.0 ? Vec3(n / len) : Vec3(0, 0, 1);
        }
    }
    return out;
}

NormalizedPair normalize_pair(const PointCloud& source, const PointCloud& target) {
    if (source.empty() || target.empty())
        throw ParameterError("normalize_pair: empty cloud");

    Vec3 centroid = Vec3::Zero();
    for (const Vec3& p : source.points) centroid += p;
    centroid /= static_cast<double>(source.size());

    double max_norm = 0.0;
    for (const Vec3& p : source.points) max_norm = std::max(max_norm, (p - centroid).norm());
    if (max_norm <= 0.0)
        throw ParameterError("normalize_pair: degenerate source (zero scale)");

    NormalizedPair out;
    out.info = {centroid, max_norm};
    out.source = source;
    out.target = target;
    for (Vec3& p : out.source.points) p = (p - centroid) / max_norm;
    for (Vec3& p : out.target.points) p = (p - centroid) / max_norm;
    return out;
}

std::vector<int> farthest_point_sample_from(const PointCloud& cloud, int k, int start) {
    int n = static_cast<int>(cloud.size());
    if (k < 1 || k > n) throw ParameterError("farthest_point_sample: k out of range");
    if (start < 0 || start >= n)
        throw ParameterError("farthest_point_sample: start index out of range");

    std::vector<int> selected;
    selected.reserve(k);
    selected.push_back(start);
    std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
    std::vector<char> taken(n, 0);
    taken[start] = 1;
    for (int round = 1; round < k; ++round) {
        const Vec3& last = cloud.points[selected.back()];
        int next = -1;
        double best = -1.0;
        for (int i = 0; i < n; ++i) {
            double d = (cloud.points[i] - last).squaredNorm();
            if (d < min_dist[i]) min_dist[i] = d;
            if (!taken[i] && min_dist[i] > best) {
                best = min_dist[i];
                next = i;
            }
        }
        taken[next] = 1;
        selected.push_back(next);
    }
    return selected;
}

std::vector<int> farthest_point_sample(const PointCloud& cloud, int k, uint64_t seed) {
    int n = static_cast<int>(cloud.size());
    if (k < 1 || k > n) throw ParameterError("farthest_point_sample: k out of range");

    int start;
    if (seed == 0) {
        Vec3 centroid = Vec3::Zero();
        for (const Vec3& p : cloud.points) centroid += p;
        centroid /= n;
        start = 0;
        double best = -1.0;
        for (int i = 0; i < n; ++i) {
            double d = (cloud.points[i] - centroid).squaredNorm();
            if (d > best) {
                best = d;
                start = i;
            }
        }
    } else {
        start = static_cast<int>(Rng(seed).uniform_index(n));
    }
    return farthest_point_sample_from(cloud, k, start);
}

PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& t) {
    PointCloud out = cloud;
    for (Vec3& p : out.points) p = t.apply(p);
    for (Vec3& n : out.normals) n = t.rotation * n;
    return out;
}

}  // namespace p2preg
