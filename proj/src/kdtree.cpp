#include "p2preg/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

namespace p2preg {

namespace {
constexpr int kLeafSize = 16;

struct HeapEntry {
    double dist_sq;
    int index;
    // max-heap ordering: farthest (then higher index) on top
    bool operator<(const HeapEntry& o) const {
        if (dist_sq != o.dist_sq) return dist_sq < o.dist_sq;
        return index < o.index;
    }
};
}  // namespace

KdTree::KdTree(const std::vector<Vec3>& points) : points_(points) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (!points_.empty()) root_ = build(0, static_cast<int>(points_.size()));
}

int KdTree::build(int begin, int end) {
    Node node;
    node.begin = begin;
    node.end = end;
    node.bbox_min = Vec3::Constant(std::numeric_limits<double>::infinity());
    node.bbox_max = -node.bbox_min;
    for (int i = begin; i < end; ++i) {
        const Vec3& p = points_[order_[i]];
        node.bbox_min = node.bbox_min.cwiseMin(p);
        node.bbox_max = node.bbox_max.cwiseMax(p);
    }
    int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) return id;

    Vec3 extent = node.bbox_max - node.bbox_min;
    int axis = 0;
    extent.maxCoeff(&axis);
    if (extent[axis] <= 0.0) return id;  // all points identical: keep as leaf

    int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                         double pa = points_[a][axis], pb = points_[b][axis];
                         if (pa != pb) return pa < pb;
                         return a < b;
                     });
    double split = points_[order_[mid]][axis];
    int left = build(begin, mid);
    int right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

double KdTree::bbox_distance_sq(const Node& node, const Vec3& q) const {
    double d = 0.0;
    for (int a = 0; a < 3; ++a) {
        double v = 0.0;
        if (q[a] < node.bbox_min[a]) v = node.bbox_min[a] - q[a];
        else if (q[a] > node.bbox_max[a]) v = q[a] - node.bbox_max[a];
        d += v * v;
    }
    return d;
}

template <typename Visit>
void KdTree::traverse(const Vec3& q, double& worst_sq, Visit&& visit) const {
    // iterative DFS, near child first
    std::vector<int> stack;
    stack.push_back(root_);
    while (!stack.empty()) {
        int id = stack.back();
        stack.pop_back();
        const Node& node = nodes_[id];
        if (bbox_distance_sq(node, q) > worst_sq) continue;
        if (node.is_leaf()) {
            for (int i = node.begin; i < node.end; ++i) {
                int idx = order_[i];
                double d = (points_[idx] - q).squaredNorm();
                if (d <= worst_sq) visit(d, idx);
            }
        } else {
            if (q[node.axis] < node.split) {
                stack.push_back(node.right);
                stack.push_back(node.left);
            } else {
                stack.push_back(node.left);
                stack.push_back(node.right);
            }
        }
    }
}

void KdTree::knn(const Vec3& query, int k, std::vector<int>& indices,
                 std::vector<double>& distances) const {
    if (empty()) throw StateError("nearest_neighbors: empty spatial index");
    if (k < 1 || static_cast<std::size_t>(k) > points_.size())
        throw ParameterError("nearest_neighbors: k out of range");

    std::priority_queue<HeapEntry> heap;  // holds current best k
    double worst_sq = std::numeric_limits<double>::infinity();
    traverse(query, worst_sq, [&](double d, int idx) {
        HeapEntry e{d, idx};
        if (static_cast<int>(heap.size()) < k) {
            heap.push(e);
            if (static_cast<int>(heap.size()) == k) worst_sq = heap.top().dist_sq;
        } else if (e < heap.top()) {
            heap.pop();
            heap.push(e);
            worst_sq = heap.top().dist_sq;
        }
    });

    indices.resize(heap.size());
    distances.resize(heap.size());
    for (int i = static_cast<int>(heap.size()) - 1; i >= 0; --i) {
        indices[i] = heap.top().index;
        distances[i] = std::sqrt(heap.top().dist_sq);
        heap.pop();
    }
}

int KdTree::nearest(const Vec3& query, double* distance) const {
    if (empty()) throw StateError("nearest: empty spatial index");
    double worst_sq = std::numeric_limits<double>::infinity();
    int best = -1;
    traverse(query, worst_sq, [&](double d, int idx) {
        if (d < worst_sq || (d == worst_sq && idx < best)) {
            worst_sq = d;
            best = idx;
        }
    });
    if (distance) *distance = std::sqrt(worst_sq);
    return best;
}

std::vector<int> KdTree::radius_search(const Vec3& query, double radius) const {
    if (empty()) throw StateError("radius_search: empty spatial index");
    std::vector<int> out;
    double worst_sq = radius * radius;
    traverse(query, worst_sq, [&](double, int idx) { out.push_back(idx); });
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace p2preg
