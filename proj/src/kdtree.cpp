#include "morea/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace morea {

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
    if (points_.empty()) return;
    std::vector<std::size_t> ids(points_.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    nodes_.reserve(points_.size());
    root_ = build(ids, 0, ids.size(), 0);
}

int KdTree::build(std::vector<std::size_t> &ids, std::size_t lo, std::size_t hi, int depth) {
    if (lo >= hi) return -1;
    const int axis = depth % 3;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(ids.begin() + static_cast<std::ptrdiff_t>(lo), ids.begin() + static_cast<std::ptrdiff_t>(mid),
                     ids.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t a, std::size_t b) {
                         const double pa = points_[a][static_cast<std::size_t>(axis)];
                         const double pb = points_[b][static_cast<std::size_t>(axis)];
                         return pa < pb || (pa == pb && a < b);
                     });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({-1, -1, axis, ids[mid]});
    const int left = build(ids, lo, mid, depth + 1);
    const int right = build(ids, mid + 1, hi, depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
}

void KdTree::search(int node, const Vec3 &q, Hit &best) const {
    if (node < 0) return;
    const Node &n = nodes_[static_cast<std::size_t>(node)];
    const Vec3 &p = points_[n.point];
    const double d2 = distance2(q, p);
    if (d2 < best.distance2 || (d2 == best.distance2 && n.point < best.index)) {
        best.distance2 = d2;
        best.index = n.point;
    }
    const auto axis = static_cast<std::size_t>(n.axis);
    const double diff = q[axis] - p[axis];
    search(diff < 0.0 ? n.left : n.right, q, best);
    // Every point across the plane is at least |diff| away along this axis.
    if (diff * diff <= best.distance2) search(diff < 0.0 ? n.right : n.left, q, best);
}

KdTree::Hit KdTree::nearest(const Vec3 &q) const {
    Hit best;
    search(root_, q, best);
    return best;
}

} // namespace morea
