#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "morea/vec3.hpp"

namespace morea {

/// Static 3-d tree for exact nearest-neighbor queries.
///
/// Distances are compared with `distance2`, the same expression brute-force
/// scans use, so the returned minimum is bit-identical to an exhaustive scan.
class KdTree {
  public:
    KdTree() = default;
    explicit KdTree(std::span<const Vec3> points);

    bool empty() const { return points_.empty(); }
    std::size_t size() const { return points_.size(); }

    struct Hit {
        std::size_t index = 0;
        double distance2 = std::numeric_limits<double>::infinity();
    };

    /// Nearest stored point; `index` refers to the construction order.
    Hit nearest(const Vec3 &q) const;

  private:
    struct Node {
        int left = -1;
        int right = -1;
        int axis = 0;
        std::size_t point = 0;
    };

    int build(std::vector<std::size_t> &ids, std::size_t lo, std::size_t hi, int depth);
    void search(int node, const Vec3 &q, Hit &best) const;

    std::vector<Vec3> points_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

} // namespace morea
