#pragma once

// Static FOS linkage: edge elements from a greedy set cover, their
// interaction graph and a DSATUR coloring that defines legal parallelism.

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "morea/mesh.hpp"

namespace morea {

struct FosElement {
    int a = 0;
    int b = 0;
    /// Tets incident to a or b, ascending and unique.
    std::vector<int> dependent_tets;
};

struct FosPlan {
    std::vector<FosElement> elements;
    std::vector<int> colors;
    int num_colors = 0;
    /// Element ids per color, ascending.
    std::vector<std::vector<int>> classes;
};

/// Edges (by id = position in `edges`) chosen greedily by the number of
/// still-uncovered endpoints; ties go to the lowest id. Returned in pick order.
std::vector<int> greedy_set_cover(std::span<const std::array<int, 2>> edges, int num_points);

using Graph = std::vector<std::vector<int>>;

/// Elements are adjacent iff their dependent tet sets intersect.
Graph build_interaction_graph(std::span<const FosElement> elements);

/// DSATUR: highest saturation, then highest degree, then lowest id.
std::vector<int> dsatur_coloring(const Graph &graph);

FosPlan build_fos_plan(const TetTopology &topology);

struct PlanCheck {
    bool covers_all_points = true;
    bool proper_coloring = true;
    /// Largest number of same-colored elements sharing one tet.
    int max_touches_per_class = 0;
};

PlanCheck check_fos_plan(const FosPlan &plan, const TetTopology &topology);

void save_fos_plan(const std::filesystem::path &path, const FosPlan &plan);

} // namespace morea
