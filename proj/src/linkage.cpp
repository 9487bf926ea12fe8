#include "morea/linkage.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "morea/error.hpp"

namespace morea {

std::vector<int> greedy_set_cover(std::span<const std::array<int, 2>> edges, int num_points) {
    std::vector<char> seen(static_cast<std::size_t>(num_points), 0);
    for (const auto &e : edges) {
        if (e[0] < 0 || e[1] < 0 || e[0] >= num_points || e[1] >= num_points || e[0] == e[1])
            throw DataError("invalid edge in set cover input");
        seen[static_cast<std::size_t>(e[0])] = seen[static_cast<std::size_t>(e[1])] = 1;
    }
    for (int p = 0; p < num_points; ++p)
        if (!seen[static_cast<std::size_t>(p)]) throw DataError("point " + std::to_string(p) + " is on no edge");

    // Gains only shrink, so one ordered scan per gain level reproduces the
    // "largest gain, lowest id" greedy sequence.
    std::vector<char> covered(static_cast<std::size_t>(num_points), 0);
    std::vector<int> picked;
    for (int need = 2; need >= 1; --need) {
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const auto a = static_cast<std::size_t>(edges[i][0]);
            const auto b = static_cast<std::size_t>(edges[i][1]);
            if (!covered[a] + !covered[b] >= need) {
                picked.push_back(static_cast<int>(i));
                covered[a] = covered[b] = 1;
            }
        }
    }
    return picked;
}

Graph build_interaction_graph(std::span<const FosElement> elements) {
    int max_tet = -1;
    for (const auto &e : elements)
        for (int t : e.dependent_tets) max_tet = std::max(max_tet, t);
    std::vector<std::vector<int>> users(static_cast<std::size_t>(max_tet + 1));
    for (std::size_t i = 0; i < elements.size(); ++i)
        for (int t : elements[i].dependent_tets) users[static_cast<std::size_t>(t)].push_back(static_cast<int>(i));
    Graph g(elements.size());
    for (const auto &u : users)
        for (std::size_t x = 0; x < u.size(); ++x)
            for (std::size_t y = x + 1; y < u.size(); ++y) {
                g[static_cast<std::size_t>(u[x])].push_back(u[y]);
                g[static_cast<std::size_t>(u[y])].push_back(u[x]);
            }
    for (auto &adj : g) {
        std::sort(adj.begin(), adj.end());
        adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    }
    return g;
}

std::vector<int> dsatur_coloring(const Graph &graph) {
    const std::size_t n = graph.size();
    std::vector<int> color(n, -1);
    std::vector<std::vector<char>> neighbor_colors(n);
    std::vector<int> saturation(n, 0);
    for (std::size_t step = 0; step < n; ++step) {
        std::size_t pick = n;
        for (std::size_t v = 0; v < n; ++v) {
            if (color[v] >= 0) continue;
            if (pick == n || saturation[v] > saturation[pick] ||
                (saturation[v] == saturation[pick] && graph[v].size() > graph[pick].size()))
                pick = v;
        }
        auto &used = neighbor_colors[pick];
        int c = 0;
        while (static_cast<std::size_t>(c) < used.size() && used[static_cast<std::size_t>(c)]) ++c;
        color[pick] = c;
        for (int w : graph[pick]) {
            auto &nc = neighbor_colors[static_cast<std::size_t>(w)];
            if (nc.size() <= static_cast<std::size_t>(c)) nc.resize(static_cast<std::size_t>(c) + 1, 0);
            if (!nc[static_cast<std::size_t>(c)]) {
                nc[static_cast<std::size_t>(c)] = 1;
                ++saturation[static_cast<std::size_t>(w)];
            }
        }
    }
    return color;
}

FosPlan build_fos_plan(const TetTopology &topology) {
    const auto edges = topology.unique_edges();
    FosPlan plan;
    for (int id : greedy_set_cover(edges, topology.num_points())) {
        FosElement e;
        e.a = edges[static_cast<std::size_t>(id)][0];
        e.b = edges[static_cast<std::size_t>(id)][1];
        const auto ta = topology.incident(e.a);
        const auto tb = topology.incident(e.b);
        std::set_union(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(e.dependent_tets));
        plan.elements.push_back(std::move(e));
    }
    plan.colors = dsatur_coloring(build_interaction_graph(plan.elements));
    for (int c : plan.colors) plan.num_colors = std::max(plan.num_colors, c + 1);
    plan.classes.assign(static_cast<std::size_t>(plan.num_colors), {});
    for (std::size_t i = 0; i < plan.colors.size(); ++i)
        plan.classes[static_cast<std::size_t>(plan.colors[i])].push_back(static_cast<int>(i));
    return plan;
}

PlanCheck check_fos_plan(const FosPlan &plan, const TetTopology &topology) {
    PlanCheck r;
    std::vector<char> covered(static_cast<std::size_t>(topology.num_points()), 0);
    for (const auto &e : plan.elements) covered[static_cast<std::size_t>(e.a)] = covered[static_cast<std::size_t>(e.b)] = 1;
    r.covers_all_points = std::all_of(covered.begin(), covered.end(), [](char c) { return c != 0; });

    std::vector<int> touches(topology.num_tets(), 0);
    for (const auto &cls : plan.classes) {
        std::fill(touches.begin(), touches.end(), 0);
        for (int id : cls)
            for (int t : plan.elements[static_cast<std::size_t>(id)].dependent_tets)
                r.max_touches_per_class = std::max(r.max_touches_per_class, ++touches[static_cast<std::size_t>(t)]);
    }
    const Graph g = build_interaction_graph(plan.elements);
    for (std::size_t v = 0; v < g.size(); ++v)
        for (int w : g[v])
            if (plan.colors[v] == plan.colors[static_cast<std::size_t>(w)]) r.proper_coloring = false;
    return r;
}

void save_fos_plan(const std::filesystem::path &path, const FosPlan &plan) {
    nlohmann::json j;
    j["num_colors"] = plan.num_colors;
    j["elements"] = nlohmann::json::array();
    for (std::size_t i = 0; i < plan.elements.size(); ++i) {
        const auto &e = plan.elements[i];
        j["elements"].push_back({{"edge", {e.a, e.b}}, {"color", plan.colors[i]}, {"dependent_tets", e.dependent_tets}});
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump() << "\n";
}

} // namespace morea
