#include "morea/meshgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

#include "morea/error.hpp"
#include "morea/kdtree.hpp"
#include "morea/sobol.hpp"

namespace morea {

namespace {

constexpr double kMinSeparation = 1e-6;

bool near_any(const std::vector<Vec3> &pts, const Vec3 &p) {
    for (const Vec3 &q : pts)
        if (distance2(p, q) <= kMinSeparation * kMinSeparation) return true;
    return false;
}

} // namespace

void PointPlacementConfig::validate() const {
    if (total_points < 5) throw ConfigError("morea_mesh_num_points must be at least 5");
    if (!(random_fraction >= 0.0 && random_fraction <= 1.0))
        throw ConfigError("random point fraction must lie in [0, 1]");
    for (const auto &[label, w] : allocation_weights)
        if (!(w >= 0.0)) throw ConfigError("allocation weight for '" + label + "' must be non-negative");
    if (surface_points < 0) throw ConfigError("surface point budget must be non-negative");
    if (!(bbox_padding_mm >= 0.0)) throw ConfigError("bbox padding must be non-negative");
}

std::vector<std::size_t> farthest_point_subset(std::span<const Vec3> candidates, std::size_t count) {
    std::vector<std::size_t> picked;
    if (count == 0 || candidates.empty()) return picked;
    count = std::min(count, candidates.size());
    Vec3 centroid{};
    for (const Vec3 &p : candidates) centroid += p;
    centroid = centroid / static_cast<double>(candidates.size());
    std::size_t first = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i)
        if (distance2(candidates[i], centroid) > distance2(candidates[first], centroid)) first = i;
    std::vector<double> gap(candidates.size(), std::numeric_limits<double>::infinity());
    std::size_t next = first;
    while (picked.size() < count) {
        picked.push_back(next);
        const Vec3 q = candidates[next];
        std::size_t best = 0;
        double best_gap = -1.0;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            gap[i] = std::min(gap[i], distance2(candidates[i], q));
            if (gap[i] > best_gap) {
                best_gap = gap[i];
                best = i;
            }
        }
        next = best;
    }
    return picked;
}

std::vector<Vec3> select_contour_points(const GuidanceSet &guidance, const PointPlacementConfig &cfg,
                                        const Geometry &region, std::uint64_t seed) {
    cfg.validate();
    const double rf = cfg.method == PlacementMethod::Random ? 1.0 : cfg.random_fraction;
    const auto total = static_cast<std::size_t>(cfg.total_points);
    const auto n_random = static_cast<std::size_t>(std::lround(rf * static_cast<double>(total)));
    const std::size_t n_contour = total - n_random;
    std::vector<Vec3> out;
    out.reserve(total);

    if (n_contour > 0) {
        if (guidance.pairs.empty()) throw DataError("contour point placement needs guidance point sets");
        // Largest-remainder apportionment of the contour budget.
        std::vector<double> w;
        for (const auto &p : guidance.pairs) {
            const auto it = cfg.allocation_weights.find(p.label);
            w.push_back(it == cfg.allocation_weights.end() ? 1.0 : it->second);
        }
        double wsum = 0.0;
        for (double x : w) wsum += x;
        if (!(wsum > 0.0)) throw ConfigError("allocation weights are all zero");
        std::vector<std::size_t> quota(w.size());
        std::vector<std::pair<double, std::size_t>> rema;
        std::size_t assigned = 0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double exact = static_cast<double>(n_contour) * w[i] / wsum;
            quota[i] = static_cast<std::size_t>(std::floor(exact));
            assigned += quota[i];
            rema.push_back({-(exact - std::floor(exact)), i});
        }
        std::sort(rema.begin(), rema.end());
        for (std::size_t r = 0; assigned < n_contour; ++r, ++assigned) ++quota[rema[r % rema.size()].second];

        for (std::size_t i = 0; i < guidance.pairs.size(); ++i) {
            std::vector<Vec3> cand;
            for (const Vec3 &p : guidance.pairs[i].source_points)
                if (!near_any(cand, p) && !near_any(out, p)) cand.push_back(p);
            if (quota[i] > cand.size()) {
                throw DataError("label '" + guidance.pairs[i].label + "' offers " + std::to_string(cand.size()) +
                                " distinct contour points but " + std::to_string(quota[i]) + " were requested");
            }
            for (std::size_t k : farthest_point_subset(cand, quota[i])) out.push_back(cand[k]);
        }
    }

    const Sobol4 sobol(scramble_words(seed));
    const Vec3 lo = region.lower_mm();
    const Vec3 hi = region.upper_mm();
    for (std::uint32_t i = 0; out.size() < total; ++i) {
        const auto r = sobol.point(i);
        const Vec3 p{lo.x + r[0] * (hi.x - lo.x), lo.y + r[1] * (hi.y - lo.y), lo.z + r[2] * (hi.z - lo.z)};
        if (!near_any(out, p)) out.push_back(p);
    }
    return out;
}

// Marching cubes ---------------------------------------------------------------

long SurfaceMesh::euler_characteristic() const {
    std::vector<std::pair<int, int>> edges;
    for (const auto &t : triangles)
        for (int e = 0; e < 3; ++e) {
            int a = t[static_cast<std::size_t>(e)];
            int b = t[static_cast<std::size_t>((e + 1) % 3)];
            if (a > b) std::swap(a, b);
            edges.push_back({a, b});
        }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return static_cast<long>(vertices.size()) - static_cast<long>(edges.size()) + static_cast<long>(triangles.size());
}

namespace {

constexpr std::array<std::array<int, 3>, 8> kCorner{
    {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {0, 0, 1}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}}};

// Cube edge e joins corner c with c | (1 << axis) where c lacks that bit.
struct CubeEdge {
    int c0, c1, axis;
};

std::array<CubeEdge, 12> make_cube_edges() {
    std::array<CubeEdge, 12> e{};
    int n = 0;
    for (int axis = 0; axis < 3; ++axis)
        for (int c = 0; c < 8; ++c)
            if (!(c & (1 << axis))) e[static_cast<std::size_t>(n++)] = {c, c | (1 << axis), axis};
    return e;
}

const std::array<CubeEdge, 12> kCubeEdges = make_cube_edges();

int cube_edge_index(int a, int b) {
    if (a > b) std::swap(a, b);
    for (int e = 0; e < 12; ++e)
        if (kCubeEdges[static_cast<std::size_t>(e)].c0 == a && kCubeEdges[static_cast<std::size_t>(e)].c1 == b) return e;
    return -1;
}

double triangle_area2(const Vec3 &a, const Vec3 &b, const Vec3 &c) { return norm2(cross(b - a, c - a)); }

} // namespace

SurfaceMesh marching_cubes(const LabelMask &mask, double iso) {
    mask.geometry.validate();
    if (mask.count() == 0) throw DataError("mask '" + mask.label + "' is empty; no surface to extract");
    const Geometry &g = mask.geometry;
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    const auto value = [&](int i, int j, int k) -> double {
        if (i < 0 || j < 0 || k < 0 || i >= nx || j >= ny || k >= nz) return 0.0;
        return mask.at(i, j, k);
    };
    const auto edge_key = [&](int i, int j, int k, int axis) {
        return ((static_cast<std::uint64_t>(k + 1) * static_cast<std::uint64_t>(ny + 2) + static_cast<std::uint64_t>(j + 1)) *
                    static_cast<std::uint64_t>(nx + 2) +
                static_cast<std::uint64_t>(i + 1)) *
                   3 +
               static_cast<std::uint64_t>(axis);
    };

    SurfaceMesh mesh;
    std::unordered_map<std::uint64_t, int> vertex_of_edge;
    for (int k = -1; k < nz; ++k) {
        for (int j = -1; j < ny; ++j) {
            for (int i = -1; i < nx; ++i) {
                std::array<double, 8> val{};
                std::array<bool, 8> in{};
                std::array<Vec3, 8> pos{};
                int n_in = 0;
                for (std::size_t c = 0; c < 8; ++c) {
                    const int ci = i + kCorner[c][0], cj = j + kCorner[c][1], ck = k + kCorner[c][2];
                    val[c] = value(ci, cj, ck);
                    in[c] = val[c] >= iso;
                    pos[c] = g.world(ci, cj, ck);
                    n_in += in[c];
                }
                if (n_in == 0 || n_in == 8) continue;

                std::array<Vec3, 12> epos{};
                for (std::size_t e = 0; e < 12; ++e) {
                    const CubeEdge &ce = kCubeEdges[e];
                    const auto c0 = static_cast<std::size_t>(ce.c0), c1 = static_cast<std::size_t>(ce.c1);
                    if (in[c0] == in[c1]) continue;
                    const double t = (iso - val[c0]) / (val[c1] - val[c0]);
                    epos[e] = pos[c0] + (pos[c1] - pos[c0]) * t;
                }

                // Trace oriented segments face by face; ambiguous faces keep
                // their two inside corners apart.
                std::array<int, 12> next{};
                next.fill(-1);
                for (int axis = 0; axis < 3; ++axis) {
                    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
                    for (int s = 0; s < 2; ++s) {
                        const std::array<int, 4> f{(s << axis), (s << axis) | (1 << u), (s << axis) | (1 << u) | (1 << v),
                                                   (s << axis) | (1 << v)};
                        Vec3 normal{};
                        normal[static_cast<std::size_t>(axis)] = s ? 1.0 : -1.0;
                        const auto add_segment = [&](int ea, int eb, const Vec3 &inside_ref) {
                            const Vec3 &A = epos[static_cast<std::size_t>(ea)];
                            const Vec3 &B = epos[static_cast<std::size_t>(eb)];
                            if (dot(normal, cross(B - A, inside_ref - A)) < 0.0) std::swap(ea, eb);
                            next[static_cast<std::size_t>(ea)] = eb;
                        };
                        std::array<int, 4> crossing{};
                        int n_cross = 0;
                        int n_face_in = 0;
                        Vec3 in_centroid{};
                        for (int q = 0; q < 4; ++q) {
                            const int a = f[static_cast<std::size_t>(q)], b = f[static_cast<std::size_t>((q + 1) % 4)];
                            if (in[static_cast<std::size_t>(a)]) {
                                ++n_face_in;
                                in_centroid += pos[static_cast<std::size_t>(a)];
                            }
                            if (in[static_cast<std::size_t>(a)] != in[static_cast<std::size_t>(b)])
                                crossing[static_cast<std::size_t>(n_cross++)] = cube_edge_index(a, b);
                        }
                        if (n_cross == 2) {
                            add_segment(crossing[0], crossing[1], in_centroid / n_face_in);
                        } else if (n_cross == 4) {
                            for (int q = 0; q < 4; ++q) {
                                const int c = f[static_cast<std::size_t>(q)];
                                if (!in[static_cast<std::size_t>(c)]) continue;
                                const int prev = f[static_cast<std::size_t>((q + 3) % 4)];
                                const int nxt = f[static_cast<std::size_t>((q + 1) % 4)];
                                add_segment(cube_edge_index(prev, c), cube_edge_index(c, nxt), pos[static_cast<std::size_t>(c)]);
                            }
                        }
                    }
                }

                const auto global_vertex = [&](int e) {
                    const CubeEdge &ce = kCubeEdges[static_cast<std::size_t>(e)];
                    const auto &o = kCorner[static_cast<std::size_t>(ce.c0)];
                    const auto key = edge_key(i + o[0], j + o[1], k + o[2], ce.axis);
                    auto [it, inserted] = vertex_of_edge.try_emplace(key, static_cast<int>(mesh.vertices.size()));
                    if (inserted) mesh.vertices.push_back(epos[static_cast<std::size_t>(e)]);
                    return it->second;
                };

                std::array<bool, 12> used{};
                for (int start = 0; start < 12; ++start) {
                    if (next[static_cast<std::size_t>(start)] < 0 || used[static_cast<std::size_t>(start)]) continue;
                    std::vector<int> loop;
                    for (int e = start; !used[static_cast<std::size_t>(e)]; e = next[static_cast<std::size_t>(e)]) {
                        used[static_cast<std::size_t>(e)] = true;
                        loop.push_back(e);
                        if (next[static_cast<std::size_t>(e)] < 0) throw RuntimeFailure("marching cubes produced an open loop");
                    }
                    // Fan from the apex whose smallest triangle is largest.
                    const std::size_t m = loop.size();
                    std::size_t apex = 0;
                    double best = -1.0;
                    for (std::size_t a = 0; a < m; ++a) {
                        double worst = std::numeric_limits<double>::infinity();
                        for (std::size_t t = 1; t + 1 < m; ++t)
                            worst = std::min(worst, triangle_area2(epos[static_cast<std::size_t>(loop[a])],
                                                                   epos[static_cast<std::size_t>(loop[(a + t) % m])],
                                                                   epos[static_cast<std::size_t>(loop[(a + t + 1) % m])]));
                        if (worst > best) {
                            best = worst;
                            apex = a;
                        }
                    }
                    const int v0 = global_vertex(loop[apex]);
                    for (std::size_t t = 1; t + 1 < m; ++t) {
                        const int v1 = global_vertex(loop[(apex + t) % m]);
                        const int v2 = global_vertex(loop[(apex + t + 1) % m]);
                        // Loops run with the inside on their left, so the
                        // reversed fan faces outward.
                        mesh.triangles.push_back({v0, v2, v1});
                    }
                }
            }
        }
    }
    return mesh;
}

// Delaunay -------------------------------------------------------------------

namespace {

struct DTet {
    std::array<int, 4> v;
    std::array<int, 4> n{-1, -1, -1, -1};
    Vec3 center;
    double r2 = 0.0;
    bool alive = true;
};

class BowyerWatson {
  public:
    explicit BowyerWatson(std::vector<Vec3> pts) : p_(std::move(pts)) {}

    /// Inserts every point in `order`; returns false if near-cospherical
    /// configurations were met.
    bool run(std::span<const std::size_t> order) {
        const std::size_t n = p_.size();
        Vec3 lo = p_[0], hi = p_[0];
        for (const Vec3 &q : p_)
            for (std::size_t a = 0; a < 3; ++a) {
                lo[a] = std::min(lo[a], q[a]);
                hi[a] = std::max(hi[a], q[a]);
            }
        const Vec3 c = (lo + hi) * 0.5;
        scale_ = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
        const double L = 20.0 * scale_;
        p_.push_back(c + Vec3{L, L, L});
        p_.push_back(c + Vec3{L, -L, -L});
        p_.push_back(c + Vec3{-L, L, -L});
        p_.push_back(c + Vec3{-L, -L, L});
        const int s = static_cast<int>(n);
        add_tet({s, s + 1, s + 2, s + 3});
        if (volume(tets_[0].v) < 0) {
            std::swap(tets_[0].v[2], tets_[0].v[3]);
            circumsphere(tets_[0]);
        }
        for (std::size_t i : order) insert(static_cast<int>(i));
        return !near_tie_;
    }

    std::vector<Tet> finish(std::size_t n) const {
        std::vector<Tet> out;
        for (const DTet &t : tets_) {
            if (!t.alive) continue;
            if (std::any_of(t.v.begin(), t.v.end(), [&](int v) { return v >= static_cast<int>(n); })) continue;
            out.push_back(t.v);
        }
        return out;
    }

  private:
    double volume(const std::array<int, 4> &v) const {
        return signed_volume(p_[static_cast<std::size_t>(v[0])], p_[static_cast<std::size_t>(v[1])],
                             p_[static_cast<std::size_t>(v[2])], p_[static_cast<std::size_t>(v[3])]);
    }

    double face_orient(const DTet &t, int i, const Vec3 &q) const {
        const auto &f = kTetFaces[static_cast<std::size_t>(i)];
        return signed_volume(p_[static_cast<std::size_t>(t.v[static_cast<std::size_t>(f[0])])],
                             p_[static_cast<std::size_t>(t.v[static_cast<std::size_t>(f[1])])],
                             p_[static_cast<std::size_t>(t.v[static_cast<std::size_t>(f[2])])], q);
    }

    void circumsphere(DTet &t) const {
        const Vec3 &a = p_[static_cast<std::size_t>(t.v[0])];
        const Vec3 u = p_[static_cast<std::size_t>(t.v[1])] - a;
        const Vec3 v = p_[static_cast<std::size_t>(t.v[2])] - a;
        const Vec3 w = p_[static_cast<std::size_t>(t.v[3])] - a;
        const double d = 2.0 * dot(u, cross(v, w));
        const Vec3 off = (cross(v, w) * norm2(u) + cross(w, u) * norm2(v) + cross(u, v) * norm2(w)) / d;
        t.center = a + off;
        t.r2 = norm2(off);
    }

    int add_tet(const std::array<int, 4> &v) {
        DTet t;
        t.v = v;
        circumsphere(t);
        tets_.push_back(t);
        return static_cast<int>(tets_.size()) - 1;
    }

    bool in_sphere(const DTet &t, const Vec3 &q) {
        const double diff = distance2(q, t.center) - t.r2;
        if (std::abs(diff) <= 1e-12 * t.r2) near_tie_ = true;
        return diff < 0.0;
    }

    int locate(const Vec3 &q) {
        int t = last_;
        const std::size_t limit = 100 + tets_.size();
        for (std::size_t step = 0; step < limit; ++step) {
            const DTet &cur = tets_[static_cast<std::size_t>(t)];
            int exit = -1;
            double best = 0.0;
            for (int i = 0; i < 4; ++i) {
                const double o = face_orient(cur, i, q);
                if (o > best) {
                    best = o;
                    exit = i;
                }
            }
            if (exit < 0) return t;
            const int nb = cur.n[static_cast<std::size_t>(exit)];
            if (nb < 0) break;
            t = nb;
        }
        for (std::size_t k = 0; k < tets_.size(); ++k) {
            const DTet &cur = tets_[k];
            if (!cur.alive) continue;
            bool inside = true;
            for (int i = 0; i < 4 && inside; ++i) inside = face_orient(cur, i, q) <= 0.0;
            if (inside) return static_cast<int>(k);
        }
        throw RuntimeFailure("Delaunay point location failed");
    }

    void insert(int pi) {
        const Vec3 q = p_[static_cast<std::size_t>(pi)];
        const int start = locate(q);
        for (int v : tets_[static_cast<std::size_t>(start)].v)
            if (distance2(p_[static_cast<std::size_t>(v)], q) <= 1e-24 * scale_ * scale_)
                throw DataError("duplicate point in Delaunay input");

        std::vector<int> cavity{start};
        in_cavity_.resize(tets_.size(), 0);
        in_cavity_[static_cast<std::size_t>(start)] = 1;
        for (std::size_t h = 0; h < cavity.size(); ++h) {
            const DTet &t = tets_[static_cast<std::size_t>(cavity[h])];
            for (int nb : t.n) {
                if (nb < 0 || in_cavity_[static_cast<std::size_t>(nb)]) continue;
                if (in_sphere(tets_[static_cast<std::size_t>(nb)], q)) {
                    in_cavity_[static_cast<std::size_t>(nb)] = 1;
                    cavity.push_back(nb);
                }
            }
        }

        // Grow the cavity until every boundary face sees the new point.
        struct Face {
            int tet, local, outside;
        };
        std::vector<Face> boundary;
        const double eps = 1e-15 * scale_ * scale_ * scale_;
        for (bool grown = true; grown;) {
            grown = false;
            boundary.clear();
            for (std::size_t h = 0; h < cavity.size() && !grown; ++h) {
                const DTet &t = tets_[static_cast<std::size_t>(cavity[h])];
                for (int i = 0; i < 4; ++i) {
                    const int nb = t.n[static_cast<std::size_t>(i)];
                    if (nb >= 0 && in_cavity_[static_cast<std::size_t>(nb)]) continue;
                    if (face_orient(t, i, q) < -eps) {
                        boundary.push_back({cavity[h], i, nb});
                        continue;
                    }
                    if (nb < 0) throw RuntimeFailure("Delaunay cavity reached the enclosing tet");
                    near_tie_ = true;
                    in_cavity_[static_cast<std::size_t>(nb)] = 1;
                    cavity.push_back(nb);
                    grown = true;
                    break;
                }
            }
        }

        std::map<std::pair<int, int>, std::pair<int, int>> open_edges;
        int last = -1;
        for (const Face &f : boundary) {
            const DTet &t = tets_[static_cast<std::size_t>(f.tet)];
            const auto &lf = kTetFaces[static_cast<std::size_t>(f.local)];
            const int a = t.v[static_cast<std::size_t>(lf[0])];
            const int b = t.v[static_cast<std::size_t>(lf[1])];
            const int c = t.v[static_cast<std::size_t>(lf[2])];
            const int nt = add_tet({a, c, b, pi});
            in_cavity_.push_back(0);
            last = nt;
            tets_[static_cast<std::size_t>(nt)].n[3] = f.outside;
            if (f.outside >= 0) {
                for (int &back : tets_[static_cast<std::size_t>(f.outside)].n)
                    if (back == f.tet) back = nt;
            }
            const std::array<std::pair<int, int>, 3> edges{{{c, b}, {a, b}, {a, c}}};
            for (int local = 0; local < 3; ++local) {
                auto e = edges[static_cast<std::size_t>(local)];
                if (e.first > e.second) std::swap(e.first, e.second);
                auto [it, inserted] = open_edges.try_emplace(e, nt, local);
                if (!inserted) {
                    tets_[static_cast<std::size_t>(nt)].n[static_cast<std::size_t>(local)] = it->second.first;
                    tets_[static_cast<std::size_t>(it->second.first)].n[static_cast<std::size_t>(it->second.second)] = nt;
                    open_edges.erase(it);
                }
            }
        }
        if (!open_edges.empty()) throw RuntimeFailure("Delaunay cavity boundary is not closed");
        for (int t : cavity) {
            tets_[static_cast<std::size_t>(t)].alive = false;
            in_cavity_[static_cast<std::size_t>(t)] = 0;
        }
        last_ = last;
    }

    std::vector<Vec3> p_;
    std::vector<DTet> tets_;
    std::vector<char> in_cavity_;
    double scale_ = 1.0;
    int last_ = 0;
    bool near_tie_ = false;
};

void require_full_rank(std::span<const Vec3> pts) {
    if (pts.size() < 4) throw DataError("Delaunay tetrahedralization needs at least 4 points");
    std::size_t i1 = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (distance2(pts[i], pts[0]) > distance2(pts[i1], pts[0])) i1 = i;
    const double scale = distance(pts[i1], pts[0]);
    if (!(scale > 0.0)) throw DataError("Delaunay input points coincide");
    std::size_t i2 = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double a = norm2(cross(pts[i1] - pts[0], pts[i] - pts[0]));
        if (a > best) {
            best = a;
            i2 = i;
        }
    }
    double vol = 0.0;
    for (const Vec3 &p : pts) vol = std::max(vol, std::abs(signed_volume(pts[0], pts[i1], pts[i2], p)));
    if (!(vol > 1e-12 * scale * scale * scale)) throw DataError("Delaunay input points are coplanar");
}

} // namespace

Tetrahedralization delaunay_tetrahedralize(std::span<const Vec3> points, const std::optional<Box> &bbox) {
    std::vector<Vec3> pts(points.begin(), points.end());
    std::vector<std::size_t> order;
    if (bbox) {
        for (int c = 0; c < 8; ++c)
            pts.push_back({(c & 1) ? bbox->hi.x : bbox->lo.x, (c & 2) ? bbox->hi.y : bbox->lo.y,
                           (c & 4) ? bbox->hi.z : bbox->lo.z});
        for (std::size_t c = points.size(); c < pts.size(); ++c) order.push_back(c);
    }
    for (std::size_t i = 0; i < points.size(); ++i) order.push_back(i);
    require_full_rank(pts);

    Tetrahedralization out;
    {
        BowyerWatson bw(pts);
        if (bw.run(order)) {
            out.points = pts;
            out.tets = bw.finish(pts.size());
            return out;
        }
    }
    // Near-cospherical input: retry once on deterministically jittered points.
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t a = 0; a < 3; ++a) {
            const std::uint64_t h = splitmix64(splitmix64(i) ^ (a + 1));
            pts[i][a] += (static_cast<double>(h >> 11) * 0x1.0p-53 - 0.5) * 2e-7;
        }
    BowyerWatson bw(pts);
    bw.run(order);
    out.points = std::move(pts);
    out.tets = bw.finish(out.points.size());
    out.perturbed = true;
    for (const Tet &t : out.tets) {
        const double v = signed_volume(out.points[static_cast<std::size_t>(t[0])], out.points[static_cast<std::size_t>(t[1])],
                                       out.points[static_cast<std::size_t>(t[2])], out.points[static_cast<std::size_t>(t[3])]);
        if (!(v > 0.0)) throw DataError("coplanar input after perturbation");
    }
    return out;
}

InitialMesh build_initial_genotype(const Geometry &geometry, const GuidanceSet &guidance,
                                   std::span<const LabelMask> masks, const PointPlacementConfig &cfg,
                                   std::uint64_t seed) {
    geometry.validate();
    std::vector<Vec3> pts = select_contour_points(guidance, cfg, geometry, seed);
    InitialMesh out;
    out.placed_points = pts.size();
    if (cfg.surface_object && cfg.surface_points > 0) {
        const auto it = std::find_if(masks.begin(), masks.end(),
                                     [&](const LabelMask &m) { return m.label == *cfg.surface_object; });
        if (it == masks.end()) throw DataError("no mask labeled '" + *cfg.surface_object + "' for surface points");
        if (!(it->geometry == geometry)) throw DataError("surface mask geometry does not match the image");
        const SurfaceMesh surf = marching_cubes(*it);
        const KdTree placed(pts);
        std::vector<Vec3> cand;
        for (const Vec3 &v : surf.vertices)
            if (placed.nearest(v).distance2 > kMinSeparation * kMinSeparation) cand.push_back(v);
        for (std::size_t k : farthest_point_subset(cand, static_cast<std::size_t>(cfg.surface_points)))
            pts.push_back(cand[k]);
        out.surface_points = pts.size() - out.placed_points;
    }
    const Vec3 pad{cfg.bbox_padding_mm, cfg.bbox_padding_mm, cfg.bbox_padding_mm};
    Box box{geometry.lower_mm() - pad, geometry.upper_mm() + pad};
    if (cfg.bbox_padding_mm == 0.0) {
        // Corners must not coincide with Sobol points on the region boundary.
        box.lo -= geometry.spacing_mm * 1e-3;
        box.hi += geometry.spacing_mm * 1e-3;
    }
    for (const Vec3 &p : pts)
        for (std::size_t a = 0; a < 3; ++a)
            if (p[a] <= box.lo[a] || p[a] >= box.hi[a]) throw DataError("mesh point lies outside the padded image box");
    Tetrahedralization tz = delaunay_tetrahedralize(pts, box);
    auto topo = std::make_shared<TetTopology>(static_cast<int>(tz.points.size()), std::move(tz.tets));
    out.genotype = make_identity_genotype(std::move(topo), std::move(tz.points));
    out.signs = compute_reference_signs(out.genotype);
    return out;
}

} // namespace morea
