#include "morea/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "morea/error.hpp"

namespace morea {

namespace fs = std::filesystem;
using nlohmann::json;

const char *side_name(Side s) { return s == Side::Source ? "source" : "target"; }
const char *direction_name(Direction d) { return d == Direction::Forward ? "forward" : "inverse"; }

TetTopology::TetTopology(int num_points, std::vector<Tet> tets) : num_points_(num_points), tets_(std::move(tets)) {
    if (num_points_ < 4) throw DataError("a tetrahedral mesh needs at least 4 points");
    std::vector<int> counts(static_cast<std::size_t>(num_points_) + 1, 0);
    for (const Tet &t : tets_) {
        for (int i = 0; i < 4; ++i) {
            if (t[static_cast<std::size_t>(i)] < 0 || t[static_cast<std::size_t>(i)] >= num_points_)
                throw DataError("tet vertex index out of range");
            for (int j = i + 1; j < 4; ++j)
                if (t[static_cast<std::size_t>(i)] == t[static_cast<std::size_t>(j)])
                    throw DataError("tet has repeated vertices");
            ++counts[static_cast<std::size_t>(t[static_cast<std::size_t>(i)]) + 1];
        }
    }
    incident_offsets_.assign(counts.size(), 0);
    for (std::size_t i = 1; i < counts.size(); ++i) incident_offsets_[i] = incident_offsets_[i - 1] + counts[i];
    incident_.assign(static_cast<std::size_t>(incident_offsets_.back()), 0);
    std::vector<int> fill(incident_offsets_.begin(), incident_offsets_.end() - 1);
    for (std::size_t t = 0; t < tets_.size(); ++t)
        for (int v : tets_[t]) incident_[static_cast<std::size_t>(fill[static_cast<std::size_t>(v)]++)] = static_cast<int>(t);

    // Face adjacency keyed by the sorted vertex triple.
    neighbors_.assign(tets_.size(), {-1, -1, -1, -1});
    std::unordered_map<std::uint64_t, std::pair<int, int>> open;
    open.reserve(tets_.size() * 2);
    for (std::size_t t = 0; t < tets_.size(); ++t) {
        for (int f = 0; f < 4; ++f) {
            std::array<std::uint64_t, 3> v{};
            for (int k = 0; k < 3; ++k)
                v[static_cast<std::size_t>(k)] = static_cast<std::uint64_t>(
                    tets_[t][static_cast<std::size_t>(kTetFaces[static_cast<std::size_t>(f)][static_cast<std::size_t>(k)])]);
            std::sort(v.begin(), v.end());
            const std::uint64_t key = (v[0] << 42) | (v[1] << 21) | v[2];
            auto [it, inserted] = open.try_emplace(key, static_cast<int>(t), f);
            if (!inserted) {
                const auto [other, of] = it->second;
                if (other < 0) throw DataError("a face is shared by more than two tets");
                neighbors_[t][static_cast<std::size_t>(f)] = other;
                neighbors_[static_cast<std::size_t>(other)][static_cast<std::size_t>(of)] = static_cast<int>(t);
                it->second = {-1, -1};
            }
        }
    }
}

std::vector<std::array<int, 2>> TetTopology::unique_edges() const {
    std::vector<std::array<int, 2>> edges;
    edges.reserve(tets_.size() * 6);
    for (const Tet &t : tets_) {
        for (const auto &e : kTetEdges) {
            int a = t[static_cast<std::size_t>(e[0])];
            int b = t[static_cast<std::size_t>(e[1])];
            if (a > b) std::swap(a, b);
            edges.push_back({a, b});
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

double signed_volume(const Vec3 &p0, const Vec3 &p1, const Vec3 &p2, const Vec3 &p3) {
    return dot(p1 - p0, cross(p2 - p0, p3 - p0)) / 6.0;
}

std::array<double, 10> tet_edge_lengths(const Vec3 &p0, const Vec3 &p1, const Vec3 &p2, const Vec3 &p3) {
    const std::array<Vec3, 4> p{p0, p1, p2, p3};
    std::array<double, 10> len{};
    for (std::size_t e = 0; e < 6; ++e)
        len[e] = distance(p[static_cast<std::size_t>(kTetEdges[e][0])], p[static_cast<std::size_t>(kTetEdges[e][1])]);
    const Vec3 sum = p0 + p1 + p2 + p3;
    for (std::size_t i = 0; i < 4; ++i) {
        const Vec3 face_centroid = (sum - p[i]) / 3.0;
        len[6 + i] = distance(p[i], face_centroid);
    }
    return len;
}

DualMeshGenotype make_identity_genotype(std::shared_ptr<const TetTopology> topology, std::vector<Vec3> points) {
    if (!topology || static_cast<std::size_t>(topology->num_points()) != points.size())
        throw DataError("point count does not match topology");
    DualMeshGenotype g;
    g.topology = std::move(topology);
    g.source = points;
    g.target = std::move(points);
    return g;
}

ReferenceSigns compute_reference_signs(const DualMeshGenotype &g) {
    ReferenceSigns ref;
    const std::size_t nt = g.topology->num_tets();
    ref.source.resize(nt);
    ref.target.resize(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        const double vs = g.tet_volume(Side::Source, t);
        const double vt = g.tet_volume(Side::Target, t);
        if (vs == 0.0 || vt == 0.0) throw DataError("degenerate tet in the reference configuration");
        ref.source[t] = vs > 0.0 ? 1 : -1;
        ref.target[t] = vt > 0.0 ? 1 : -1;
    }
    return ref;
}

std::vector<FoldViolation> detect_folds(const DualMeshGenotype &g, Side side, const ReferenceSigns &ref) {
    std::vector<FoldViolation> out;
    for (std::size_t t = 0; t < g.topology->num_tets(); ++t) {
        const double v = g.tet_volume(side, t);
        if (violates(v, ref.sign(side, t))) out.push_back({static_cast<int>(t), std::abs(v)});
    }
    return out;
}

std::vector<FoldViolation> detect_folds(const DualMeshGenotype &g, Side side, const ReferenceSigns &ref,
                                        std::span<const int> tets) {
    std::vector<FoldViolation> out;
    for (int t : tets) {
        const double v = g.tet_volume(side, static_cast<std::size_t>(t));
        if (violates(v, ref.sign(side, static_cast<std::size_t>(t)))) out.push_back({t, std::abs(v)});
    }
    return out;
}

bool fold_free(const DualMeshGenotype &g, const ReferenceSigns &ref) {
    for (std::size_t t = 0; t < g.topology->num_tets(); ++t) {
        if (violates(g.tet_volume(Side::Source, t), ref.source[t])) return false;
        if (violates(g.tet_volume(Side::Target, t), ref.target[t])) return false;
    }
    return true;
}

std::array<double, 4> barycentric_coords(const std::array<Vec3, 4> &tet, const Vec3 &p) {
    const Vec3 e1 = tet[1] - tet[0];
    const Vec3 e2 = tet[2] - tet[0];
    const Vec3 e3 = tet[3] - tet[0];
    const Vec3 d = p - tet[0];
    const Vec3 c23 = cross(e2, e3);
    const double det = dot(e1, c23);
    const double scale = std::max({norm2(e1), norm2(e2), norm2(e3)});
    if (!(std::abs(det) > 1e-14 * scale * std::sqrt(scale))) throw DataError("degenerate tetrahedron");
    const double w1 = dot(d, c23) / det;
    const double w2 = dot(e1, cross(d, e3)) / det;
    const double w3 = dot(e1, cross(e2, d)) / det;
    return {1.0 - w1 - w2 - w3, w1, w2, w3};
}

// PointLocator ----------------------------------------------------------------

PointLocator::PointLocator(const DualMeshGenotype &g, Side side) : g_(&g), side_(side) {
    const auto &c = g.coords(side);
    const std::size_t nt = g.topology->num_tets();
    Vec3 lo{1e300, 1e300, 1e300};
    Vec3 hi{-1e300, -1e300, -1e300};
    for (const Vec3 &p : c) {
        for (std::size_t a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    }
    lo_ = lo;
    const int per_axis = std::max(1, static_cast<int>(std::cbrt(static_cast<double>(nt)) * 1.5));
    for (std::size_t a = 0; a < 3; ++a) {
        res_[a] = per_axis;
        cell_[a] = std::max((hi[a] - lo[a]) / per_axis, 1e-12);
    }
    const auto cell_of = [&](double v, std::size_t a) {
        return std::clamp(static_cast<int>(std::floor((v - lo_[a]) / cell_[a])), 0, res_[a] - 1);
    };
    const std::size_t ncell = static_cast<std::size_t>(res_[0]) * static_cast<std::size_t>(res_[1]) *
                              static_cast<std::size_t>(res_[2]);
    std::vector<std::array<int, 6>> ranges(nt);
    std::vector<int> counts(ncell + 1, 0);
    for (std::size_t t = 0; t < nt; ++t) {
        const auto p = g.tet_points(side, t);
        std::array<int, 6> r{};
        for (std::size_t a = 0; a < 3; ++a) {
            double mn = p[0][a], mx = p[0][a];
            for (const Vec3 &q : p) {
                mn = std::min(mn, q[a]);
                mx = std::max(mx, q[a]);
            }
            const double pad = 1e-6 * (mx - mn) + 1e-9;
            r[a] = cell_of(mn - pad, a);
            r[a + 3] = cell_of(mx + pad, a);
        }
        ranges[t] = r;
        for (int k = r[2]; k <= r[5]; ++k)
            for (int j = r[1]; j <= r[4]; ++j)
                for (int i = r[0]; i <= r[3]; ++i)
                    ++counts[static_cast<std::size_t>(i + res_[0] * (j + res_[1] * k)) + 1];
    }
    bucket_offsets_.assign(ncell + 1, 0);
    for (std::size_t i = 1; i <= ncell; ++i) bucket_offsets_[i] = bucket_offsets_[i - 1] + counts[i];
    bucket_tets_.assign(static_cast<std::size_t>(bucket_offsets_.back()), 0);
    std::vector<int> fill(bucket_offsets_.begin(), bucket_offsets_.end() - 1);
    for (std::size_t t = 0; t < nt; ++t) {
        const auto &r = ranges[t];
        for (int k = r[2]; k <= r[5]; ++k)
            for (int j = r[1]; j <= r[4]; ++j)
                for (int i = r[0]; i <= r[3]; ++i)
                    bucket_tets_[static_cast<std::size_t>(fill[static_cast<std::size_t>(i + res_[0] * (j + res_[1] * k))]++)] =
                        static_cast<int>(t);
    }
}

std::array<double, 4> PointLocator::weights(int tet, const Vec3 &p) const {
    return barycentric_coords(g_->tet_points(side_, static_cast<std::size_t>(tet)), p);
}

bool PointLocator::contains(int tet, const Vec3 &p, std::array<double, 4> &w) const {
    const auto pts = g_->tet_points(side_, static_cast<std::size_t>(tet));
    if (signed_volume(pts[0], pts[1], pts[2], pts[3]) == 0.0) return false;
    try {
        w = barycentric_coords(pts, p);
    } catch (const DataError &) {
        return false;
    }
    return w[0] >= -kInsideTolerance && w[1] >= -kInsideTolerance && w[2] >= -kInsideTolerance &&
           w[3] >= -kInsideTolerance;
}

std::optional<int> PointLocator::walk(int start, const Vec3 &p) {
    const std::size_t nt = g_->topology->num_tets();
    const int max_steps = 64 + 4 * static_cast<int>(std::cbrt(static_cast<double>(nt)));
    int t = start;
    std::array<double, 4> w{};
    for (int step = 0; step < max_steps; ++step) {
        if (contains(t, p, w)) return t;
        int worst = 0;
        for (int i = 1; i < 4; ++i)
            if (w[static_cast<std::size_t>(i)] < w[static_cast<std::size_t>(worst)]) worst = i;
        const int next = g_->topology->neighbor(static_cast<std::size_t>(t), worst);
        if (next < 0) return std::nullopt;
        t = next;
    }
    return std::nullopt;
}

std::optional<int> PointLocator::bucket_search(const Vec3 &p) const {
    int idx[3];
    for (std::size_t a = 0; a < 3; ++a) {
        const double c = std::floor((p[a] - lo_[a]) / cell_[a]);
        if (c < -1.0 || c > res_[a]) return std::nullopt;
        idx[a] = std::clamp(static_cast<int>(c), 0, res_[a] - 1);
    }
    const std::size_t cell = static_cast<std::size_t>(idx[0] + res_[0] * (idx[1] + res_[1] * idx[2]));
    std::array<double, 4> w{};
    for (int k = bucket_offsets_[cell]; k < bucket_offsets_[cell + 1]; ++k) {
        const int t = bucket_tets_[static_cast<std::size_t>(k)];
        if (contains(t, p, w)) return t;
    }
    return std::nullopt;
}

std::optional<int> PointLocator::locate(const Vec3 &p) {
    if (g_->topology->num_tets() == 0) return std::nullopt;
    std::optional<int> hit;
    std::array<double, 4> w{};
    if (contains(hint_, p, w)) {
        hit = hint_;
    } else {
        try {
            hit = walk(hint_, p);
        } catch (const DataError &) {
            hit.reset();
        }
        if (!hit) hit = bucket_search(p);
    }
    if (hit) hint_ = *hit;
    return hit;
}

std::optional<int> PointLocator::locate_brute_force(const Vec3 &p) const {
    std::array<double, 4> w{};
    for (std::size_t t = 0; t < g_->topology->num_tets(); ++t)
        if (contains(static_cast<int>(t), p, w)) return static_cast<int>(t);
    return std::nullopt;
}

std::optional<Vec3> try_transform_point(const DualMeshGenotype &g, PointLocator &from_side, const Vec3 &p,
                                        Direction direction) {
    const auto tet = from_side.locate(p);
    if (!tet) return std::nullopt;
    const auto w = from_side.weights(*tet, p);
    const auto q = g.tet_points(to_side(direction), static_cast<std::size_t>(*tet));
    return q[0] * w[0] + q[1] * w[1] + q[2] * w[2] + q[3] * w[3];
}

Vec3 transform_point(const DualMeshGenotype &g, const Vec3 &p, Direction direction) {
    PointLocator loc(g, from_side(direction));
    const auto q = try_transform_point(g, loc, p, direction);
    if (!q) throw DataError("point lies outside the mesh hull");
    return *q;
}

DeformationVectorField rasterize_dvf(const DualMeshGenotype &g, Direction direction, const Geometry &geometry) {
    DeformationVectorField dvf(geometry, direction);
    PointLocator loc(g, from_side(direction));
    for (int k = 0; k < geometry.dims[2]; ++k) {
        for (int j = 0; j < geometry.dims[1]; ++j) {
            for (int i = 0; i < geometry.dims[0]; ++i) {
                const Vec3 c = geometry.world(i, j, k);
                const auto q = try_transform_point(g, loc, c, direction);
                if (!q) continue;
                const std::size_t idx = geometry.index(i, j, k);
                dvf.data[idx] = *q - c;
                dvf.coverage.data[idx] = 1;
            }
        }
    }
    return dvf;
}

// Persistence -----------------------------------------------------------------

fs::path dvf_coverage_path(const fs::path &path) {
    auto header = volume_paths(path).header.string();
    header.resize(header.size() - std::string(".vol.json").size());
    return fs::path(header + ".coverage.vol.json");
}

void save_dvf(const fs::path &path, const DeformationVectorField &dvf) {
    dvf.geometry.validate();
    const auto paths = volume_paths(path);
    json j;
    j["dims"] = {dvf.geometry.dims[0], dvf.geometry.dims[1], dvf.geometry.dims[2]};
    j["spacing_mm"] = {dvf.geometry.spacing_mm.x, dvf.geometry.spacing_mm.y, dvf.geometry.spacing_mm.z};
    j["origin_mm"] = {dvf.geometry.origin_mm.x, dvf.geometry.origin_mm.y, dvf.geometry.origin_mm.z};
    j["dtype"] = "f32x3";
    j["order"] = "x-fastest";
    j["direction"] = direction_name(dvf.direction);
    if (paths.header.has_parent_path()) fs::create_directories(paths.header.parent_path());
    {
        std::ofstream out(paths.header, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + paths.header.string());
        out << j.dump(2) << "\n";
    }
    std::vector<float> buf(dvf.data.size() * 3);
    for (std::size_t i = 0; i < dvf.data.size(); ++i) {
        buf[3 * i] = static_cast<float>(dvf.data[i].x);
        buf[3 * i + 1] = static_cast<float>(dvf.data[i].y);
        buf[3 * i + 2] = static_cast<float>(dvf.data[i].z);
    }
    std::ofstream out(paths.payload, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + paths.payload.string());
    out.write(reinterpret_cast<const char *>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    out.close();
    LabelMask cov = dvf.coverage;
    cov.label = "coverage";
    save_mask(dvf_coverage_path(path), cov);
}

DeformationVectorField load_dvf(const fs::path &path) {
    const auto paths = volume_paths(path);
    std::ifstream hin(paths.header, std::ios::binary);
    if (!hin) throw DataError("cannot open " + paths.header.string());
    json j;
    try {
        j = json::parse(hin);
    } catch (const json::exception &e) {
        throw DataError("invalid DVF header " + paths.header.string() + ": " + e.what());
    }
    Geometry g;
    try {
        const auto dims = j.at("dims").get<std::vector<int>>();
        const auto sp = j.at("spacing_mm").get<std::vector<double>>();
        const auto org = j.value("origin_mm", std::vector<double>{0, 0, 0});
        if (dims.size() != 3 || sp.size() != 3 || org.size() != 3) throw DataError("DVF header needs 3-vectors");
        g.dims = {dims[0], dims[1], dims[2]};
        g.spacing_mm = {sp[0], sp[1], sp[2]};
        g.origin_mm = {org[0], org[1], org[2]};
        if (j.value("dtype", std::string()) != "f32x3") throw DataError("DVF payload must be f32x3");
    } catch (const json::exception &e) {
        throw DataError("invalid DVF header " + paths.header.string() + ": " + e.what());
    }
    g.validate();
    const Direction dir = j.value("direction", std::string("forward")) == "inverse" ? Direction::Inverse : Direction::Forward;
    DeformationVectorField dvf(g, dir);
    std::ifstream in(paths.payload, std::ios::binary | std::ios::ate);
    if (!in) throw DataError("cannot open " + paths.payload.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != g.voxel_count() * 12) throw DataError("DVF payload length does not match header");
    in.seekg(0);
    std::vector<float> buf(g.voxel_count() * 3);
    in.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(bytes));
    for (std::size_t i = 0; i < g.voxel_count(); ++i) dvf.data[i] = {buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]};
    const fs::path cov = dvf_coverage_path(path);
    if (fs::exists(cov)) {
        dvf.coverage = load_mask(cov);
        if (!(dvf.coverage.geometry == g)) throw DataError("DVF coverage mask geometry mismatch");
    } else {
        std::fill(dvf.coverage.data.begin(), dvf.coverage.data.end(), std::uint8_t{1});
    }
    dvf.coverage.label = "coverage";
    return dvf;
}

namespace {

json coords_json(const std::vector<Vec3> &c) {
    json a = json::array();
    for (const auto &p : c) a.push_back({p.x, p.y, p.z});
    return a;
}

std::vector<Vec3> coords_from_json(const json &a) {
    std::vector<Vec3> c;
    c.reserve(a.size());
    for (const auto &e : a) c.push_back({e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>()});
    return c;
}

} // namespace

void save_genotype(const fs::path &path, const DualMeshGenotype &g) {
    json j;
    j["num_points"] = g.num_points();
    json tets = json::array();
    for (const Tet &t : g.topology->tets()) tets.push_back({t[0], t[1], t[2], t[3]});
    j["tets"] = std::move(tets);
    j["source_coords"] = coords_json(g.source);
    j["target_coords"] = coords_json(g.target);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump() << "\n";
}

DualMeshGenotype load_genotype(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        const json j = json::parse(in);
        const int n = j.at("num_points").get<int>();
        std::vector<Tet> tets;
        for (const auto &t : j.at("tets")) tets.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>(), t.at(3).get<int>()});
        DualMeshGenotype g;
        g.topology = std::make_shared<TetTopology>(n, std::move(tets));
        g.source = coords_from_json(j.at("source_coords"));
        g.target = coords_from_json(j.at("target_coords"));
        if (g.source.size() != static_cast<std::size_t>(n) || g.target.size() != static_cast<std::size_t>(n))
            throw DataError("genotype coordinate count does not match num_points");
        return g;
    } catch (const json::exception &e) {
        throw DataError("invalid genotype file " + path.string() + ": " + e.what());
    }
}

} // namespace morea
