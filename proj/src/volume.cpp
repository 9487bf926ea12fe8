#include "morea/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "morea/error.hpp"
#include "morea/kdtree.hpp"

namespace morea {

static_assert(std::endian::native == std::endian::little, "volume payloads are written in host byte order");

using nlohmann::json;
namespace fs = std::filesystem;

void Geometry::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[static_cast<std::size_t>(a)] <= 0) throw DataError("volume dims must be positive");
        if (!(spacing_mm[static_cast<std::size_t>(a)] > 0.0) || !std::isfinite(spacing_mm[static_cast<std::size_t>(a)]))
            throw DataError("volume spacing must be positive");
        if (!std::isfinite(origin_mm[static_cast<std::size_t>(a)])) throw DataError("volume origin must be finite");
    }
}

std::size_t LabelMask::count() const {
    return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

const char *dtype_name(Dtype d) {
    switch (d) {
    case Dtype::F32: return "f32";
    case Dtype::U8: return "u8";
    case Dtype::I16: return "i16";
    case Dtype::F32x3: return "f32x3";
    }
    return "?";
}

namespace {

Dtype parse_dtype(const std::string &s) {
    if (s == "f32") return Dtype::F32;
    if (s == "u8") return Dtype::U8;
    if (s == "i16") return Dtype::I16;
    if (s == "f32x3") return Dtype::F32x3;
    throw DataError("unsupported dtype '" + s + "'");
}

std::size_t dtype_bytes(Dtype d) {
    switch (d) {
    case Dtype::F32: return 4;
    case Dtype::U8: return 1;
    case Dtype::I16: return 2;
    case Dtype::F32x3: return 12;
    }
    return 0;
}

std::string read_text(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<char> read_bytes(const fs::path &p) {
    std::ifstream in(p, std::ios::binary | std::ios::ate);
    if (!in) throw DataError("cannot open " + p.string());
    const auto size = static_cast<std::size_t>(in.tellg());
    std::vector<char> buf(size);
    in.seekg(0);
    in.read(buf.data(), static_cast<std::streamsize>(size));
    return buf;
}

void write_bytes(const fs::path &p, const void *data, std::size_t n) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
    out.write(static_cast<const char *>(data), static_cast<std::streamsize>(n));
}

void write_text(const fs::path &p, const std::string &text) { write_bytes(p, text.data(), text.size()); }

struct Header {
    Geometry geometry;
    Dtype dtype = Dtype::F32;
    std::string label;
};

Header read_header(const fs::path &path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::parse_error &e) {
        throw DataError("malformed volume header " + path.string() + ": " + e.what());
    }
    Header h;
    try {
        const auto dims = j.at("dims").get<std::vector<int>>();
        const auto spacing = j.at("spacing_mm").get<std::vector<double>>();
        const auto origin = j.value("origin_mm", std::vector<double>{0.0, 0.0, 0.0});
        if (dims.size() != 3 || spacing.size() != 3 || origin.size() != 3)
            throw DataError("volume header needs 3 dims, spacing and origin values");
        h.geometry.dims = {dims[0], dims[1], dims[2]};
        h.geometry.spacing_mm = {spacing[0], spacing[1], spacing[2]};
        h.geometry.origin_mm = {origin[0], origin[1], origin[2]};
        h.dtype = parse_dtype(j.value("dtype", std::string("f32")));
        if (j.value("order", std::string("x-fastest")) != "x-fastest")
            throw DataError("only x-fastest voxel order is supported");
        h.label = j.value("label", std::string());
    } catch (const json::exception &e) {
        throw DataError("invalid volume header " + path.string() + ": " + e.what());
    }
    h.geometry.validate();
    return h;
}

void write_header(const fs::path &path, const Geometry &g, Dtype dtype, const std::string &label) {
    json j;
    j["dims"] = {g.dims[0], g.dims[1], g.dims[2]};
    j["spacing_mm"] = {g.spacing_mm.x, g.spacing_mm.y, g.spacing_mm.z};
    j["origin_mm"] = {g.origin_mm.x, g.origin_mm.y, g.origin_mm.z};
    j["dtype"] = dtype_name(dtype);
    j["order"] = "x-fastest";
    if (!label.empty()) j["label"] = label;
    write_text(path, j.dump(2) + "\n");
}

std::vector<char> read_payload(const VolumePaths &paths, const Header &h) {
    auto bytes = read_bytes(paths.payload);
    const std::size_t expected = h.geometry.voxel_count() * dtype_bytes(h.dtype);
    if (bytes.size() != expected) {
        throw DataError("payload " + paths.payload.string() + " holds " + std::to_string(bytes.size()) +
                        " bytes, header implies " + std::to_string(expected));
    }
    return bytes;
}

template <class T>
std::vector<float> decode_as_float(const std::vector<char> &bytes, std::size_t n) {
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        T v;
        std::memcpy(&v, bytes.data() + i * sizeof(T), sizeof(T));
        out[i] = static_cast<float>(v);
    }
    return out;
}

} // namespace

VolumePaths volume_paths(const fs::path &path) {
    std::string s = path.string();
    const auto strip = [&](const std::string &suffix) {
        if (s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
            s.resize(s.size() - suffix.size());
            return true;
        }
        return false;
    };
    if (!strip(".vol.json")) strip(".vol.raw");
    return {fs::path(s + ".vol.json"), fs::path(s + ".vol.raw")};
}

Volume load_volume(const fs::path &path) {
    const auto paths = volume_paths(path);
    const Header h = read_header(paths.header);
    const auto bytes = read_payload(paths, h);
    Volume v;
    v.geometry = h.geometry;
    const std::size_t n = h.geometry.voxel_count();
    switch (h.dtype) {
    case Dtype::F32: v.data = decode_as_float<float>(bytes, n); break;
    case Dtype::U8: v.data = decode_as_float<std::uint8_t>(bytes, n); break;
    case Dtype::I16: v.data = decode_as_float<std::int16_t>(bytes, n); break;
    case Dtype::F32x3: throw DataError(paths.header.string() + " holds a vector field, not a scalar volume");
    }
    return v;
}

void save_volume(const fs::path &path, const Volume &v, Dtype dtype) {
    v.geometry.validate();
    if (v.data.size() != v.geometry.voxel_count()) throw DataError("volume data length does not match dims");
    const auto paths = volume_paths(path);
    std::vector<char> bytes(v.data.size() * dtype_bytes(dtype));
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        switch (dtype) {
        case Dtype::F32: std::memcpy(bytes.data() + 4 * i, &v.data[i], 4); break;
        case Dtype::U8: {
            const auto b = static_cast<std::uint8_t>(std::clamp(std::lround(v.data[i]), 0L, 255L));
            bytes[i] = static_cast<char>(b);
            break;
        }
        case Dtype::I16: {
            const auto s = static_cast<std::int16_t>(std::clamp(std::lround(v.data[i]), -32768L, 32767L));
            std::memcpy(bytes.data() + 2 * i, &s, 2);
            break;
        }
        case Dtype::F32x3: throw DataError("scalar volumes cannot be written as f32x3");
        }
    }
    write_header(paths.header, v.geometry, dtype, "");
    write_bytes(paths.payload, bytes.data(), bytes.size());
}

LabelMask load_mask(const fs::path &path) {
    const auto paths = volume_paths(path);
    const Header h = read_header(paths.header);
    if (h.dtype != Dtype::U8) throw DataError(paths.header.string() + ": masks must be stored as u8");
    const auto bytes = read_payload(paths, h);
    LabelMask m(h.geometry, h.label);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const auto b = static_cast<std::uint8_t>(bytes[i]);
        if (b > 1) throw DataError(paths.payload.string() + ": mask values must be 0 or 1");
        m.data[i] = b;
    }
    if (m.label.empty()) {
        m.label = paths.header.filename().string();
        m.label.resize(m.label.size() - std::string(".vol.json").size());
    }
    return m;
}

void save_mask(const fs::path &path, const LabelMask &m) {
    m.geometry.validate();
    if (m.data.size() != m.geometry.voxel_count()) throw DataError("mask data length does not match dims");
    const auto paths = volume_paths(path);
    write_header(paths.header, m.geometry, Dtype::U8, m.label);
    write_bytes(paths.payload, m.data.data(), m.data.size());
}

Volume resample(const Volume &v, const Vec3 &new_spacing_mm) {
    v.geometry.validate();
    Geometry g;
    g.spacing_mm = new_spacing_mm;
    for (std::size_t a = 0; a < 3; ++a) {
        if (!(new_spacing_mm[a] > 0.0)) throw DataError("resample spacing must be positive");
        const double extent = v.geometry.dims[a] * v.geometry.spacing_mm[a];
        g.dims[a] = std::max(1, static_cast<int>(std::lround(extent / new_spacing_mm[a])));
        // Align the outer voxel faces of both lattices.
        g.origin_mm[a] = v.geometry.origin_mm[a] - 0.5 * v.geometry.spacing_mm[a] + 0.5 * new_spacing_mm[a];
    }
    if (g == v.geometry) return v;
    Volume out(g);
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i)
                out.at(i, j, k) = static_cast<float>(trilinear_sample(v, g.world(i, j, k)));
    return out;
}

std::array<int, 3> margin_voxels(const Geometry &g, double margin_mm) {
    if (margin_mm < 0.0) throw DataError("crop margin must be non-negative");
    std::array<int, 3> m{};
    for (std::size_t a = 0; a < 3; ++a) {
        const double extent = g.dims[a] * g.spacing_mm[a];
        if (2.0 * margin_mm >= extent) throw DataError("crop margin leaves no interior");
        m[a] = static_cast<int>(std::lround(margin_mm / g.spacing_mm[a]));
        if (2 * m[a] >= g.dims[a]) throw DataError("crop margin leaves no interior");
    }
    return m;
}

template <class T>
Grid<T> crop_margin(const Grid<T> &v, double margin_mm) {
    const auto m = margin_voxels(v.geometry, margin_mm);
    Geometry g = v.geometry;
    for (std::size_t a = 0; a < 3; ++a) {
        g.dims[a] = v.geometry.dims[a] - 2 * m[a];
        g.origin_mm[a] = v.geometry.origin_mm[a] + m[a] * v.geometry.spacing_mm[a];
    }
    Grid<T> out(g);
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) out.at(i, j, k) = v.at(i + m[0], j + m[1], k + m[2]);
    return out;
}

template Grid<float> crop_margin(const Grid<float> &, double);
template Grid<double> crop_margin(const Grid<double> &, double);
template Grid<std::uint8_t> crop_margin(const Grid<std::uint8_t> &, double);
template Grid<Vec3> crop_margin(const Grid<Vec3> &, double);

LabelMask crop_margin(const LabelMask &m, double margin_mm) {
    LabelMask out;
    static_cast<Grid<std::uint8_t> &>(out) = crop_margin(static_cast<const Grid<std::uint8_t> &>(m), margin_mm);
    out.label = m.label;
    return out;
}

std::vector<double> squared_distance_field(std::span<const Vec3> points, const Geometry &geometry) {
    if (points.empty()) throw DataError("distance map needs at least one point");
    geometry.validate();
    const KdTree tree(points);
    std::vector<double> out(geometry.voxel_count());
    for (int k = 0; k < geometry.dims[2]; ++k)
        for (int j = 0; j < geometry.dims[1]; ++j)
            for (int i = 0; i < geometry.dims[0]; ++i)
                out[geometry.index(i, j, k)] = tree.nearest(geometry.world(i, j, k)).distance2;
    return out;
}

DistanceMap distance_map_from_points(std::span<const Vec3> points, const Geometry &geometry) {
    DistanceMap m;
    m.geometry = geometry;
    m.data = squared_distance_field(points, geometry);
    for (double &d : m.data) d = std::sqrt(d);
    return m;
}

std::vector<Vec3> foreground_points(const LabelMask &m) {
    std::vector<Vec3> pts;
    const Geometry &g = m.geometry;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i)
                if (m.at(i, j, k)) pts.push_back(g.world(i, j, k));
    return pts;
}

// Guidance ------------------------------------------------------------------

std::size_t GuidanceSet::total_source() const {
    std::size_t n = 0;
    for (const auto &p : pairs) n += p.source_points.size();
    return n;
}

std::size_t GuidanceSet::total_target() const {
    std::size_t n = 0;
    for (const auto &p : pairs) n += p.target_points.size();
    return n;
}

void GuidanceSet::validate() const {
    if (pairs.empty()) throw DataError("guidance set is empty");
    for (const auto &p : pairs) {
        if (p.source_points.empty() || p.target_points.empty())
            throw DataError("guidance pair '" + p.label + "' has an empty side");
    }
}

namespace {

json points_to_json(const std::vector<Vec3> &pts) {
    json arr = json::array();
    for (const auto &p : pts) arr.push_back({p.x, p.y, p.z});
    return arr;
}

std::vector<Vec3> points_from_json(const json &arr) {
    std::vector<Vec3> pts;
    pts.reserve(arr.size());
    for (const auto &e : arr) {
        if (!e.is_array() || e.size() != 3) throw DataError("guidance points must be [x, y, z] triples");
        Vec3 p{e[0].get<double>(), e[1].get<double>(), e[2].get<double>()};
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            throw DataError("guidance point is not finite");
        pts.push_back(p);
    }
    return pts;
}

} // namespace

GuidanceSet load_guidance(const fs::path &path) {
    GuidanceSet g;
    try {
        const json j = json::parse(read_text(path));
        for (const auto &pj : j.at("pairs")) {
            GuidancePair p;
            p.label = pj.at("label").get<std::string>();
            p.source_points = points_from_json(pj.at("source_points"));
            p.target_points = points_from_json(pj.at("target_points"));
            g.pairs.push_back(std::move(p));
        }
    } catch (const json::exception &e) {
        throw DataError("invalid guidance file " + path.string() + ": " + e.what());
    }
    g.validate();
    return g;
}

void save_guidance(const fs::path &path, const GuidanceSet &g) {
    json j;
    j["pairs"] = json::array();
    for (const auto &p : g.pairs) {
        j["pairs"].push_back(
            {{"label", p.label}, {"source_points", points_to_json(p.source_points)},
             {"target_points", points_to_json(p.target_points)}});
    }
    write_text(path, j.dump(1) + "\n");
}

std::vector<LandmarkPair> load_landmarks(const fs::path &path) {
    std::istringstream in(read_text(path));
    std::vector<LandmarkPair> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double v[6];
        for (double &x : v) {
            if (!(ls >> x)) throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 6 numbers");
            if (!std::isfinite(x)) throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-finite value");
        }
        out.push_back({{v[0], v[1], v[2]}, {v[3], v[4], v[5]}});
    }
    return out;
}

void save_landmarks(const fs::path &path, std::span<const LandmarkPair> pairs) {
    std::ostringstream os;
    os.precision(17);
    for (const auto &p : pairs) {
        os << p.source.x << ',' << p.source.y << ',' << p.source.z << ',' << p.target.x << ',' << p.target.y << ','
           << p.target.z << '\n';
    }
    write_text(path, os.str());
}

} // namespace morea
