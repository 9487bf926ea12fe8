#include "morea/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "morea/error.hpp"
#include "morea/metrics.hpp"

namespace morea {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Radial field ------------------------------------------------------------------

double RadialField::radial(double r) const {
    if (r <= r0) return r * (r1 / r0);
    if (r >= falloff) return r;
    const double L = falloff - r0;
    const double t = (r - r0) / L;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * r1 + (t3 - 2 * t2 + t) * L * (r1 / r0) + (-2 * t3 + 3 * t2) * falloff +
           (t3 - t2) * L;
}

double RadialField::radial_derivative(double r) const {
    if (r < r0) return r1 / r0;
    if (r > falloff) return 1.0;
    const double L = falloff - r0;
    const double t = (r - r0) / L;
    const double t2 = t * t;
    // d/dr of the Hermite blend (chain rule: dt/dr = 1/L).
    return ((6 * t2 - 6 * t) * r1 + (3 * t2 - 4 * t + 1) * L * (r1 / r0) + (-6 * t2 + 6 * t) * falloff +
            (3 * t2 - 2 * t) * L) /
           L;
}

double RadialField::radial_inverse(double rho) const {
    if (rho <= r1) return rho * (r0 / r1);
    if (rho >= falloff) return rho;
    double lo = r0, hi = falloff;
    for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (radial(mid) < rho ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

void RadialField::validate() const {
    if (!(r1 > 0.0 && r1 < r0 && r0 < falloff)) throw ConfigError("radial field needs 0 < R1 < R0 < falloff");
    for (int i = 0; i <= 1000; ++i) {
        const double r = r0 + (falloff - r0) * i / 1000.0;
        if (!(radial_derivative(r) > 0.0)) throw ConfigError("radial field is not monotone; increase the falloff");
    }
}

Vec3 RadialField::forward(const Vec3 &x) const {
    const Vec3 d = x - center;
    const double r = norm(d);
    if (r == 0.0) return x;
    return center + d * (radial(r) / r);
}

Vec3 RadialField::inverse(const Vec3 &y) const {
    const Vec3 d = y - center;
    const double rho = norm(d);
    if (rho == 0.0) return y;
    return center + d * (radial_inverse(rho) / rho);
}

// Shapes ------------------------------------------------------------------------

bool SynthObject::contains(const Vec3 &p) const {
    const Vec3 d = p - center;
    switch (shape) {
    case ShapeKind::Ball:
        return norm2(d) <= size.x * size.x;
    case ShapeKind::Ellipsoid:
        return (d.x / size.x) * (d.x / size.x) + (d.y / size.y) * (d.y / size.y) + (d.z / size.z) * (d.z / size.z) <=
               1.0;
    case ShapeKind::Box:
        return std::abs(d.x) <= size.x && std::abs(d.y) <= size.y && std::abs(d.z) <= size.z;
    }
    return false;
}

namespace {

Vec3 half_extent(const SynthObject &o) { return o.shape == ShapeKind::Ball ? Vec3{o.size.x, o.size.x, o.size.x} : o.size; }

const char *shape_name(ShapeKind s) {
    switch (s) {
    case ShapeKind::Ball: return "ball";
    case ShapeKind::Ellipsoid: return "ellipsoid";
    case ShapeKind::Box: return "box";
    }
    return "?";
}

ShapeKind parse_shape(const std::string &s) {
    if (s == "ball") return ShapeKind::Ball;
    if (s == "ellipsoid") return ShapeKind::Ellipsoid;
    if (s == "box") return ShapeKind::Box;
    throw ConfigError("unknown shape '" + s + "'");
}

} // namespace

void SynthSpec::validate() const {
    try {
        geometry.validate();
    } catch (const DataError &e) {
        throw ConfigError(e.what());
    }
    field.validate();
    if (objects.empty()) throw ConfigError("synth spec has no objects");
    if (!(guidance_density > 0.0 && guidance_density <= 1.0)) throw ConfigError("guidance_density must be in (0, 1]");
    if (landmark_count < 0) throw ConfigError("landmark_count must be >= 0");
    const Vec3 lo = geometry.lower_mm();
    const Vec3 hi = geometry.upper_mm();
    for (const SynthObject &o : objects) {
        if (o.label.empty()) throw ConfigError("synth object without label");
        if (!(o.size.x > 0.0) || (o.shape != ShapeKind::Ball && (!(o.size.y > 0.0) || !(o.size.z > 0.0))))
            throw ConfigError("object '" + o.label + "' has a non-positive size");
        if (!(o.intensity >= 0.0 && o.intensity <= 1.0)) throw ConfigError("object intensity must be in [0, 1]");
        if (!(o.elasticity > 0.0)) throw ConfigError("object elasticity must be positive");
        const Vec3 h = half_extent(o);
        for (std::size_t a = 0; a < 3; ++a)
            if (o.center[a] - h[a] < lo[a] || o.center[a] + h[a] > hi[a])
                throw ConfigError("object '" + o.label + "' leaves the image bounds");
    }
    for (std::size_t i = 0; i < objects.size(); ++i)
        for (std::size_t j = i + 1; j < objects.size(); ++j)
            if (objects[i].label == objects[j].label) throw ConfigError("duplicate object label '" + objects[i].label + "'");
}

SynthSpec default_synth_spec() {
    SynthSpec s;
    s.geometry.dims = {64, 64, 64};
    s.geometry.spacing_mm = {1.5, 1.5, 1.5};
    const double mid = 31.5 * 1.5;
    s.objects = {
        {"body", ShapeKind::Ellipsoid, {mid, mid, mid}, {45.0, 44.0, 45.0}, 0.3, 1.0, false},
        {"bowel", ShapeKind::Ellipsoid, {18.0, 78.0, mid}, {8.0, 11.0, 18.0}, 0.45, 1.0, true},
        {"bladder", ShapeKind::Ball, {54.0, 50.0, mid}, {30.0, 0.0, 0.0}, 0.6, 0.5, true},
        {"bone", ShapeKind::Box, {16.0, 16.0, mid}, {7.0, 7.0, 20.0}, 1.0, 10.0, true},
    };
    s.field.center = {54.0, 50.0, mid};
    s.field.r0 = 20 * 1.5;
    s.field.r1 = 14 * 1.5;
    s.field.falloff = 40.0;
    return s;
}

const LabelMask *ProblemBundle::source_mask(const std::string &label) const {
    for (const LabelMask &m : source_masks)
        if (m.label == label) return &m;
    return nullptr;
}

const LabelMask *ProblemBundle::target_mask(const std::string &label) const {
    for (const LabelMask &m : target_masks)
        if (m.label == label) return &m;
    return nullptr;
}

DeformationVectorField sample_radial_field(const RadialField &f, const Geometry &g, Direction d) {
    DeformationVectorField out(g, d);
    std::fill(out.coverage.data.begin(), out.coverage.data.end(), std::uint8_t{1});
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const Vec3 c = g.world(i, j, k);
                out.at(i, j, k) = (d == Direction::Forward ? f.forward(c) : f.inverse(c)) - c;
            }
    return out;
}

double min_jacobian_determinant(const RadialField &f, const Geometry &g) {
    double best = std::numeric_limits<double>::infinity();
    const double h = 1e-4 * std::min({g.spacing_mm.x, g.spacing_mm.y, g.spacing_mm.z});
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const Vec3 c = g.world(i, j, k);
                Vec3 col[3];
                for (std::size_t a = 0; a < 3; ++a) {
                    Vec3 e;
                    e[a] = h;
                    col[a] = (f.forward(c + e) - f.forward(c - e)) / (2 * h);
                }
                best = std::min(best, dot(col[0], cross(col[1], col[2])));
            }
    return best;
}

ProblemBundle generate_case(const SynthSpec &spec) {
    spec.validate();
    const Geometry &g = spec.geometry;
    ProblemBundle p;
    p.source = Volume(g);
    p.target = Volume(g);
    for (const SynthObject &o : spec.objects) {
        p.source_masks.emplace_back(g, o.label);
        p.target_masks.emplace_back(g, o.label);
        p.elasticity[o.label] = o.elasticity;
    }
    // Source content is analytic; the target reads it through the inverse map.
    const auto paint = [&](const Vec3 &x, Volume &img, std::vector<LabelMask> &masks, std::size_t idx) {
        float value = 0.0f;
        for (std::size_t n = 0; n < spec.objects.size(); ++n)
            if (spec.objects[n].contains(x)) {
                value = static_cast<float>(spec.objects[n].intensity);
                masks[n].data[idx] = 1;
            }
        img.data[idx] = value;
    };
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const std::size_t idx = g.index(i, j, k);
                const Vec3 c = g.world(i, j, k);
                paint(c, p.source, p.source_masks, idx);
                paint(spec.field.inverse(c), p.target, p.target_masks, idx);
            }

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t n = 0; n < spec.objects.size(); ++n) {
        if (!spec.objects[n].guidance) continue;
        if (p.source_masks[n].count() == 0 || p.target_masks[n].count() == 0) continue;
        GuidancePair pair{spec.objects[n].label, {}, {}};
        for (const Vec3 &q : surface_points_from_mask(p.source_masks[n]))
            if (spec.guidance_density >= 1.0 || u(rng) < spec.guidance_density) pair.source_points.push_back(q);
        for (const Vec3 &q : surface_points_from_mask(p.target_masks[n]))
            if (spec.guidance_density >= 1.0 || u(rng) < spec.guidance_density) pair.target_points.push_back(q);
        if (pair.source_points.empty() || pair.target_points.empty()) continue;
        p.guidance.pairs.push_back(std::move(pair));
    }

    // Landmarks inside the body of the cropped interior, where the field barely moves.
    const Vec3 lo = g.lower_mm() + Vec3{15, 15, 15};
    const Vec3 hi = g.upper_mm() - Vec3{15, 15, 15};
    const SynthObject *body = &spec.objects.front();
    for (int tries = 0; static_cast<int>(p.landmarks.size()) < spec.landmark_count; ++tries) {
        if (tries > 1000000) throw ConfigError("cannot place landmarks: no low-deformation region");
        const Vec3 x{lo.x + u(rng) * (hi.x - lo.x), lo.y + u(rng) * (hi.y - lo.y), lo.z + u(rng) * (hi.z - lo.z)};
        if (!body->contains(x)) continue;
        if (norm(spec.field.displacement(x)) > spec.landmark_max_displacement_mm) continue;
        p.landmarks.push_back({x, spec.field.forward(x)});
    }

    p.field = spec.field;
    p.truth_forward = sample_radial_field(spec.field, g, Direction::Forward);
    p.truth_inverse = sample_radial_field(spec.field, g, Direction::Inverse);
    return p;
}

DvfError analytic_dvf_error(const DeformationVectorField &dvf, const RadialField &f, double margin_mm) {
    const Geometry &g = dvf.geometry;
    const auto m = margin_voxels(g, margin_mm);
    std::vector<double> errs;
    for (int k = m[2]; k < g.dims[2] - m[2]; ++k)
        for (int j = m[1]; j < g.dims[1] - m[1]; ++j)
            for (int i = m[0]; i < g.dims[0] - m[0]; ++i) {
                if (!dvf.coverage.data.empty() && dvf.coverage.at(i, j, k) == 0) continue;
                const Vec3 c = g.world(i, j, k);
                const Vec3 truth = (dvf.direction == Direction::Forward ? f.forward(c) : f.inverse(c)) - c;
                errs.push_back(distance(dvf.at(i, j, k), truth));
            }
    DvfError out;
    out.voxels = errs.size();
    if (errs.empty()) return out;
    for (double e : errs) out.mean_mm += e;
    out.mean_mm /= static_cast<double>(errs.size());
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(errs.size())));
    std::nth_element(errs.begin(), errs.begin() + static_cast<std::ptrdiff_t>(rank - 1), errs.end());
    out.p95_mm = errs[rank - 1];
    return out;
}

// Persistence ---------------------------------------------------------------------

namespace {

json vec_json(const Vec3 &v) { return json::array({v.x, v.y, v.z}); }

Vec3 json_vec(const json &j) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError("expected a 3-vector");
    return {v[0], v[1], v[2]};
}

json field_json(const RadialField &f) {
    return {{"center_mm", vec_json(f.center)}, {"r0_mm", f.r0}, {"r1_mm", f.r1}, {"falloff_mm", f.falloff}};
}

RadialField json_field(const json &j) {
    RadialField f;
    f.center = json_vec(j.at("center_mm"));
    f.r0 = j.at("r0_mm").get<double>();
    f.r1 = j.at("r1_mm").get<double>();
    f.falloff = j.at("falloff_mm").get<double>();
    return f;
}

void write_text(const fs::path &path, const std::string &text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw RuntimeFailure("cannot write " + path.string());
    f << text;
}

json read_json(const fs::path &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path.string());
    try {
        return json::parse(f);
    } catch (const json::exception &e) {
        throw DataError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

} // namespace

void save_synth_spec(const fs::path &path, const SynthSpec &s) {
    json j;
    j["dims"] = s.geometry.dims;
    j["spacing_mm"] = vec_json(s.geometry.spacing_mm);
    j["origin_mm"] = vec_json(s.geometry.origin_mm);
    j["objects"] = json::array();
    for (const SynthObject &o : s.objects)
        j["objects"].push_back({{"label", o.label},
                                {"shape", shape_name(o.shape)},
                                {"center_mm", vec_json(o.center)},
                                {"size_mm", vec_json(o.size)},
                                {"intensity", o.intensity},
                                {"elasticity", o.elasticity},
                                {"guidance", o.guidance}});
    j["field"] = field_json(s.field);
    j["guidance_density"] = s.guidance_density;
    j["landmark_count"] = s.landmark_count;
    j["landmark_max_displacement_mm"] = s.landmark_max_displacement_mm;
    j["seed"] = s.seed;
    write_text(path, j.dump(2) + "\n");
}

SynthSpec load_synth_spec(const fs::path &path) {
    const json j = read_json(path);
    SynthSpec s = default_synth_spec();
    try {
        if (j.contains("dims")) s.geometry.dims = j.at("dims").get<std::array<int, 3>>();
        if (j.contains("spacing_mm")) s.geometry.spacing_mm = json_vec(j.at("spacing_mm"));
        if (j.contains("origin_mm")) s.geometry.origin_mm = json_vec(j.at("origin_mm"));
        if (j.contains("objects")) {
            s.objects.clear();
            for (const auto &o : j.at("objects")) {
                SynthObject x;
                x.label = o.at("label").get<std::string>();
                x.shape = parse_shape(o.at("shape").get<std::string>());
                x.center = json_vec(o.at("center_mm"));
                x.size = json_vec(o.at("size_mm"));
                x.intensity = o.value("intensity", 0.5);
                x.elasticity = o.value("elasticity", 1.0);
                x.guidance = o.value("guidance", true);
                s.objects.push_back(x);
            }
        }
        if (j.contains("field")) s.field = json_field(j.at("field"));
        s.guidance_density = j.value("guidance_density", s.guidance_density);
        s.landmark_count = j.value("landmark_count", s.landmark_count);
        s.landmark_max_displacement_mm = j.value("landmark_max_displacement_mm", s.landmark_max_displacement_mm);
        s.seed = j.value("seed", s.seed);
    } catch (const json::exception &e) {
        throw ConfigError("invalid synth spec " + path.string() + ": " + e.what());
    }
    s.validate();
    return s;
}

void save_problem(const fs::path &dir, const ProblemBundle &p) {
    fs::create_directories(dir / "masks");
    json j;
    j["source"] = "source";
    j["target"] = "target";
    save_volume(dir / "source", p.source);
    save_volume(dir / "target", p.target);
    j["masks"] = json::array();
    for (const LabelMask &m : p.source_masks) {
        const LabelMask *t = p.target_mask(m.label);
        json e{{"label", m.label}, {"source", "masks/source_" + m.label}};
        save_mask(dir / ("masks/source_" + m.label), m);
        if (t) {
            e["target"] = "masks/target_" + m.label;
            save_mask(dir / ("masks/target_" + m.label), *t);
        }
        j["masks"].push_back(e);
    }
    j["guidance"] = "guidance.json";
    save_guidance(dir / "guidance.json", p.guidance);
    j["landmarks"] = "landmarks.json";
    save_landmarks(dir / "landmarks.json", p.landmarks);
    j["elasticity"] = p.elasticity;
    if (p.field) j["radial_field"] = field_json(*p.field);
    if (p.truth_forward) {
        j["truth_forward"] = "truth_forward";
        save_dvf(dir / "truth_forward", *p.truth_forward);
    }
    if (p.truth_inverse) {
        j["truth_inverse"] = "truth_inverse";
        save_dvf(dir / "truth_inverse", *p.truth_inverse);
    }
    write_text(dir / "problem.json", j.dump(2) + "\n");
}

ProblemBundle load_problem(const fs::path &dir) {
    const json j = read_json(dir / "problem.json");
    ProblemBundle p;
    try {
        p.source = load_volume(dir / j.at("source").get<std::string>());
        p.target = load_volume(dir / j.at("target").get<std::string>());
        for (const auto &m : j.value("masks", json::array())) {
            const auto label = m.at("label").get<std::string>();
            LabelMask s = load_mask(dir / m.at("source").get<std::string>());
            s.label = label;
            p.source_masks.push_back(std::move(s));
            if (m.contains("target")) {
                LabelMask t = load_mask(dir / m.at("target").get<std::string>());
                t.label = label;
                p.target_masks.push_back(std::move(t));
            }
        }
        if (j.contains("guidance")) p.guidance = load_guidance(dir / j.at("guidance").get<std::string>());
        if (j.contains("landmarks")) p.landmarks = load_landmarks(dir / j.at("landmarks").get<std::string>());
        if (j.contains("elasticity")) p.elasticity = j.at("elasticity").get<std::map<std::string, double>>();
        if (j.contains("radial_field")) p.field = json_field(j.at("radial_field"));
        if (j.contains("truth_forward")) p.truth_forward = load_dvf(dir / j.at("truth_forward").get<std::string>());
        if (j.contains("truth_inverse")) p.truth_inverse = load_dvf(dir / j.at("truth_inverse").get<std::string>());
    } catch (const json::exception &e) {
        throw DataError("invalid problem manifest in " + dir.string() + ": " + e.what());
    }
    for (const LabelMask &m : p.source_masks)
        if (!(m.geometry == p.source.geometry)) throw DataError("mask '" + m.label + "' does not match the source geometry");
    for (const LabelMask &m : p.target_masks)
        if (!(m.geometry == p.target.geometry)) throw DataError("mask '" + m.label + "' does not match the target geometry");
    return p;
}

} // namespace morea
