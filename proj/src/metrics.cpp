#include "morea/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "morea/error.hpp"
#include "morea/kdtree.hpp"

namespace morea {

namespace {

void require_same_geometry(const Geometry &a, const Geometry &b, const char *what) {
    if (!(a == b)) throw DataError(std::string(what) + ": geometry mismatch");
}

double directed_percentile(std::span<const Vec3> from, std::span<const Vec3> to, double percentile) {
    const KdTree tree(to);
    std::vector<double> d(from.size());
    for (std::size_t i = 0; i < from.size(); ++i) d[i] = tree.nearest(from[i]).distance2;
    // Nearest rank: the smallest value with at least p% of the samples at or below it.
    auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * static_cast<double>(d.size()) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, d.size());
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(rank - 1), d.end());
    return std::sqrt(d[rank - 1]);
}

} // namespace

double dice(const LabelMask &a, const LabelMask &b) {
    require_same_geometry(a.geometry, b.geometry, "dice");
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool x = a.data[i] != 0;
        const bool y = b.data[i] != 0;
        na += x;
        nb += y;
        both += x && y;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double hausdorff(std::span<const Vec3> a, std::span<const Vec3> b, double percentile) {
    if (a.empty() || b.empty()) throw DataError("hausdorff: empty point set");
    if (!(percentile > 0.0 && percentile <= 100.0)) throw ConfigError("hausdorff: percentile must be in (0, 100]");
    return std::max(directed_percentile(a, b, percentile), directed_percentile(b, a, percentile));
}

std::vector<Vec3> surface_points_from_mask(const LabelMask &m) {
    const Geometry &g = m.geometry;
    const auto fg = [&](int i, int j, int k) {
        if (i < 0 || j < 0 || k < 0 || i >= g.dims[0] || j >= g.dims[1] || k >= g.dims[2]) return false;
        return m.at(i, j, k) != 0;
    };
    std::vector<Vec3> out;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                if (!fg(i, j, k)) continue;
                if (!fg(i - 1, j, k) || !fg(i + 1, j, k) || !fg(i, j - 1, k) || !fg(i, j + 1, k) ||
                    !fg(i, j, k - 1) || !fg(i, j, k + 1))
                    out.push_back(g.world(i, j, k));
            }
    if (out.empty()) throw DataError("surface of empty mask '" + m.label + "'");
    return out;
}

LabelMask warp_mask(const LabelMask &m, const DeformationVectorField &inverse) {
    require_same_geometry(m.geometry, inverse.geometry, "warp_mask");
    if (inverse.direction != Direction::Inverse) throw DataError("warp_mask needs an inverse DVF");
    const Geometry &g = m.geometry;
    LabelMask out(g, m.label);
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const Vec3 p = g.world(i, j, k) + inverse.at(i, j, k);
                // Outside the grid reads as background rather than clamping.
                const Vec3 u = g.continuous_index(p);
                bool inside = true;
                for (std::size_t a = 0; a < 3; ++a) {
                    const double c = std::floor(u[a] + 0.5);
                    inside = inside && c >= 0.0 && c <= g.dims[a] - 1;
                }
                out.at(i, j, k) = inside ? nearest_sample(m, p) : std::uint8_t{0};
            }
    return out;
}

namespace {

LandmarkStats landmark_stats(std::vector<double> d) {
    LandmarkStats s;
    s.per_pair_mm = std::move(d);
    if (s.per_pair_mm.empty()) return s;
    const auto n = static_cast<double>(s.per_pair_mm.size());
    for (double x : s.per_pair_mm) s.mean_mm += x;
    s.mean_mm /= n;
    for (double x : s.per_pair_mm) s.sd_mm += (x - s.mean_mm) * (x - s.mean_mm);
    s.sd_mm = std::sqrt(s.sd_mm / n);
    return s;
}

} // namespace

LandmarkStats landmark_error(std::span<const LandmarkPair> pairs, const DualMeshGenotype &g) {
    if (pairs.empty()) return {};
    PointLocator loc(g, Side::Source);
    std::vector<double> d;
    for (const LandmarkPair &p : pairs) {
        const auto t = try_transform_point(g, loc, p.source, Direction::Forward);
        if (!t) throw DataError("landmark outside the mesh hull");
        d.push_back(distance(*t, p.target));
    }
    return landmark_stats(std::move(d));
}

LandmarkStats landmark_error(std::span<const LandmarkPair> pairs, const DeformationVectorField &forward) {
    std::vector<double> d;
    for (const LandmarkPair &p : pairs) d.push_back(distance(p.source + sample_dvf(forward, p.source), p.target));
    return landmark_stats(std::move(d));
}

Vec3 sample_dvf(const DeformationVectorField &dvf, const Vec3 &p) {
    Vec3 out;
    // Same clamping rules as trilinear_sample.
    const Geometry &g = dvf.geometry;
    const Vec3 u = g.continuous_index(p);
    int i0[3], i1[3];
    double t[3];
    for (int a = 0; a < 3; ++a) {
        const int n = g.dims[a];
        double c = u[static_cast<std::size_t>(a)];
        if (!(c > 0.0)) c = 0.0;
        if (c > n - 1) c = n - 1;
        int lo = static_cast<int>(c);
        if (lo > n - 2) lo = n > 1 ? n - 2 : 0;
        i0[a] = lo;
        i1[a] = n > 1 ? lo + 1 : lo;
        t[a] = c - lo;
    }
    for (int z = 0; z < 2; ++z)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x) {
                const double w = (x ? t[0] : 1 - t[0]) * (y ? t[1] : 1 - t[1]) * (z ? t[2] : 1 - t[2]);
                out += dvf.at(x ? i1[0] : i0[0], y ? i1[1] : i0[1], z ? i1[2] : i0[2]) * w;
            }
    return out;
}

LabelMetrics compare_masks(const LabelMask &predicted, const LabelMask &reference, double margin_mm) {
    require_same_geometry(predicted.geometry, reference.geometry, "compare_masks");
    const LabelMask a = margin_mm > 0.0 ? crop_margin(predicted, margin_mm) : predicted;
    const LabelMask b = margin_mm > 0.0 ? crop_margin(reference, margin_mm) : reference;
    LabelMetrics r;
    r.label = reference.label;
    r.dice = dice(a, b);
    if (a.count() > 0 && b.count() > 0) {
        const auto sa = surface_points_from_mask(a);
        const auto sb = surface_points_from_mask(b);
        r.hausdorff_mm = hausdorff(sa, sb, 100.0);
        r.hausdorff95_mm = hausdorff(sa, sb, 95.0);
    }
    return r;
}

namespace {

nlohmann::json opt(const std::optional<double> &v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string csv_num(const std::optional<double> &v) {
    if (!v) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    return buf;
}

} // namespace

void save_report_json(const std::filesystem::path &path, const MetricReport &r) {
    nlohmann::ordered_json j;
    j["margin_mm"] = r.margin_mm;
    j["labels"] = nlohmann::ordered_json::array();
    for (const LabelMetrics &l : r.labels) {
        nlohmann::ordered_json e;
        e["label"] = l.label;
        e["dice"] = l.dice;
        e["hausdorff_mm"] = opt(l.hausdorff_mm);
        e["hausdorff95_mm"] = opt(l.hausdorff95_mm);
        j["labels"].push_back(e);
    }
    if (r.landmarks) {
        j["landmarks"]["mean_mm"] = r.landmarks->mean_mm;
        j["landmarks"]["sd_mm"] = r.landmarks->sd_mm;
        j["landmarks"]["per_pair_mm"] = r.landmarks->per_pair_mm;
    }
    if (r.dvf_error_mean_mm) {
        j["dvf_error"]["mean_mm"] = *r.dvf_error_mean_mm;
        j["dvf_error"]["p95_mm"] = opt(r.dvf_error_p95_mm);
    }
    std::ofstream f(path);
    if (!f) throw RuntimeFailure("cannot write " + path.string());
    f << j.dump(2) << '\n';
}

void save_report_csv(const std::filesystem::path &path, const MetricReport &r) {
    std::ofstream f(path);
    if (!f) throw RuntimeFailure("cannot write " + path.string());
    f << "label,dice,hausdorff_mm,hausdorff95_mm,margin_mm\n";
    for (const LabelMetrics &l : r.labels)
        f << l.label << ',' << csv_num(l.dice) << ',' << csv_num(l.hausdorff_mm) << ',' << csv_num(l.hausdorff95_mm)
          << ',' << csv_num(r.margin_mm) << '\n';
    if (r.landmarks)
        f << "landmarks_mean," << csv_num(r.landmarks->mean_mm) << ",,," << csv_num(r.margin_mm) << '\n'
          << "landmarks_sd," << csv_num(r.landmarks->sd_mm) << ",,," << csv_num(r.margin_mm) << '\n';
    if (r.dvf_error_mean_mm)
        f << "dvf_error_mean," << csv_num(r.dvf_error_mean_mm) << ",,," << csv_num(r.margin_mm) << '\n'
          << "dvf_error_p95," << csv_num(r.dvf_error_p95_mm) << ",,," << csv_num(r.margin_mm) << '\n';
}

} // namespace morea
