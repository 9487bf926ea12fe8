#include "morea/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "morea/error.hpp"
#include "morea/sobol.hpp"

namespace morea {

bool dominates(const ObjectiveVector &a, const ObjectiveVector &b) {
    bool better = false;
    for (std::size_t i = 0; i < kNumObjectives; ++i) {
        if (a[i] > b[i]) return false;
        if (a[i] < b[i]) better = true;
    }
    return better;
}

bool weakly_dominates(const ObjectiveVector &a, const ObjectiveVector &b) {
    for (std::size_t i = 0; i < kNumObjectives; ++i)
        if (a[i] > b[i]) return false;
    return true;
}

int tet_sample_count(double tet_volume_mm3, double sampling_rate, double voxel_volume_mm3) {
    const double n = std::round(sampling_rate * std::abs(tet_volume_mm3) / voxel_volume_mm3);
    return std::max(1, static_cast<int>(std::min(n, 1e9)));
}

namespace {

// Barycentric weights of sample i from the tet's scrambled Sobol stream.
inline std::array<double, 4> sample_weights(const Sobol4 &sobol, std::uint32_t i) {
    const auto r = sobol.point(i);
    std::array<double, 4> w{-std::log(r[0]), -std::log(r[1]), -std::log(r[2]), -std::log(r[3])};
    const double s = w[0] + w[1] + w[2] + w[3];
    for (double &x : w) x /= s;
    return w;
}

inline Vec3 combine(const std::array<Vec3, 4> &p, const std::array<double, 4> &w) {
    return p[0] * w[0] + p[1] * w[1] + p[2] * w[2] + p[3] * w[3];
}

} // namespace

std::vector<std::array<double, 4>> sample_tet_points(const std::array<Vec3, 4> &tet, double sampling_rate,
                                                     double voxel_volume_mm3) {
    const double vol = signed_volume(tet[0], tet[1], tet[2], tet[3]);
    if (vol == 0.0) throw DataError("cannot sample a degenerate tet");
    const int n = tet_sample_count(vol, sampling_rate, voxel_volume_mm3);
    const Sobol4 sobol(scramble_words(hash_coordinates(tet)));
    std::vector<std::array<double, 4>> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = sample_weights(sobol, static_cast<std::uint32_t>(i));
    return out;
}

ElasticityMap homogeneous_elasticity(std::size_t num_tets) {
    ElasticityMap m;
    m.factors.assign(num_tets, 1.0);
    return m;
}

ElasticityMap compute_elasticity_factors(const DualMeshGenotype &g, std::span<const LabelMask> masks,
                                         const std::map<std::string, double> &label_factors, double sampling_rate,
                                         double voxel_volume_mm3) {
    ElasticityMap m;
    m.label_factors = label_factors;
    std::vector<const LabelMask *> used;
    std::vector<double> factor;
    for (const auto &[label, f] : label_factors) {
        if (!(f > 0.0)) throw ConfigError("elasticity factor for '" + label + "' must be positive");
        const auto it = std::find_if(masks.begin(), masks.end(), [&](const LabelMask &mk) { return mk.label == label; });
        if (it == masks.end()) continue;
        if (!used.empty() && !(it->geometry == used.front()->geometry))
            throw DataError("elasticity masks do not share one geometry");
        used.push_back(&*it);
        factor.push_back(f);
    }
    const std::size_t nt = g.topology->num_tets();
    m.factors.assign(nt, 1.0);
    if (used.empty()) return m;
    for (std::size_t t = 0; t < nt; ++t) {
        const auto p = g.tet_points(Side::Source, t);
        const auto samples = sample_tet_points(p, sampling_rate, voxel_volume_mm3);
        std::vector<int> hits(used.size(), 0);
        for (const auto &w : samples) {
            const Vec3 x = combine(p, w);
            for (std::size_t k = 0; k < used.size(); ++k) {
                if (nearest_sample(*used[k], x)) {
                    ++hits[k];
                    break;
                }
            }
        }
        double c = 0.0;
        double covered = 0.0;
        for (std::size_t k = 0; k < used.size(); ++k) {
            const double frac = static_cast<double>(hits[k]) / static_cast<double>(samples.size());
            c += frac * factor[k];
            covered += frac;
        }
        m.factors[t] = c + (1.0 - covered) * 1.0;
    }
    return m;
}

GuidanceField build_guidance_field(const GuidanceSet &guidance, const Geometry &source_geometry,
                                   const Geometry &target_geometry) {
    guidance.validate();
    GuidanceField f;
    f.radius_mm = 0.025 * source_geometry.extent_mm().x;
    const auto ns = static_cast<double>(guidance.total_source());
    const auto nt = static_cast<double>(guidance.total_target());
    for (const auto &p : guidance.pairs) {
        GuidanceField::Pair q;
        q.label = p.label;
        q.source = distance_map_from_points(p.source_points, source_geometry);
        q.target = distance_map_from_points(p.target_points, target_geometry);
        q.source_weight = static_cast<double>(p.source_points.size()) / ns;
        q.target_weight = static_cast<double>(p.target_points.size()) / nt;
        f.pairs.push_back(std::move(q));
    }
    return f;
}

void normalize_intensities(Volume &source, Volume &target) {
    float lo = source.data.empty() ? 0.0f : source.data[0];
    float hi = lo;
    for (const Volume *v : {&source, &target})
        for (float x : v->data) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    const float span = hi - lo;
    for (Volume *v : {&source, &target})
        for (float &x : v->data) x = span > 0.0f ? (x - lo) / span : 0.0f;
}

ObjectiveVector Accumulators::objectives() const {
    ObjectiveVector o;
    if (per_tet.empty()) return o;
    o.magnitude = magnitude / (10.0 * static_cast<double>(per_tet.size()));
    if (samples > 0) {
        o.intensity = intensity / static_cast<double>(samples);
        o.guidance = guidance / static_cast<double>(samples);
    }
    return o;
}

Evaluator::Evaluator(const Volume &source, const Volume &target, const GuidanceField &guidance,
                     ElasticityMap elasticity, double sampling_rate)
    : source_(&source), target_(&target), guidance_(&guidance), elasticity_(std::move(elasticity)),
      rate_(sampling_rate), voxel_volume_(source.geometry.voxel_volume_mm3()) {
    if (!(sampling_rate > 0.0)) throw ConfigError("morea_sampling_rate must be positive");
    shared_grids_ = std::all_of(guidance.pairs.begin(), guidance.pairs.end(), [&](const GuidanceField::Pair &p) {
        return p.source.geometry == source.geometry && p.target.geometry == target.geometry;
    });
}

TetTerms Evaluator::evaluate_tet(const DualMeshGenotype &g, std::size_t t) const {
    TetTerms r;
    const auto ps = g.tet_points(Side::Source, t);
    const auto pt = g.tet_points(Side::Target, t);

    const auto len_s = tet_edge_lengths(ps[0], ps[1], ps[2], ps[3]);
    const auto len_t = tet_edge_lengths(pt[0], pt[1], pt[2], pt[3]);
    double m = 0.0;
    for (std::size_t e = 0; e < 10; ++e) m += (len_s[e] - len_t[e]) * (len_s[e] - len_t[e]);
    r.magnitude = elasticity_.factors[t] * m;

    const double radius = guidance_->radius_mm;
    const auto side_pass = [&](const std::array<Vec3, 4> &here, const std::array<Vec3, 4> &there, const Volume &img_here,
                               const Volume &img_there, bool from_source) {
        const double vol = signed_volume(here[0], here[1], here[2], here[3]);
        const int n = tet_sample_count(vol, rate_, voxel_volume_);
        const Sobol4 sobol(scramble_words(hash_coordinates(here)));
        for (int i = 0; i < n; ++i) {
            const auto w = sample_weights(sobol, static_cast<std::uint32_t>(i));
            const Vec3 p = combine(here, w);
            const Vec3 q = combine(there, w);
            const TrilinearStencil sp(img_here.geometry, p);
            const TrilinearStencil sq(img_there.geometry, q);
            r.intensity += h_intensity(sp.apply(img_here.data), sq.apply(img_there.data));
            for (const auto &pair : guidance_->pairs) {
                const DistanceMap &d_here = from_source ? pair.source : pair.target;
                const double d = shared_grids_ ? sp.apply(d_here.data) : trilinear_sample(d_here, p);
                if (!(d < radius)) continue;
                const DistanceMap &d_there = from_source ? pair.target : pair.source;
                const double diff = d - (shared_grids_ ? sq.apply(d_there.data) : trilinear_sample(d_there, q));
                const double weight = from_source ? pair.source_weight : pair.target_weight;
                r.guidance += weight * ((radius - d) / radius) * diff * diff;
            }
        }
        r.samples += n;
    };
    side_pass(ps, pt, *source_, *target_, true);
    side_pass(pt, ps, *target_, *source_, false);
    return r;
}

std::vector<TetTerms> Evaluator::evaluate_tets(const DualMeshGenotype &g, std::span<const int> tets) const {
    std::vector<TetTerms> out(tets.size());
    for (std::size_t i = 0; i < tets.size(); ++i) out[i] = evaluate_tet(g, static_cast<std::size_t>(tets[i]));
    return out;
}

TetTerms Evaluator::partial_sums(const DualMeshGenotype &g, std::span<const int> tets) const {
    TetTerms s;
    for (const TetTerms &x : evaluate_tets(g, tets)) {
        s.magnitude += x.magnitude;
        s.intensity += x.intensity;
        s.guidance += x.guidance;
        s.samples += x.samples;
    }
    return s;
}

namespace {

double sorted_sum(std::vector<double> &v) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

} // namespace

void Evaluator::resync(Accumulators &acc) const {
    std::vector<double> buf(acc.per_tet.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = acc.per_tet[i].magnitude;
    acc.magnitude = sorted_sum(buf);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = acc.per_tet[i].intensity;
    acc.intensity = sorted_sum(buf);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = acc.per_tet[i].guidance;
    acc.guidance = sorted_sum(buf);
    acc.samples = 0;
    for (const TetTerms &x : acc.per_tet) acc.samples += x.samples;
}

Accumulators Evaluator::initialize(const DualMeshGenotype &g) const {
    if (elasticity_.factors.size() != g.topology->num_tets())
        throw DataError("elasticity map does not match the mesh");
    Accumulators acc;
    acc.per_tet.resize(g.topology->num_tets());
    for (std::size_t t = 0; t < acc.per_tet.size(); ++t) acc.per_tet[t] = evaluate_tet(g, t);
    resync(acc);
    return acc;
}

ObjectiveVector Evaluator::full_evaluate(const DualMeshGenotype &g) const { return initialize(g).objectives(); }

ObjectiveVector Evaluator::preview(const Accumulators &acc, std::span<const int> tets,
                                   std::span<const TetTerms> fresh) const {
    Accumulators tmp;
    tmp.magnitude = acc.magnitude;
    tmp.intensity = acc.intensity;
    tmp.guidance = acc.guidance;
    tmp.samples = acc.samples;
    for (std::size_t i = 0; i < tets.size(); ++i) {
        const TetTerms &old = acc.per_tet[static_cast<std::size_t>(tets[i])];
        tmp.magnitude += fresh[i].magnitude - old.magnitude;
        tmp.intensity += fresh[i].intensity - old.intensity;
        tmp.guidance += fresh[i].guidance - old.guidance;
        tmp.samples += fresh[i].samples - old.samples;
    }
    ObjectiveVector o;
    o.magnitude = tmp.magnitude / (10.0 * static_cast<double>(acc.per_tet.size()));
    o.intensity = tmp.samples > 0 ? tmp.intensity / static_cast<double>(tmp.samples) : 0.0;
    o.guidance = tmp.samples > 0 ? tmp.guidance / static_cast<double>(tmp.samples) : 0.0;
    return o;
}

void Evaluator::apply(Accumulators &acc, std::span<const int> tets, std::span<const TetTerms> fresh) const {
    for (std::size_t i = 0; i < tets.size(); ++i) {
        TetTerms &old = acc.per_tet[static_cast<std::size_t>(tets[i])];
        acc.magnitude += fresh[i].magnitude - old.magnitude;
        acc.intensity += fresh[i].intensity - old.intensity;
        acc.guidance += fresh[i].guidance - old.guidance;
        acc.samples += fresh[i].samples - old.samples;
        old = fresh[i];
    }
}

ObjectiveVector Evaluator::partial_update(const DualMeshGenotype &g, Accumulators &acc, std::span<const int> tets) const {
    const auto fresh = evaluate_tets(g, tets);
    apply(acc, tets, fresh);
    return acc.objectives();
}

} // namespace morea
