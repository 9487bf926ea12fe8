#include "morea/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "morea/error.hpp"
#include "morea/linkage.hpp"
#include "morea/render.hpp"

namespace morea {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kFrontMagic[8] = {'M', 'O', 'R', 'E', 'A', 'F', 'R', '1'};

int positive_int(const RunConfig &cfg, const std::string &key, int fallback) {
    const auto v = cfg.get_int(key, fallback);
    if (v <= 0 || v > std::numeric_limits<int>::max()) throw ConfigError(key + " must be a positive integer");
    return static_cast<int>(v);
}

std::vector<int> parse_indices(const std::string &text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const auto e = item.find_last_not_of(" \t");
        const std::string tok = item.substr(b, e - b + 1);
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(tok, &used);
        } catch (const std::exception &) {
            used = 0;
        }
        if (used != tok.size() || v < 0) throw ConfigError("export_tradeoff_indices: bad index '" + tok + "'");
        out.push_back(v);
    }
    return out;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const std::filesystem::path &path, const std::string &text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw RuntimeFailure("cannot write " + path.string());
    f << text;
    if (!f) throw RuntimeFailure("failed writing " + path.string());
}

template <class T>
void put(std::ostream &o, T v) {
    static_assert(std::endian::native == std::endian::little, "front files are little-endian");
    o.write(reinterpret_cast<const char *>(&v), sizeof v);
}

template <class T>
T get(std::istream &in) {
    T v{};
    in.read(reinterpret_cast<char *>(&v), sizeof v);
    if (!in) throw DataError("truncated front genotype file");
    return v;
}

ordered_json objectives_json(const ObjectiveVector &o) {
    return {{"magnitude", o.magnitude}, {"intensity", o.intensity}, {"guidance", o.guidance}};
}

std::vector<LabelMask> masks_with_factors(const std::vector<LabelMask> &masks,
                                          const std::map<std::string, double> &factors) {
    std::vector<LabelMask> out;
    for (const LabelMask &m : masks)
        if (factors.contains(m.label)) out.push_back(m);
    return out;
}

void render_selected(const ProblemBundle &problem, const DeformationVectorField &forward,
                     const DeformationVectorField &inverse, const std::filesystem::path &dir) {
    RenderOptions opt;
    opt.mode = RenderMode::Contours;
    save_ppm(dir / "contours.ppm", render_slice(problem.target, problem.source_masks, nullptr, &inverse, opt));
    opt.mode = RenderMode::Grid;
    save_ppm(dir / "grid.ppm", render_slice(problem.source, {}, &forward, nullptr, opt));
    opt.mode = RenderMode::Arrows;
    save_ppm(dir / "arrows.ppm", render_slice(problem.source, {}, &forward, nullptr, opt));
}

} // namespace

RunSettings settings_from_config(const RunConfig &cfg) {
    RunSettings s;
    EvolverConfig &e = s.evolver;
    const auto seed = cfg.require_int("seed");
    if (seed < 0) throw ConfigError("seed must be non-negative");
    e.seed = static_cast<std::uint64_t>(seed);
    e.num_threads = positive_int(cfg, "num_threads", e.num_threads);
    e.num_generations = static_cast<int>(cfg.get_int("ea_num_generations", e.num_generations));
    if (e.num_generations < 0) throw ConfigError("ea_num_generations must be non-negative");
    e.population_size = positive_int(cfg, "ea_population_size", e.population_size);
    e.num_clusters = positive_int(cfg, "ea_num_clusters", e.num_clusters);
    e.archive_capacity = positive_int(cfg, "ea_archive_size", e.archive_capacity);
    e.steering_enabled = cfg.get_bool("ea_adaptive_steering_enabled", e.steering_enabled);
    e.steering_activation_generation = static_cast<int>(
        cfg.get_int("ea_adaptive_steering_activated_at_num_generations", e.steering_activation_generation));
    e.steering_ratio = cfg.get_double("ea_adaptive_steering_guidance_threshold", e.steering_ratio);
    if (!(e.steering_ratio >= 1.0)) throw ConfigError("ea_adaptive_steering_guidance_threshold must be >= 1");
    e.selection_fraction = cfg.get_double("ea_selection_fraction", e.selection_fraction);
    if (!(e.selection_fraction > 0.0 && e.selection_fraction <= 1.0))
        throw ConfigError("ea_selection_fraction must lie in (0, 1]");

    const std::string repair = cfg.get_string("morea_repair_method", "gaussian");
    if (repair == "gaussian") e.repair_enabled = true;
    else if (repair == "none") e.repair_enabled = false;
    else throw ConfigError("morea_repair_method must be \"gaussian\" or \"none\"");
    e.repair_samples = positive_int(cfg, "morea_repair_samples", e.repair_samples);

    const std::string noise = cfg.get_string("morea_init_noise_method", "global-gaussian");
    if (noise == "global-gaussian") e.noise.method = NoiseMethod::GlobalGaussian;
    else if (noise == "rbf-kernels") e.noise.method = NoiseMethod::RbfKernels;
    else throw ConfigError("morea_init_noise_method must be \"global-gaussian\" or \"rbf-kernels\"");
    e.noise.factor = cfg.get_double("morea_init_noise_factor", e.noise.factor);
    e.noise.kernel_count = positive_int(cfg, "morea_init_noise_kernel_count", e.noise.kernel_count);
    e.noise.rounds = positive_int(cfg, "morea_init_noise_rounds", e.noise.rounds);
    e.noise.validate();

    PointPlacementConfig &m = s.mesh;
    m.total_points = positive_int(cfg, "morea_mesh_num_points", m.total_points);
    const std::string method = cfg.get_string("morea_mesh_generation_method", "contours");
    const std::string surface_tag = "contours+surface:";
    if (method == "random") {
        m.method = PlacementMethod::Random;
    } else if (method == "contours") {
        m.method = PlacementMethod::Contours;
    } else if (method.starts_with(surface_tag) && method.size() > surface_tag.size()) {
        m.method = PlacementMethod::Contours;
        m.surface_object = method.substr(surface_tag.size());
    } else {
        throw ConfigError("morea_mesh_generation_method must be \"random\", \"contours\" or "
                          "\"contours+surface:<label>\"");
    }
    m.random_fraction = cfg.get_double("morea_mesh_random_fraction", m.random_fraction);
    m.surface_points = static_cast<int>(cfg.get_int("morea_mesh_surface_points", m.surface_points));
    m.bbox_padding_mm = cfg.get_double("morea_mesh_bbox_padding_mm", m.bbox_padding_mm);

    s.sampling_rate = cfg.get_double("morea_sampling_rate", s.sampling_rate);
    if (!(s.sampling_rate > 0.0)) throw ConfigError("morea_sampling_rate must be positive");
    const std::string mag = cfg.get_string("morea_magnitude_metric", "biomechanical");
    if (mag == "biomechanical") s.magnitude = MagnitudeMetric::Biomechanical;
    else if (mag == "homogeneous") s.magnitude = MagnitudeMetric::Homogeneous;
    else throw ConfigError("morea_magnitude_metric must be \"biomechanical\" or \"homogeneous\"");
    if (cfg.get_string("morea_image_metric", "squared-differences") != "squared-differences")
        throw ConfigError("morea_image_metric must be \"squared-differences\"");
    if (cfg.get_string("morea_guidance_metric", "continuous-per-group") != "continuous-per-group")
        throw ConfigError("morea_guidance_metric must be \"continuous-per-group\"");

    s.margin_mm = cfg.get_double("metrics_margin_mm", s.margin_mm);
    if (!(s.margin_mm >= 0.0)) throw ConfigError("metrics_margin_mm must be non-negative");
    s.tradeoff_indices = parse_indices(cfg.get_string("export_tradeoff_indices", ""));

    for (const ConfigEntry &entry : cfg.entries()) {
        if (entry.key.starts_with("elasticity.")) {
            const double f = cfg.get_double(entry.key, 1.0);
            if (!(f > 0.0)) throw ConfigError(entry.key + " must be positive");
            s.elasticity[entry.key.substr(11)] = f;
        } else if (entry.key.starts_with("morea_mesh_allocation.")) {
            const double w = cfg.get_double(entry.key, 1.0);
            if (!(w >= 0.0)) throw ConfigError(entry.key + " must be non-negative");
            m.allocation_weights[entry.key.substr(22)] = w;
        }
    }
    m.validate();
    for (const std::string &k : cfg.unknown_keys()) s.warnings.push_back("unknown config key '" + k + "' ignored");
    return s;
}

RunConfig with_seed(RunConfig cfg, std::optional<std::uint64_t> seed) {
    if (seed) {
        if (*seed > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
            throw ConfigError("seed out of range");
        cfg.set("seed", static_cast<std::int64_t>(*seed));
    }
    return cfg;
}

std::unique_ptr<PreparedProblem> prepare_problem(const ProblemBundle &problem, const RunSettings &settings) {
    problem.source.geometry.validate();
    problem.target.geometry.validate();
    problem.guidance.validate();
    auto p = std::make_unique<PreparedProblem>();
    p->source = problem.source;
    p->target = problem.target;
    normalize_intensities(p->source, p->target);
    p->field = build_guidance_field(problem.guidance, p->source.geometry, p->target.geometry);
    p->mesh = build_initial_genotype(p->source.geometry, problem.guidance, problem.source_masks, settings.mesh,
                                     settings.evolver.seed);
    p->plan = build_fos_plan(*p->mesh.genotype.topology);

    const double voxel_volume = p->source.geometry.voxel_volume_mm3();
    ElasticityMap elasticity;
    if (settings.magnitude == MagnitudeMetric::Homogeneous) {
        elasticity = homogeneous_elasticity(p->mesh.genotype.topology->num_tets());
    } else {
        std::map<std::string, double> factors = problem.elasticity;
        for (const auto &[label, f] : settings.elasticity) factors[label] = f;
        elasticity = compute_elasticity_factors(p->mesh.genotype, masks_with_factors(problem.source_masks, factors),
                                                factors, settings.sampling_rate, voxel_volume);
    }
    p->evaluator =
        std::make_unique<Evaluator>(p->source, p->target, p->field, std::move(elasticity), settings.sampling_rate);
    const Vec3 sp = p->source.geometry.spacing_mm;
    p->noise_scale_mm = std::min({sp.x, sp.y, sp.z});
    return p;
}

std::vector<FrontEntry> sorted_front(const ElitistArchive &archive) {
    std::vector<FrontEntry> out;
    out.reserve(archive.size());
    for (const ArchiveEntry &e : archive.entries()) out.push_back({e.objectives, e.source, e.target});
    std::stable_sort(out.begin(), out.end(), [](const FrontEntry &a, const FrontEntry &b) {
        const auto &x = a.objectives;
        const auto &y = b.objectives;
        if (x.guidance != y.guidance) return x.guidance < y.guidance;
        if (x.magnitude != y.magnitude) return x.magnitude < y.magnitude;
        return x.intensity < y.intensity;
    });
    return out;
}

std::vector<TradeoffPick> default_tradeoffs(const std::vector<FrontEntry> &front, double steering_ratio) {
    if (front.empty()) return {};
    std::vector<TradeoffPick> picks{{"best_guidance", 0}};
    std::array<double, 3> lo, hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const FrontEntry &e : front)
        for (std::size_t k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], e.objectives[k]);
            hi[k] = std::max(hi[k], e.objectives[k]);
        }
    std::size_t knee = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < front.size(); ++i) {
        double d = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            const double span = hi[k] - lo[k];
            const double n = span > 0.0 ? (hi[k] - front[i].objectives[k]) / span : 0.0;
            d += n * n;
        }
        if (d > best) {
            best = d;
            knee = i;
        }
    }
    picks.push_back({"knee", knee});
    const double bound = steering_ratio * front.front().objectives.guidance;
    std::size_t mag = 0;
    for (std::size_t i = 0; i < front.size(); ++i)
        if (front[i].objectives.guidance <= bound && front[i].objectives.magnitude < front[mag].objectives.magnitude)
            mag = i;
    picks.push_back({"best_magnitude", mag});
    return picks;
}

void write_stats_csv(const std::filesystem::path &path, const std::vector<GenerationStats> &stats) {
    std::string text = "generation,hypervolume,best_guidance,archive_size\n";
    for (const GenerationStats &s : stats)
        text += std::to_string(s.generation) + ',' + fmt(s.hypervolume) + ',' + fmt(s.best_guidance) + ',' +
                std::to_string(s.archive_size) + '\n';
    write_text(path, text);
}

void save_front(const std::filesystem::path &run_dir, const StoredFront &front) {
    if (!front.topology) throw RuntimeFailure("front without topology");
    std::filesystem::create_directories(run_dir);
    const TetTopology &topo = *front.topology;
    const auto np = static_cast<std::size_t>(topo.num_points());
    {
        std::ofstream f(run_dir / "front_genotypes.bin", std::ios::binary | std::ios::trunc);
        if (!f) throw RuntimeFailure("cannot write front genotypes in " + run_dir.string());
        f.write(kFrontMagic, sizeof kFrontMagic);
        put<std::uint64_t>(f, np);
        put<std::uint64_t>(f, topo.num_tets());
        put<std::uint64_t>(f, front.entries.size());
        for (const Tet &t : topo.tets())
            for (int v : t) put<std::int32_t>(f, v);
        for (const FrontEntry &e : front.entries) {
            if (e.source.size() != np || e.target.size() != np) throw RuntimeFailure("front entry size mismatch");
            for (const auto *side : {&e.source, &e.target})
                for (const Vec3 &p : *side) {
                    put(f, p.x);
                    put(f, p.y);
                    put(f, p.z);
                }
        }
        if (!f) throw RuntimeFailure("failed writing front genotypes");
    }
    ordered_json j;
    j["seed"] = front.seed;
    j["genotypes"] = "front_genotypes.bin";
    j["num_points"] = np;
    j["num_tets"] = topo.num_tets();
    ordered_json entries = ordered_json::array();
    for (std::size_t i = 0; i < front.entries.size(); ++i) {
        const ObjectiveVector &o = front.entries[i].objectives;
        entries.push_back({{"index", i},
                           {"magnitude", o.magnitude},
                           {"intensity", o.intensity},
                           {"guidance", o.guidance},
                           {"feasible", true}});
    }
    j["solutions"] = std::move(entries);
    ordered_json picks = ordered_json::array();
    for (const TradeoffPick &p : front.picks) picks.push_back({{"name", p.name}, {"index", p.index}});
    j["selected"] = std::move(picks);
    write_text(run_dir / "front.json", j.dump(2) + "\n");
}

StoredFront load_front(const std::filesystem::path &run_dir) {
    const auto json_path = run_dir / "front.json";
    std::ifstream jf(json_path);
    if (!jf) throw DataError("missing front file " + json_path.string());
    ordered_json j;
    try {
        j = ordered_json::parse(jf);
    } catch (const nlohmann::json::exception &ex) {
        throw DataError("malformed " + json_path.string() + ": " + ex.what());
    }
    StoredFront out;
    std::size_t np = 0, nt = 0;
    std::string bin_name;
    try {
        out.seed = j.at("seed").get<std::uint64_t>();
        np = j.at("num_points").get<std::size_t>();
        nt = j.at("num_tets").get<std::size_t>();
        bin_name = j.at("genotypes").get<std::string>();
        for (const auto &p : j.at("selected"))
            out.picks.push_back({p.at("name").get<std::string>(), p.at("index").get<std::size_t>()});
    } catch (const nlohmann::json::exception &ex) {
        throw DataError("malformed " + json_path.string() + ": " + ex.what());
    }
    if (bin_name.find('/') != std::string::npos) throw DataError("front genotype path must be a plain file name");
    std::ifstream f(run_dir / bin_name, std::ios::binary);
    if (!f) throw DataError("missing front genotype file in " + run_dir.string());
    char magic[8];
    f.read(magic, sizeof magic);
    if (!f || std::memcmp(magic, kFrontMagic, sizeof magic) != 0) throw DataError("bad front genotype header");
    if (get<std::uint64_t>(f) != np || get<std::uint64_t>(f) != nt) throw DataError("front files disagree");
    const auto n = get<std::uint64_t>(f);
    const auto &sols = j.at("solutions");
    if (sols.size() != n) throw DataError("front files disagree on the solution count");
    std::vector<Tet> tets(nt);
    for (Tet &t : tets)
        for (int &v : t) v = get<std::int32_t>(f);
    try {
        out.topology = std::make_shared<const TetTopology>(static_cast<int>(np), std::move(tets));
    } catch (const std::invalid_argument &ex) {
        throw DataError(std::string("bad front topology: ") + ex.what());
    }
    for (std::uint64_t i = 0; i < n; ++i) {
        FrontEntry e;
        const auto &s = sols[i];
        e.objectives = {s.at("magnitude").get<double>(), s.at("intensity").get<double>(),
                        s.at("guidance").get<double>()};
        for (auto *side : {&e.source, &e.target}) {
            side->resize(np);
            for (Vec3 &p : *side) {
                p.x = get<double>(f);
                p.y = get<double>(f);
                p.z = get<double>(f);
            }
        }
        out.entries.push_back(std::move(e));
    }
    for (const TradeoffPick &p : out.picks)
        if (p.index >= out.entries.size()) throw DataError("selected index out of range in front.json");
    return out;
}

void export_front(const std::filesystem::path &run_dir, FrontFormat format, const std::filesystem::path &out) {
    const StoredFront front = load_front(run_dir);
    // save_front writes sorted fronts already; sort again so hand-edited files export consistently.
    std::vector<std::size_t> order(front.entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return front.entries[a].objectives.guidance < front.entries[b].objectives.guidance;
    });
    const auto selected_name = [&](std::size_t i) {
        std::string names;
        for (const TradeoffPick &p : front.picks)
            if (p.index == i) names += (names.empty() ? "" : ";") + std::string("selected/") + p.name;
        return names;
    };
    if (format == FrontFormat::Csv) {
        std::string text = "index,magnitude,intensity,guidance,feasible,genotype_ref,selected,seed\n";
        for (std::size_t i : order) {
            const auto &o = front.entries[i].objectives;
            text += std::to_string(i) + ',' + fmt(o.magnitude) + ',' + fmt(o.intensity) + ',' + fmt(o.guidance) +
                    ",true,front_genotypes.bin#" + std::to_string(i) + ',' + selected_name(i) + ',' +
                    std::to_string(front.seed) + '\n';
        }
        write_text(out, text);
    } else {
        ordered_json rows = ordered_json::array();
        for (std::size_t i : order) {
            const auto &o = front.entries[i].objectives;
            rows.push_back({{"index", i},
                            {"magnitude", o.magnitude},
                            {"intensity", o.intensity},
                            {"guidance", o.guidance},
                            {"feasible", true},
                            {"genotype_ref", "front_genotypes.bin#" + std::to_string(i)},
                            {"selected", selected_name(i)}});
        }
        write_text(out, ordered_json{{"seed", front.seed}, {"solutions", std::move(rows)}}.dump(2) + "\n");
    }
}

MetricReport evaluate_dvfs(const ProblemBundle &problem, const DeformationVectorField &forward,
                           const DeformationVectorField &inverse, double margin_mm) {
    if (!(forward.geometry == problem.source.geometry)) throw DataError("forward DVF must use the source grid");
    if (!(inverse.geometry == problem.target.geometry)) throw DataError("inverse DVF must use the target grid");
    MetricReport r;
    r.margin_mm = margin_mm;
    for (const LabelMask &ref : problem.target_masks) {
        const LabelMask *src = problem.source_mask(ref.label);
        if (!src) continue;
        LabelMask warped = warp_mask(*src, inverse);
        warped.label = ref.label;
        r.labels.push_back(compare_masks(warped, ref, margin_mm));
    }
    if (!problem.landmarks.empty()) r.landmarks = landmark_error(problem.landmarks, forward);
    if (problem.field) {
        const DvfError e = analytic_dvf_error(forward, *problem.field, margin_mm);
        r.dvf_error_mean_mm = e.mean_mm;
        r.dvf_error_p95_mm = e.p95_mm;
    }
    return r;
}

MetricReport evaluate_genotype(const ProblemBundle &problem, const DualMeshGenotype &g, double margin_mm) {
    const auto fwd = rasterize_dvf(g, Direction::Forward, problem.source.geometry);
    const auto inv = rasterize_dvf(g, Direction::Inverse, problem.target.geometry);
    MetricReport r = evaluate_dvfs(problem, fwd, inv, margin_mm);
    if (!problem.landmarks.empty()) r.landmarks = landmark_error(problem.landmarks, g);
    return r;
}

void rasterize_to(const DualMeshGenotype &g, const ProblemBundle &problem, const std::filesystem::path &out) {
    std::filesystem::create_directories(out);
    save_dvf(out / "dvf_forward", rasterize_dvf(g, Direction::Forward, problem.source.geometry));
    save_dvf(out / "dvf_inverse", rasterize_dvf(g, Direction::Inverse, problem.target.geometry));
}

double mean_displacement_inside(const DualMeshGenotype &g, const LabelMask &mask) {
    double sum = 0.0;
    std::size_t n = 0;
    const Geometry &geo = mask.geometry;
    for (std::size_t i = 0; i < g.num_points(); ++i) {
        const Vec3 u = geo.continuous_index(g.source[i]);
        bool inside = true;
        for (std::size_t a = 0; a < 3; ++a)
            inside = inside && u[a] > -0.5 && u[a] < geo.dims[a] - 0.5;
        if (!inside || !nearest_sample(mask, g.source[i])) continue;
        sum += distance(g.target[i], g.source[i]);
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

RegisterOutcome register_problem(const ProblemBundle &problem, const RunConfig &cfg, const std::filesystem::path &out,
                                 const GenerationCallback &callback) {
    const RunSettings settings = settings_from_config(cfg);
    const auto prepared = prepare_problem(problem, settings);
    RegisterOutcome result;
    result.run = run_evolver(prepared->inputs(), settings.evolver, callback);
    result.front = sorted_front(result.run.archive);
    if (result.front.empty()) throw RuntimeFailure("the archive is empty; no feasible solution was found");

    std::vector<std::string> warnings = settings.warnings;
    if (settings.tradeoff_indices.empty()) {
        result.picks = default_tradeoffs(result.front, settings.evolver.steering_ratio);
    } else {
        result.picks.push_back({"best_guidance", 0});
        for (int i : settings.tradeoff_indices) {
            if (static_cast<std::size_t>(i) >= result.front.size()) {
                warnings.push_back("trade-off index " + std::to_string(i) + " exceeds the front size " +
                                   std::to_string(result.front.size()));
                continue;
            }
            result.picks.push_back({"index_" + std::to_string(i), static_cast<std::size_t>(i)});
        }
    }

    std::filesystem::create_directories(out);
    write_text(out / "config.txt", cfg.serialize());
    write_stats_csv(out / "stats.csv", result.run.stats);
    save_front(out, {settings.evolver.seed, result.run.topology, result.front, result.picks});

    for (const TradeoffPick &pick : result.picks) {
        const FrontEntry &e = result.front[pick.index];
        const DualMeshGenotype g{result.run.topology, e.source, e.target};
        const auto dir = out / "selected" / pick.name;
        std::filesystem::create_directories(dir);
        save_genotype(dir / "genotype.json", g);
        const auto fwd = rasterize_dvf(g, Direction::Forward, problem.source.geometry);
        const auto inv = rasterize_dvf(g, Direction::Inverse, problem.target.geometry);
        save_dvf(dir / "dvf_forward", fwd);
        save_dvf(dir / "dvf_inverse", inv);
        MetricReport report = evaluate_dvfs(problem, fwd, inv, settings.margin_mm);
        if (!problem.landmarks.empty()) report.landmarks = landmark_error(problem.landmarks, g);
        save_report_json(dir / "metrics.json", report);
        save_report_csv(dir / "metrics.csv", report);
        render_selected(problem, fwd, inv, dir);
        result.reports.push_back(std::move(report));
    }

    const MixingCounters &c = result.run.counters;
    ordered_json run;
    run["seed"] = settings.evolver.seed;
    run["generations_run"] = result.run.generations_run;
    run["archive_size"] = result.front.size();
    run["reference_point"] = objectives_json(result.run.reference_point);
    run["counters"] = {{"proposals", c.proposals},
                       {"accepted", c.accepted},
                       {"folded", c.folded},
                       {"repaired", c.repaired},
                       {"reverted_folds", c.reverted_folds},
                       {"max_tet_touches_per_class", c.max_tet_touches_per_class}};
    run["mesh"] = {{"points", prepared->mesh.genotype.num_points()},
                   {"tets", prepared->mesh.genotype.topology->num_tets()},
                   {"fos_elements", prepared->plan.elements.size()},
                   {"colors", prepared->plan.num_colors}};
    ordered_json sel = ordered_json::array();
    for (const TradeoffPick &p : result.picks)
        sel.push_back({{"name", p.name}, {"index", p.index}, {"dir", "selected/" + p.name}});
    run["selected"] = std::move(sel);
    run["artifacts"] = {"config.txt", "stats.csv", "front.json", "front_genotypes.bin"};
    run["warnings"] = warnings;
    write_text(out / "run.json", run.dump(2) + "\n");
    return result;
}

} // namespace morea
