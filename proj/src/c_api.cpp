#include "morea/morea.h"

#include <exception>
#include <new>
#include <string>

#include "morea/error.hpp"
#include "morea/pipeline.hpp"
#include "morea/render.hpp"

struct morea_config {
    morea::RunConfig cfg;
    std::string text;
};

struct morea_problem {
    morea::ProblemBundle bundle;
};

namespace {

thread_local std::string g_last_error;

template <class F>
morea_status guarded(F &&f) {
    try {
        f();
        return MOREA_OK;
    } catch (const morea::ConfigError &e) {
        g_last_error = e.what();
        return MOREA_ERR_CONFIG;
    } catch (const morea::DataError &e) {
        g_last_error = e.what();
        return MOREA_ERR_DATA;
    } catch (const std::bad_alloc &) {
        g_last_error = "out of memory";
        return MOREA_ERR_RUNTIME;
    } catch (const std::exception &e) {
        g_last_error = e.what();
        return MOREA_ERR_RUNTIME;
    } catch (...) {
        g_last_error = "unknown failure";
        return MOREA_ERR_RUNTIME;
    }
}

void require(const void *p, const char *what) {
    if (!p) throw morea::ConfigError(std::string(what) + " must not be null");
}

void write_report(const morea::MetricReport &r, const char *out_dir) {
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    morea::save_report_json(dir / "metrics.json", r);
    morea::save_report_csv(dir / "metrics.csv", r);
}

} // namespace

extern "C" {

const char *morea_version(void) { return "0.1.0"; }

const char *morea_last_error(void) { return g_last_error.c_str(); }

morea_status morea_config_load(const char *path, morea_config **out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new morea_config{morea::RunConfig::load(path), {}};
    });
}

morea_status morea_config_parse(const char *text, morea_config **out) {
    return guarded([&] {
        require(text, "text");
        require(out, "out");
        *out = new morea_config{morea::RunConfig::parse(text), {}};
    });
}

morea_status morea_config_set_seed(morea_config *cfg, uint64_t seed) {
    return guarded([&] {
        require(cfg, "config");
        cfg->cfg = morea::with_seed(cfg->cfg, seed);
    });
}

morea_status morea_config_serialize(const morea_config *cfg, const char **text) {
    return guarded([&] {
        require(cfg, "config");
        require(text, "text");
        auto *mut = const_cast<morea_config *>(cfg);
        mut->text = cfg->cfg.serialize();
        *text = mut->text.c_str();
    });
}

void morea_config_free(morea_config *cfg) { delete cfg; }

morea_status morea_problem_synthesize(const char *spec_path, uint64_t seed, morea_problem **out) {
    return guarded([&] {
        require(out, "out");
        morea::SynthSpec spec = spec_path ? morea::load_synth_spec(spec_path) : morea::default_synth_spec();
        spec.seed = seed;
        *out = new morea_problem{morea::generate_case(spec)};
    });
}

morea_status morea_problem_load(const char *dir, morea_problem **out) {
    return guarded([&] {
        require(dir, "dir");
        require(out, "out");
        *out = new morea_problem{morea::load_problem(dir)};
    });
}

morea_status morea_problem_save(const morea_problem *p, const char *dir) {
    return guarded([&] {
        require(p, "problem");
        require(dir, "dir");
        morea::save_problem(dir, p->bundle);
    });
}

void morea_problem_free(morea_problem *p) { delete p; }

morea_status morea_register(const morea_problem *p, const morea_config *cfg, const char *out_dir,
                            morea_progress_fn progress, void *user) {
    return guarded([&] {
        require(p, "problem");
        require(cfg, "config");
        require(out_dir, "out_dir");
        morea::GenerationCallback cb;
        if (progress)
            cb = [&](const morea::GenerationView &v) {
                return progress(v.stats.generation, v.stats.hypervolume, v.stats.best_guidance, v.stats.archive_size,
                                user) == 0;
            };
        morea::register_problem(p->bundle, cfg->cfg, out_dir, cb);
    });
}

morea_status morea_evaluate_genotype(const morea_problem *p, const char *genotype_path, double margin_mm,
                                     const char *out_dir) {
    return guarded([&] {
        require(p, "problem");
        require(genotype_path, "genotype_path");
        require(out_dir, "out_dir");
        if (!(margin_mm >= 0.0)) throw morea::ConfigError("margin must be non-negative");
        const auto g = morea::load_genotype(genotype_path);
        write_report(morea::evaluate_genotype(p->bundle, g, margin_mm), out_dir);
    });
}

morea_status morea_evaluate_dvfs(const morea_problem *p, const char *forward_dvf, const char *inverse_dvf,
                                 double margin_mm, const char *out_dir) {
    return guarded([&] {
        require(p, "problem");
        require(forward_dvf, "forward_dvf");
        require(inverse_dvf, "inverse_dvf");
        require(out_dir, "out_dir");
        if (!(margin_mm >= 0.0)) throw morea::ConfigError("margin must be non-negative");
        const auto fwd = morea::load_dvf(forward_dvf);
        const auto inv = morea::load_dvf(inverse_dvf);
        write_report(morea::evaluate_dvfs(p->bundle, fwd, inv, margin_mm), out_dir);
    });
}

morea_status morea_rasterize(const morea_problem *p, const char *genotype_path, const char *out_dir) {
    return guarded([&] {
        require(p, "problem");
        require(genotype_path, "genotype_path");
        require(out_dir, "out_dir");
        morea::rasterize_to(morea::load_genotype(genotype_path), p->bundle, out_dir);
    });
}

morea_status morea_render(const char *volume_path, const char *const *mask_paths, size_t mask_count,
                          const char *genotype_path, const char *forward_dvf, const char *inverse_dvf,
                          morea_render_mode mode, int slice_axis, int slice_index, const char *out_path) {
    return guarded([&] {
        require(volume_path, "volume_path");
        require(out_path, "out_path");
        if (mask_count > 0) require(mask_paths, "mask_paths");
        if (genotype_path && (forward_dvf || inverse_dvf))
            throw morea::ConfigError("give either a genotype or DVF files, not both");
        const morea::Volume volume = morea::load_volume(volume_path);
        std::vector<morea::LabelMask> masks;
        for (size_t i = 0; i < mask_count; ++i) {
            require(mask_paths[i], "mask path");
            masks.push_back(morea::load_mask(mask_paths[i]));
        }
        std::optional<morea::DeformationVectorField> fwd, inv;
        if (genotype_path) {
            const auto g = morea::load_genotype(genotype_path);
            fwd = morea::rasterize_dvf(g, morea::Direction::Forward, volume.geometry);
            inv = morea::rasterize_dvf(g, morea::Direction::Inverse, volume.geometry);
        }
        if (forward_dvf) fwd = morea::load_dvf(forward_dvf);
        if (inverse_dvf) inv = morea::load_dvf(inverse_dvf);
        morea::RenderOptions opt;
        switch (mode) {
        case MOREA_RENDER_CONTOURS: opt.mode = morea::RenderMode::Contours; break;
        case MOREA_RENDER_GRID: opt.mode = morea::RenderMode::Grid; break;
        case MOREA_RENDER_ARROWS: opt.mode = morea::RenderMode::Arrows; break;
        default: throw morea::ConfigError("unknown render mode");
        }
        opt.axis = slice_axis;
        opt.index = slice_index;
        const auto img = morea::render_slice(volume, masks, fwd ? &*fwd : nullptr, inv ? &*inv : nullptr, opt);
        morea::save_ppm(out_path, img);
    });
}

morea_status morea_export_front(const char *run_dir, morea_front_format format, const char *out_path) {
    return guarded([&] {
        require(run_dir, "run_dir");
        require(out_path, "out_path");
        if (format != MOREA_FRONT_CSV && format != MOREA_FRONT_JSON) throw morea::ConfigError("unknown front format");
        morea::export_front(run_dir, format == MOREA_FRONT_CSV ? morea::FrontFormat::Csv : morea::FrontFormat::Json,
                            out_path);
    });
}

morea_status morea_front_size(const char *run_dir, size_t *size) {
    return guarded([&] {
        require(run_dir, "run_dir");
        require(size, "size");
        *size = morea::load_front(run_dir).entries.size();
    });
}

} // extern "C"
