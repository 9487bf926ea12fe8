// Command-line front end; everything goes through the C API.

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "morea/morea.h"

namespace {

int report(morea_status s) {
    if (s != MOREA_OK) std::fprintf(stderr, "morea: %s\n", morea_last_error());
    return static_cast<int>(s);
}

struct Problem {
    morea_problem *p = nullptr;
    ~Problem() { morea_problem_free(p); }
};

struct Config {
    morea_config *c = nullptr;
    ~Config() { morea_config_free(c); }
};

int progress(int generation, double hv, double best_guidance, size_t archive_size, void *user) {
    if (*static_cast<bool *>(user))
        std::fprintf(stderr, "gen %d  hv %.6g  best_guidance %.6g  archive %zu\n", generation, hv, best_guidance,
                     archive_size);
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"morea: multi-objective deformable registration"};
    app.require_subcommand(1);

    std::string config_path, problem_dir, out, genotype, fwd, inv, run_dir, spec, volume, format = "csv",
                                                                                       mode = "contours";
    std::optional<std::uint64_t> seed;
    std::vector<std::string> masks;
    int slice_axis = 2, slice_index = -1;
    double margin_mm = 15.0;
    bool verbose = false;

    auto *synth = app.add_subcommand("synth", "Generate a synthetic problem directory");
    synth->add_option("--out", out, "Problem directory to write")->required();
    synth->add_option("--spec", spec, "Synthetic case spec (JSON); default preset if omitted");
    synth->add_option("--seed", seed, "Seed for guidance and landmark sampling");

    auto *reg = app.add_subcommand("register", "Run the evolver and write a run directory");
    reg->add_option("--config", config_path, "Run configuration")->required();
    reg->add_option("--problem", problem_dir, "Problem directory")->required();
    reg->add_option("--out", out, "Run directory to write")->required();
    reg->add_option("--seed", seed, "Overrides the config seed");
    reg->add_flag("-v,--verbose", verbose, "Print per-generation stats");

    auto *eval = app.add_subcommand("evaluate", "Metrics for a genotype or a DVF pair");
    eval->add_option("--problem", problem_dir, "Problem directory")->required();
    eval->add_option("--genotype", genotype, "Genotype file");
    eval->add_option("--dvf-forward", fwd, "Forward DVF (source grid)");
    eval->add_option("--dvf-inverse", inv, "Inverse DVF (target grid)");
    eval->add_option("--margin-mm", margin_mm, "Border margin removed before comparing");
    eval->add_option("--out", out, "Report directory")->required();

    auto *rast = app.add_subcommand("rasterize", "Rasterize a genotype into forward and inverse DVFs");
    rast->add_option("--problem", problem_dir, "Problem directory")->required();
    rast->add_option("--genotype", genotype, "Genotype file")->required();
    rast->add_option("--out", out, "Output directory")->required();

    auto *render = app.add_subcommand("render", "Render a slice as a PPM image");
    render->add_option("--volume", volume, "Volume to show")->required();
    render->add_option("--mask", masks, "Mask whose outline is drawn (repeatable)");
    render->add_option("--genotype", genotype, "Genotype rasterized on the volume grid");
    render->add_option("--dvf-forward", fwd, "Forward DVF for grid and arrow renders");
    render->add_option("--dvf-inverse", inv, "Inverse DVF that warps the contours");
    render->add_option("--mode", mode, "contours, grid or arrows")
        ->check(CLI::IsMember({"contours", "grid", "arrows"}));
    render->add_option("--slice-axis", slice_axis, "0 = x, 1 = y, 2 = z")->check(CLI::Range(0, 2));
    render->add_option("--slice-index", slice_index, "Slice index; middle slice if omitted");
    render->add_option("--out", out, "Output image")->required();

    auto *exp = app.add_subcommand("export-front", "Tabulate a run's front");
    exp->add_option("--run", run_dir, "Run directory")->required();
    exp->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    exp->add_option("--out", out, "Output table")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : MOREA_ERR_CONFIG;
    }

    if (synth->parsed()) {
        Problem p;
        if (const auto s = morea_problem_synthesize(spec.empty() ? nullptr : spec.c_str(), seed.value_or(0), &p.p))
            return report(s);
        return report(morea_problem_save(p.p, out.c_str()));
    }
    if (reg->parsed()) {
        Config c;
        Problem p;
        if (const auto s = morea_config_load(config_path.c_str(), &c.c)) return report(s);
        if (seed)
            if (const auto s = morea_config_set_seed(c.c, *seed)) return report(s);
        if (const auto s = morea_problem_load(problem_dir.c_str(), &p.p)) return report(s);
        return report(morea_register(p.p, c.c, out.c_str(), progress, &verbose));
    }
    if (eval->parsed()) {
        const bool by_genotype = !genotype.empty();
        const bool by_dvf = !fwd.empty() && !inv.empty();
        if (by_genotype == by_dvf) {
            std::fprintf(stderr, "morea: evaluate needs --genotype or both --dvf-forward and --dvf-inverse\n");
            return MOREA_ERR_CONFIG;
        }
        Problem p;
        if (const auto s = morea_problem_load(problem_dir.c_str(), &p.p)) return report(s);
        if (by_genotype) return report(morea_evaluate_genotype(p.p, genotype.c_str(), margin_mm, out.c_str()));
        return report(morea_evaluate_dvfs(p.p, fwd.c_str(), inv.c_str(), margin_mm, out.c_str()));
    }
    if (rast->parsed()) {
        Problem p;
        if (const auto s = morea_problem_load(problem_dir.c_str(), &p.p)) return report(s);
        return report(morea_rasterize(p.p, genotype.c_str(), out.c_str()));
    }
    if (render->parsed()) {
        std::vector<const char *> mask_ptrs;
        for (const auto &m : masks) mask_ptrs.push_back(m.c_str());
        const morea_render_mode m = mode == "grid" ? MOREA_RENDER_GRID
                                    : mode == "arrows" ? MOREA_RENDER_ARROWS
                                                       : MOREA_RENDER_CONTOURS;
        return report(morea_render(volume.c_str(), mask_ptrs.data(), mask_ptrs.size(),
                                   genotype.empty() ? nullptr : genotype.c_str(), fwd.empty() ? nullptr : fwd.c_str(),
                                   inv.empty() ? nullptr : inv.c_str(), m, slice_axis, slice_index, out.c_str()));
    }
    if (exp->parsed())
        return report(
            morea_export_front(run_dir.c_str(), format == "json" ? MOREA_FRONT_JSON : MOREA_FRONT_CSV, out.c_str()));
    return MOREA_ERR_CONFIG;
}
