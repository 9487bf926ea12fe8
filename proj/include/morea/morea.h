/* C interface of the morea registration engine.
 *
 * Every function returns a morea_status. On failure the message of the most
 * recent error on the calling thread is available from morea_last_error().
 * Handles are opaque and must be released with their _free function.
 */
#ifndef MOREA_MOREA_H
#define MOREA_MOREA_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MOREA_API __declspec(dllexport)
#else
#define MOREA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum morea_status {
    MOREA_OK = 0,
    MOREA_ERR_CONFIG = 2,
    MOREA_ERR_DATA = 3,
    MOREA_ERR_RUNTIME = 4
} morea_status;

typedef enum morea_render_mode {
    MOREA_RENDER_CONTOURS = 0,
    MOREA_RENDER_GRID = 1,
    MOREA_RENDER_ARROWS = 2
} morea_render_mode;

typedef enum morea_front_format { MOREA_FRONT_CSV = 0, MOREA_FRONT_JSON = 1 } morea_front_format;

typedef struct morea_config morea_config;
typedef struct morea_problem morea_problem;

/* Per-generation progress; return nonzero to stop the run early. */
typedef int (*morea_progress_fn)(int generation, double hypervolume, double best_guidance, size_t archive_size,
                                 void *user);

MOREA_API const char *morea_version(void);
/* Valid until the next failing call on this thread; "" when none. */
MOREA_API const char *morea_last_error(void);

MOREA_API morea_status morea_config_load(const char *path, morea_config **out);
MOREA_API morea_status morea_config_parse(const char *text, morea_config **out);
MOREA_API morea_status morea_config_set_seed(morea_config *cfg, uint64_t seed);
/* Canonical text; the returned buffer lives as long as the handle. */
MOREA_API morea_status morea_config_serialize(const morea_config *cfg, const char **text);
MOREA_API void morea_config_free(morea_config *cfg);

/* spec_path may be NULL for the default preset. */
MOREA_API morea_status morea_problem_synthesize(const char *spec_path, uint64_t seed, morea_problem **out);
MOREA_API morea_status morea_problem_load(const char *dir, morea_problem **out);
MOREA_API morea_status morea_problem_save(const morea_problem *p, const char *dir);
MOREA_API void morea_problem_free(morea_problem *p);

MOREA_API morea_status morea_register(const morea_problem *p, const morea_config *cfg, const char *out_dir,
                                      morea_progress_fn progress, void *user);

/* Writes metrics.json and metrics.csv into out_dir. */
MOREA_API morea_status morea_evaluate_genotype(const morea_problem *p, const char *genotype_path, double margin_mm,
                                               const char *out_dir);
MOREA_API morea_status morea_evaluate_dvfs(const morea_problem *p, const char *forward_dvf, const char *inverse_dvf,
                                           double margin_mm, const char *out_dir);

/* Writes dvf_forward and dvf_inverse into out_dir. */
MOREA_API morea_status morea_rasterize(const morea_problem *p, const char *genotype_path, const char *out_dir);

/* Slice render of a volume. Deformation comes from a genotype (rasterized on
 * the volume grid) or from explicit DVF files; any of them may be NULL.
 * slice_index < 0 selects the middle slice. */
MOREA_API morea_status morea_render(const char *volume_path, const char *const *mask_paths, size_t mask_count,
                                    const char *genotype_path, const char *forward_dvf, const char *inverse_dvf,
                                    morea_render_mode mode, int slice_axis, int slice_index, const char *out_path);

MOREA_API morea_status morea_export_front(const char *run_dir, morea_front_format format, const char *out_path);
MOREA_API morea_status morea_front_size(const char *run_dir, size_t *size);

#ifdef __cplusplus
}
#endif

#endif
