#pragma once

// End-to-end steps behind the CLI: settings from a config, problem
// preparation, registration runs, evaluation and front export.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "morea/config.hpp"
#include "morea/evolver.hpp"
#include "morea/meshgen.hpp"
#include "morea/metrics.hpp"
#include "morea/synth.hpp"

namespace morea {

struct RunSettings {
    EvolverConfig evolver;
    PointPlacementConfig mesh;
    double sampling_rate = 1.0;
    MagnitudeMetric magnitude = MagnitudeMetric::Biomechanical;
    /// `elasticity.<label>` keys; they override the problem's own factors.
    std::map<std::string, double> elasticity;
    double margin_mm = kDefaultMetricMarginMm;
    /// Front positions (sorted by guidance) exported besides the best-guidance solution.
    std::vector<int> tradeoff_indices;
    std::vector<std::string> warnings;
};

/// Reads every honored key; `seed` is required.
RunSettings settings_from_config(const RunConfig &cfg);

/// Normalized images, guidance field, initial mesh, linkage and evaluator for one run.
struct PreparedProblem {
    Volume source;
    Volume target;
    GuidanceField field;
    InitialMesh mesh;
    FosPlan plan;
    std::unique_ptr<Evaluator> evaluator;
    double noise_scale_mm = 1.0;

    RunInputs inputs() const { return {&mesh.genotype, &mesh.signs, evaluator.get(), &plan, noise_scale_mm}; }
};

std::unique_ptr<PreparedProblem> prepare_problem(const ProblemBundle &problem, const RunSettings &settings);

struct FrontEntry {
    ObjectiveVector objectives;
    std::vector<Vec3> source;
    std::vector<Vec3> target;
};

/// Archive sorted by guidance ascending (ties: magnitude, then intensity).
std::vector<FrontEntry> sorted_front(const ElitistArchive &archive);

struct TradeoffPick {
    std::string name;
    std::size_t index = 0;
};

/// Best guidance, knee (largest normalized distance to the worst point) and
/// best magnitude within `steering_ratio` times the best guidance.
std::vector<TradeoffPick> default_tradeoffs(const std::vector<FrontEntry> &front, double steering_ratio);

struct RegisterOutcome {
    RunResult run;
    std::vector<FrontEntry> front;
    std::vector<TradeoffPick> picks;
    std::vector<MetricReport> reports;
};

/// Effective config after `--seed`: the snapshot written to the run directory.
RunConfig with_seed(RunConfig cfg, std::optional<std::uint64_t> seed);

/// Runs the evolver and writes the run directory.
RegisterOutcome register_problem(const ProblemBundle &problem, const RunConfig &cfg, const std::filesystem::path &out,
                                 const GenerationCallback &callback = {});

MetricReport evaluate_genotype(const ProblemBundle &problem, const DualMeshGenotype &g, double margin_mm);
MetricReport evaluate_dvfs(const ProblemBundle &problem, const DeformationVectorField &forward,
                           const DeformationVectorField &inverse, double margin_mm);

/// Writes `dvf_forward` (source grid) and `dvf_inverse` (target grid) into `out`.
void rasterize_to(const DualMeshGenotype &g, const ProblemBundle &problem, const std::filesystem::path &out);

void write_stats_csv(const std::filesystem::path &path, const std::vector<GenerationStats> &stats);

struct StoredFront {
    std::uint64_t seed = 0;
    std::shared_ptr<const TetTopology> topology;
    std::vector<FrontEntry> entries;
    std::vector<TradeoffPick> picks;
};

void save_front(const std::filesystem::path &run_dir, const StoredFront &front);
StoredFront load_front(const std::filesystem::path &run_dir);

enum class FrontFormat { Csv, Json };

/// One row per front member, sorted by guidance ascending.
void export_front(const std::filesystem::path &run_dir, FrontFormat format, const std::filesystem::path &out);

/// Mean |target - source| over mesh points whose source position lies inside `mask`.
double mean_displacement_inside(const DualMeshGenotype &g, const LabelMask &mask);

} // namespace morea
