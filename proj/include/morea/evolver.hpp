#pragma once

// MO-RV-GOMEA over dual-dynamic meshes: initialization noise, selection and
// clustering, per-element Gaussian models, optimal mixing with repair, the
// elitist archive and adaptive steering.

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "morea/linkage.hpp"
#include "morea/mesh.hpp"
#include "morea/objectives.hpp"

namespace morea {

// Random streams ----------------------------------------------------------------

/// Deterministic 64-bit stream with explicit normal/uniform draws, so results
/// do not depend on the standard library's distribution implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    /// Stream for an arbitrary key tuple.
    static Rng keyed(std::initializer_list<std::uint64_t> key);

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double normal();

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Configuration -------------------------------------------------------------

enum class NoiseMethod { GlobalGaussian, RbfKernels };

struct NoiseConfig {
    NoiseMethod method = NoiseMethod::GlobalGaussian;
    double factor = 1.0;
    int kernel_count = 8;
    double kernel_weight_min = 0.5;
    double kernel_weight_max = 1.0;
    int rounds = 10;

    void validate() const;
};

struct EvolverConfig {
    int population_size = 700;
    int num_clusters = 10;
    int archive_capacity = 2000;
    int num_generations = 500;
    bool steering_enabled = true;
    int steering_activation_generation = 100;
    double steering_ratio = 1.5;
    double selection_fraction = 0.35;
    bool repair_enabled = true;
    int repair_samples = 64;
    double repair_sigma_scale = 0.5;
    NoiseConfig noise;
    std::uint64_t seed = 0;
    int num_threads = 1;

    void validate() const;
};

// Solutions and archive -------------------------------------------------------

struct Solution {
    DualMeshGenotype genotype;
    Accumulators acc;
    ObjectiveVector objectives;
    bool feasible = true;
};

struct ArchiveEntry {
    std::uint64_t id = 0;
    ObjectiveVector objectives;
    std::vector<Vec3> source;
    std::vector<Vec3> target;
};

class ElitistArchive {
  public:
    explicit ElitistArchive(std::size_t capacity) : capacity_(capacity) {}

    /// Rejects weakly dominated entries and entries above the steering bound;
    /// removes members the new entry dominates and prunes to capacity.
    bool insert(const ObjectiveVector &obj, const std::vector<Vec3> &source, const std::vector<Vec3> &target);
    bool insert(const ObjectiveVector &obj) { return insert(obj, {}, {}); }

    /// True if insert() would keep `obj` (steering bound and weak dominance).
    bool would_accept(const ObjectiveVector &obj) const;
    /// True if no member dominates `obj`.
    bool non_dominated(const ObjectiveVector &obj) const;

    /// Enables the guidance bound ratio * (best guidance) and purges violators.
    void set_steering(double ratio);
    bool steering_active() const { return steering_ratio_ > 0.0; }
    double steering_bound() const;
    bool satisfies_steering(const ObjectiveVector &obj) const;
    /// Removes members above the steering bound; returns how many.
    std::size_t purge();

    double best_guidance() const;
    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    const std::vector<ArchiveEntry> &entries() const { return entries_; }
    /// Entries with the smallest value per objective (lowest position on ties).
    std::array<std::size_t, 3> extreme_positions() const;
    /// Members removed by capacity pruning so far.
    std::uint64_t pruned() const { return pruned_; }

  private:
    void prune();
    void erase_at(std::size_t pos);
    double normalized_distance(std::size_t i, std::size_t j) const;
    void recompute_nn(std::size_t i);
    void rebuild_nn();

    std::size_t capacity_;
    std::vector<ArchiveEntry> entries_;
    // Nearest-neighbor cache for pruning, valid for the normalization in lo_/scale_.
    bool nn_valid_ = false;
    std::array<double, 3> lo_{};
    std::array<double, 3> hi_{};
    std::array<double, 3> scale_{};
    std::vector<double> nn_dist_;
    std::vector<std::uint64_t> nn_id_;
    std::uint64_t next_id_ = 0;
    std::uint64_t pruned_ = 0;
    double steering_ratio_ = 0.0;
};

/// Exact dominated volume of `front` bounded by `ref` (all minimized).
/// Throws DataError if a point does not dominate the reference.
double hypervolume3(std::span<const ObjectiveVector> front, const ObjectiveVector &ref);

/// Same, silently skipping points that do not dominate the reference.
double hypervolume3_clipped(std::span<const ObjectiveVector> front, const ObjectiveVector &ref);

// Variation -------------------------------------------------------------------

/// Domination ranks (0 = non-dominated) by repeated front peeling.
std::vector<int> domination_ranks(std::span<const ObjectiveVector> objs);

struct Clustering {
    std::vector<int> selected;
    std::vector<std::vector<int>> clusters;
    /// Objective vector of each cluster's leader.
    std::vector<ObjectiveVector> leaders;
    /// Normalization used for leader distances.
    ObjectiveVector lo;
    ObjectiveVector scale;

    /// Index of the cluster whose leader is nearest to `obj`.
    int nearest(const ObjectiveVector &obj) const;
};

Clustering select_and_cluster(std::span<const ObjectiveVector> objs, double selection_fraction, int k);

using Vector12 = Eigen::Matrix<double, 12, 1>;
using Matrix12 = Eigen::Matrix<double, 12, 12>;

struct Gaussian12 {
    Vector12 mean;
    Matrix12 covariance;
    Matrix12 cholesky;

    Vector12 sample(Rng &rng) const;
};

/// The 12 variables of an element: a and b on the source mesh, then on the target mesh.
Vector12 element_variables(const DualMeshGenotype &g, const FosElement &e);
void set_element_variables(DualMeshGenotype &g, const FosElement &e, const Vector12 &x);

/// Maximum-likelihood mean and covariance over the members, regularized by
/// (1e-10 * trace / 12 + 1e-12) * I.
Gaussian12 estimate_distribution(std::span<const DualMeshGenotype *const> members, const FosElement &e);

enum class RepairOutcome { NoOp, Repaired, Improved, Aborted };

struct RepairResult {
    RepairOutcome outcome = RepairOutcome::NoOp;
    int points_moved = 0;
};

/// Point-wise Gaussian repair of folds among `tets` on one side, moving only
/// `movable` points (ascending). Never increases the total fold severity.
RepairResult repair(DualMeshGenotype &g, Side side, const ReferenceSigns &ref, std::span<const int> tets,
                    std::span<const int> movable, Rng &rng, int samples, double sigma_scale);

/// Sum of |volume| over violating tets and their count.
std::pair<double, int> fold_severity(const DualMeshGenotype &g, Side side, const ReferenceSigns &ref,
                                     std::span<const int> tets);

// Population initialization ---------------------------------------------------

/// `scale_mm` sets the noise amplitude for factor 1 (one voxel spacing).
std::vector<DualMeshGenotype> init_population(const DualMeshGenotype &base, const ReferenceSigns &ref,
                                              const EvolverConfig &cfg, double scale_mm);

// Run -------------------------------------------------------------------------

struct GenerationStats {
    int generation = 0;
    double hypervolume = 0.0;
    double best_guidance = 0.0;
    std::size_t archive_size = 0;
};

struct MixingCounters {
    std::uint64_t proposals = 0;
    std::uint64_t accepted = 0;
    std::uint64_t folded = 0;
    std::uint64_t repaired = 0;
    std::uint64_t reverted_folds = 0;
    /// Largest number of times one tet was re-evaluated within one color class.
    int max_tet_touches_per_class = 0;
};

struct GenerationView {
    const GenerationStats &stats;
    const ElitistArchive &archive;
    const std::vector<Solution> &population;
    const MixingCounters &counters;
    bool steering_active = false;
};

/// Return false to stop after the current generation.
using GenerationCallback = std::function<bool(const GenerationView &)>;

struct RunInputs {
    const DualMeshGenotype *base = nullptr;
    const ReferenceSigns *signs = nullptr;
    const Evaluator *evaluator = nullptr;
    const FosPlan *plan = nullptr;
    double noise_scale_mm = 1.0;
};

struct RunResult {
    std::shared_ptr<const TetTopology> topology;
    ElitistArchive archive{1};
    std::vector<GenerationStats> stats;
    ObjectiveVector reference_point;
    MixingCounters counters;
    int generations_run = 0;
};

/// One generation of optimal mixing for one solution; exposed for timing.
/// `models` holds one distribution per FOS element (the solution's cluster).
void mix_solution(Solution &s, int solution_id, int generation, std::span<const Gaussian12> models,
                  const RunInputs &in, const EvolverConfig &cfg, ElitistArchive &archive, MixingCounters &counters);

RunResult run_evolver(const RunInputs &in, const EvolverConfig &cfg, const GenerationCallback &callback = {});

} // namespace morea
