#include "morea/evolver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <thread>

#include "morea/error.hpp"
#include "morea/sobol.hpp"

namespace morea {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t uz(int i) { return static_cast<std::size_t>(i); }

template <class Fn>
void parallel_for(std::size_t count, int threads, Fn &&fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    const std::size_t n = std::min(workers, count);
    pool.reserve(n);
    for (std::size_t w = 0; w < n; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) fn(i);
        });
}

} // namespace

// Rng -------------------------------------------------------------------------

Rng Rng::keyed(std::initializer_list<std::uint64_t> key) {
    std::uint64_t h = 0x6a09e667f3bcc908ULL;
    for (std::uint64_t k : key) h = splitmix64(h ^ splitmix64(k));
    return Rng(h);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
}

// Config ----------------------------------------------------------------------

void NoiseConfig::validate() const {
    if (!(factor >= 0.0) || !std::isfinite(factor)) throw ConfigError("noise factor must be >= 0");
    if (kernel_count < 1) throw ConfigError("noise kernel count must be positive");
    if (rounds < 1) throw ConfigError("noise rounds must be positive");
    if (!(kernel_weight_min >= 0.0) || !(kernel_weight_max >= kernel_weight_min))
        throw ConfigError("noise kernel weight range must satisfy 0 <= min <= max");
}

void EvolverConfig::validate() const {
    if (population_size < 1) throw ConfigError("population_size must be positive");
    if (num_clusters < 1) throw ConfigError("num_clusters must be positive");
    if (archive_capacity < 1) throw ConfigError("archive_capacity must be positive");
    if (num_generations < 0) throw ConfigError("num_generations must be >= 0");
    if (steering_activation_generation < 0) throw ConfigError("steering activation generation must be >= 0");
    if (!(steering_ratio > 1.0)) throw ConfigError("steering_ratio must be > 1");
    if (!(selection_fraction > 0.0 && selection_fraction <= 1.0))
        throw ConfigError("selection_fraction must be in (0, 1]");
    if (repair_samples < 1) throw ConfigError("repair_samples must be positive");
    if (!(repair_sigma_scale > 0.0)) throw ConfigError("repair sigma scale must be positive");
    if (num_threads < 1) throw ConfigError("num_threads must be positive");
    noise.validate();
}

// Archive ---------------------------------------------------------------------

bool ElitistArchive::would_accept(const ObjectiveVector &obj) const {
    if (!satisfies_steering(obj)) return false;
    for (const ArchiveEntry &e : entries_)
        if (weakly_dominates(e.objectives, obj)) return false;
    return true;
}

bool ElitistArchive::non_dominated(const ObjectiveVector &obj) const {
    for (const ArchiveEntry &e : entries_)
        if (dominates(e.objectives, obj)) return false;
    return true;
}

double ElitistArchive::best_guidance() const {
    double best = kInf;
    for (const ArchiveEntry &e : entries_) best = std::min(best, e.objectives.guidance);
    return best;
}

double ElitistArchive::steering_bound() const {
    if (!steering_active() || entries_.empty()) return kInf;
    return steering_ratio_ * best_guidance();
}

bool ElitistArchive::satisfies_steering(const ObjectiveVector &obj) const {
    if (!steering_active() || entries_.empty()) return true;
    return obj.guidance <= steering_bound();
}

void ElitistArchive::set_steering(double ratio) {
    steering_ratio_ = ratio;
    purge();
}

std::size_t ElitistArchive::purge() {
    if (!steering_active() || entries_.empty()) return 0;
    const double bound = steering_bound();
    std::size_t removed = 0;
    for (std::size_t i = entries_.size(); i-- > 0;)
        if (entries_[i].objectives.guidance > bound) {
            erase_at(i);
            ++removed;
        }
    return removed;
}

std::array<std::size_t, 3> ElitistArchive::extreme_positions() const {
    std::array<std::size_t, 3> out{0, 0, 0};
    for (std::size_t m = 0; m < 3; ++m)
        for (std::size_t i = 1; i < entries_.size(); ++i)
            if (entries_[i].objectives[m] < entries_[out[m]].objectives[m]) out[m] = i;
    return out;
}

double ElitistArchive::normalized_distance(std::size_t i, std::size_t j) const {
    double s = 0.0;
    for (std::size_t m = 0; m < 3; ++m) {
        const double d = (entries_[i].objectives[m] - entries_[j].objectives[m]) / scale_[m];
        s += d * d;
    }
    return std::sqrt(s);
}

void ElitistArchive::recompute_nn(std::size_t i) {
    nn_dist_[i] = kInf;
    nn_id_[i] = entries_[i].id;
    for (std::size_t j = 0; j < entries_.size(); ++j) {
        if (j == i) continue;
        const double d = normalized_distance(i, j);
        if (d < nn_dist_[i]) {
            nn_dist_[i] = d;
            nn_id_[i] = entries_[j].id;
        }
    }
}

void ElitistArchive::rebuild_nn() {
    lo_.fill(kInf);
    hi_.fill(-kInf);
    for (const ArchiveEntry &e : entries_)
        for (std::size_t m = 0; m < 3; ++m) {
            lo_[m] = std::min(lo_[m], e.objectives[m]);
            hi_[m] = std::max(hi_[m], e.objectives[m]);
        }
    for (std::size_t m = 0; m < 3; ++m) scale_[m] = hi_[m] > lo_[m] ? hi_[m] - lo_[m] : 1.0;
    const std::size_t n = entries_.size();
    nn_dist_.assign(n, kInf);
    nn_id_.resize(n);
    for (std::size_t i = 0; i < n; ++i) nn_id_[i] = entries_[i].id;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = normalized_distance(i, j);
            if (d < nn_dist_[i]) {
                nn_dist_[i] = d;
                nn_id_[i] = entries_[j].id;
            }
            if (d < nn_dist_[j]) {
                nn_dist_[j] = d;
                nn_id_[j] = entries_[i].id;
            }
        }
    nn_valid_ = true;
}

void ElitistArchive::erase_at(std::size_t pos) {
    const ArchiveEntry removed = std::move(entries_[pos]);
    entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(pos));
    if (!nn_valid_) return;
    for (std::size_t m = 0; m < 3; ++m)
        if (removed.objectives[m] == lo_[m] || removed.objectives[m] == hi_[m]) {
            nn_valid_ = false;
            return;
        }
    nn_dist_.erase(nn_dist_.begin() + static_cast<std::ptrdiff_t>(pos));
    nn_id_.erase(nn_id_.begin() + static_cast<std::ptrdiff_t>(pos));
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (nn_id_[i] == removed.id) recompute_nn(i);
}

bool ElitistArchive::insert(const ObjectiveVector &obj, const std::vector<Vec3> &source,
                            const std::vector<Vec3> &target) {
    if (!would_accept(obj)) return false;
    for (std::size_t i = entries_.size(); i-- > 0;)
        if (dominates(obj, entries_[i].objectives)) erase_at(i);

    const bool new_best = entries_.empty() || obj.guidance < best_guidance();
    entries_.push_back({next_id_++, obj, source, target});
    if (nn_valid_) {
        bool inside = true;
        for (std::size_t m = 0; m < 3; ++m) inside = inside && obj[m] >= lo_[m] && obj[m] <= hi_[m];
        if (!inside) {
            nn_valid_ = false;
        } else {
            const std::size_t k = entries_.size() - 1;
            nn_dist_.push_back(kInf);
            nn_id_.push_back(entries_[k].id);
            for (std::size_t j = 0; j < k; ++j) {
                const double d = normalized_distance(j, k);
                if (d < nn_dist_[k]) {
                    nn_dist_[k] = d;
                    nn_id_[k] = entries_[j].id;
                }
                if (d < nn_dist_[j]) {
                    nn_dist_[j] = d;
                    nn_id_[j] = entries_[k].id;
                }
            }
        }
    }
    if (new_best && steering_active()) purge();
    if (entries_.size() > capacity_) prune();
    return true;
}

void ElitistArchive::prune() {
    while (entries_.size() > capacity_) {
        if (!nn_valid_) rebuild_nn();
        std::size_t victim = entries_.size();
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            bool extreme = false;
            for (std::size_t m = 0; m < 3; ++m) extreme = extreme || entries_[i].objectives[m] == lo_[m];
            if (extreme) continue;
            if (victim == entries_.size() || nn_dist_[i] < nn_dist_[victim]) victim = i;
        }
        if (victim == entries_.size()) victim = entries_.size() - 1; // everything is an extreme
        erase_at(victim);
        ++pruned_;
    }
}

// Hypervolume -------------------------------------------------------------------

namespace {

double hv_sweep(std::vector<ObjectiveVector> pts, const ObjectiveVector &ref) {
    std::sort(pts.begin(), pts.end(), [](const ObjectiveVector &a, const ObjectiveVector &b) {
        return a.magnitude < b.magnitude;
    });
    // 2-D slice over (intensity, guidance), kept sorted by intensity.
    std::vector<std::pair<double, double>> slice;
    slice.reserve(pts.size());
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const std::pair<double, double> q{pts[i].intensity, pts[i].guidance};
        slice.insert(std::upper_bound(slice.begin(), slice.end(), q), q);
        const double next = i + 1 < pts.size() ? pts[i + 1].magnitude : ref.magnitude;
        const double width = next - pts[i].magnitude;
        if (width <= 0.0) continue;
        double area = 0.0;
        double zmin = ref.guidance;
        for (const auto &[y, z] : slice)
            if (z < zmin) {
                area += (ref.intensity - y) * (zmin - z);
                zmin = z;
            }
        total += width * area;
    }
    return total;
}

bool strictly_inside(const ObjectiveVector &p, const ObjectiveVector &ref) {
    return p.magnitude < ref.magnitude && p.intensity < ref.intensity && p.guidance < ref.guidance;
}

} // namespace

double hypervolume3(std::span<const ObjectiveVector> front, const ObjectiveVector &ref) {
    for (const ObjectiveVector &p : front)
        if (!strictly_inside(p, ref)) throw DataError("hypervolume: point does not dominate the reference point");
    return hv_sweep({front.begin(), front.end()}, ref);
}

double hypervolume3_clipped(std::span<const ObjectiveVector> front, const ObjectiveVector &ref) {
    std::vector<ObjectiveVector> pts;
    for (const ObjectiveVector &p : front)
        if (strictly_inside(p, ref)) pts.push_back(p);
    return hv_sweep(std::move(pts), ref);
}

// Selection and clustering -----------------------------------------------------

std::vector<int> domination_ranks(std::span<const ObjectiveVector> objs) {
    const std::size_t n = objs.size();
    std::vector<std::vector<int>> dominated(n);
    std::vector<int> count(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (dominates(objs[i], objs[j])) {
                dominated[i].push_back(static_cast<int>(j));
                ++count[j];
            } else if (dominates(objs[j], objs[i])) {
                dominated[j].push_back(static_cast<int>(i));
                ++count[i];
            }
        }
    std::vector<int> rank(n, -1);
    std::vector<int> front;
    for (std::size_t i = 0; i < n; ++i)
        if (count[i] == 0) front.push_back(static_cast<int>(i));
    for (int r = 0; !front.empty(); ++r) {
        std::vector<int> next;
        for (int i : front) {
            rank[uz(i)] = r;
            for (int j : dominated[uz(i)])
                if (--count[uz(j)] == 0) next.push_back(j);
        }
        std::sort(next.begin(), next.end());
        front = std::move(next);
    }
    return rank;
}

namespace {

std::vector<double> crowding(std::span<const ObjectiveVector> objs, std::span<const int> front) {
    std::vector<double> cd(front.size(), 0.0);
    std::vector<std::size_t> order(front.size());
    for (std::size_t m = 0; m < kNumObjectives; ++m) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double va = objs[uz(front[a])][m];
            const double vb = objs[uz(front[b])][m];
            return va < vb || (va == vb && front[a] < front[b]);
        });
        const double lo = objs[uz(front[order.front()])][m];
        const double hi = objs[uz(front[order.back()])][m];
        cd[order.front()] = kInf;
        cd[order.back()] = kInf;
        if (!(hi > lo)) continue;
        for (std::size_t k = 1; k + 1 < order.size(); ++k)
            cd[order[k]] += (objs[uz(front[order[k + 1]])][m] - objs[uz(front[order[k - 1]])][m]) / (hi - lo);
    }
    return cd;
}

} // namespace

int Clustering::nearest(const ObjectiveVector &obj) const {
    int best = 0;
    double best_d = kInf;
    for (std::size_t c = 0; c < leaders.size(); ++c) {
        double d = 0.0;
        for (std::size_t m = 0; m < kNumObjectives; ++m) {
            const double x = (obj[m] - leaders[c][m]) / scale[m];
            d += x * x;
        }
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

Clustering select_and_cluster(std::span<const ObjectiveVector> objs, double selection_fraction, int k) {
    if (objs.empty()) throw DataError("select_and_cluster: empty population");
    if (k < 1) throw ConfigError("select_and_cluster: k must be positive");
    const std::size_t n = objs.size();
    const auto m = std::min(n, static_cast<std::size_t>(std::ceil(selection_fraction * static_cast<double>(n) - 1e-12)));

    // Rank, then crowding (larger first), then id.
    const auto rank = domination_ranks(objs);
    std::vector<double> cd(n, 0.0);
    const int max_rank = *std::max_element(rank.begin(), rank.end());
    for (int r = 0; r <= max_rank; ++r) {
        std::vector<int> front;
        for (std::size_t i = 0; i < n; ++i)
            if (rank[i] == r) front.push_back(static_cast<int>(i));
        const auto c = crowding(objs, front);
        for (std::size_t i = 0; i < front.size(); ++i) cd[uz(front[i])] = c[i];
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (rank[uz(a)] != rank[uz(b)]) return rank[uz(a)] < rank[uz(b)];
        if (cd[uz(a)] != cd[uz(b)]) return cd[uz(a)] > cd[uz(b)];
        return a < b;
    });

    Clustering out;
    out.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(out.selected.begin(), out.selected.end());

    std::array<double, 3> lo{kInf, kInf, kInf};
    std::array<double, 3> hi{-kInf, -kInf, -kInf};
    for (int i : out.selected)
        for (std::size_t d = 0; d < 3; ++d) {
            lo[d] = std::min(lo[d], objs[uz(i)][d]);
            hi[d] = std::max(hi[d], objs[uz(i)][d]);
        }
    out.lo = {lo[0], lo[1], lo[2]};
    out.scale = {hi[0] > lo[0] ? hi[0] - lo[0] : 1.0, hi[1] > lo[1] ? hi[1] - lo[1] : 1.0,
                 hi[2] > lo[2] ? hi[2] - lo[2] : 1.0};
    const auto dist2 = [&](const ObjectiveVector &a, const ObjectiveVector &b) {
        double s = 0.0;
        for (std::size_t d = 0; d < 3; ++d) {
            const double x = (a[d] - b[d]) / out.scale[d];
            s += x * x;
        }
        return s;
    };

    // Farthest-point leaders, starting from the member farthest from the centroid.
    const std::size_t kk = std::min(m, static_cast<std::size_t>(k));
    ObjectiveVector centroid;
    {
        double c[3] = {0, 0, 0};
        for (int i : out.selected)
            for (std::size_t d = 0; d < 3; ++d) c[d] += objs[uz(i)][d];
        centroid = {c[0] / static_cast<double>(m), c[1] / static_cast<double>(m), c[2] / static_cast<double>(m)};
    }
    std::vector<std::size_t> leaders; // positions in `selected`
    std::vector<double> mind(m, kInf);
    {
        std::size_t first = 0;
        double best = -1.0;
        for (std::size_t p = 0; p < m; ++p) {
            const double d = dist2(objs[uz(out.selected[p])], centroid);
            if (d > best) {
                best = d;
                first = p;
            }
        }
        leaders.push_back(first);
    }
    while (leaders.size() < kk) {
        const auto &last = objs[uz(out.selected[leaders.back()])];
        std::size_t pick = m;
        for (std::size_t p = 0; p < m; ++p) {
            mind[p] = std::min(mind[p], dist2(objs[uz(out.selected[p])], last));
            if (std::find(leaders.begin(), leaders.end(), p) != leaders.end()) continue;
            if (pick == m || mind[p] > mind[pick]) pick = p;
        }
        leaders.push_back(pick);
    }
    for (std::size_t c : leaders) out.leaders.push_back(objs[uz(out.selected[c])]);

    // Balanced nearest-leader assignment: capacities differ by at most one.
    std::vector<std::size_t> cap(kk, m / kk);
    for (std::size_t c = 0; c < m % kk; ++c) ++cap[c];
    struct Pair {
        double d;
        std::size_t p;
        std::size_t c;
    };
    std::vector<Pair> pairs;
    pairs.reserve(m * kk);
    for (std::size_t p = 0; p < m; ++p)
        for (std::size_t c = 0; c < kk; ++c) pairs.push_back({dist2(objs[uz(out.selected[p])], out.leaders[c]), p, c});
    std::sort(pairs.begin(), pairs.end(), [](const Pair &a, const Pair &b) {
        if (a.d != b.d) return a.d < b.d;
        if (a.p != b.p) return a.p < b.p;
        return a.c < b.c;
    });
    out.clusters.assign(kk, {});
    std::vector<bool> done(m, false);
    for (const Pair &q : pairs) {
        if (done[q.p] || out.clusters[q.c].size() >= cap[q.c]) continue;
        done[q.p] = true;
        out.clusters[q.c].push_back(out.selected[q.p]);
    }
    for (auto &c : out.clusters) std::sort(c.begin(), c.end());
    return out;
}

// Distributions -------------------------------------------------------------------

Vector12 element_variables(const DualMeshGenotype &g, const FosElement &e) {
    Vector12 x;
    const Vec3 pts[4] = {g.source[uz(e.a)], g.source[uz(e.b)], g.target[uz(e.a)], g.target[uz(e.b)]};
    for (int i = 0; i < 4; ++i)
        for (int d = 0; d < 3; ++d) x(3 * i + d) = pts[i][uz(d)];
    return x;
}

void set_element_variables(DualMeshGenotype &g, const FosElement &e, const Vector12 &x) {
    Vec3 *pts[4] = {&g.source[uz(e.a)], &g.source[uz(e.b)], &g.target[uz(e.a)], &g.target[uz(e.b)]};
    for (int i = 0; i < 4; ++i) *pts[i] = {x(3 * i), x(3 * i + 1), x(3 * i + 2)};
}

Gaussian12 estimate_distribution(std::span<const DualMeshGenotype *const> members, const FosElement &e) {
    if (members.empty()) throw DataError("estimate_distribution: empty cluster");
    Gaussian12 out;
    out.mean.setZero();
    for (const DualMeshGenotype *g : members) out.mean += element_variables(*g, e);
    out.mean /= static_cast<double>(members.size());
    out.covariance.setZero();
    for (const DualMeshGenotype *g : members) {
        const Vector12 d = element_variables(*g, e) - out.mean;
        out.covariance.noalias() += d * d.transpose();
    }
    out.covariance /= static_cast<double>(members.size());
    const double eps = 1e-10 * out.covariance.trace() / 12.0 + 1e-12;
    out.covariance.diagonal().array() += eps;
    Eigen::LLT<Matrix12> llt(out.covariance);
    if (llt.info() == Eigen::Success) {
        out.cholesky = llt.matrixL();
    } else {
        out.cholesky = out.covariance.diagonal().cwiseSqrt().asDiagonal();
    }
    return out;
}

Vector12 Gaussian12::sample(Rng &rng) const {
    Vector12 z;
    for (int i = 0; i < 12; ++i) z(i) = rng.normal();
    return mean + cholesky * z;
}

// Repair ------------------------------------------------------------------------

std::pair<double, int> fold_severity(const DualMeshGenotype &g, Side side, const ReferenceSigns &ref,
                                     std::span<const int> tets) {
    double sev = 0.0;
    int count = 0;
    for (int t : tets) {
        const double v = g.tet_volume(side, uz(t));
        if (violates(v, ref.sign(side, uz(t)))) {
            sev += std::abs(v);
            ++count;
        }
    }
    return {sev, count};
}

namespace {

// Distance from local vertex i of tet t to the plane of its opposite face.
double height_over_face(const DualMeshGenotype &g, Side side, int t, int i) {
    const auto p = g.tet_points(side, uz(t));
    const auto &f = kTetFaces[uz(i)];
    const double area2 = norm(cross(p[uz(f[1])] - p[uz(f[0])], p[uz(f[2])] - p[uz(f[0])]));
    if (!(area2 > 0.0)) return 0.0;
    return 6.0 * std::abs(signed_volume(p[0], p[1], p[2], p[3])) / area2;
}

double repair_sigma(const DualMeshGenotype &g, Side side, const ReferenceSigns &ref, int point, double scale) {
    const TetTopology &topo = *g.topology;
    double respecting = kInf;
    double any = kInf;
    for (int t : topo.incident(point)) {
        const Tet &v = topo.tet(uz(t));
        const int local = static_cast<int>(std::find(v.begin(), v.end(), point) - v.begin());
        const double h = height_over_face(g, side, t, local);
        if (h > 0.0) any = std::min(any, h);
        if (!violates(g.tet_volume(side, uz(t)), ref.sign(side, uz(t)))) respecting = std::min(respecting, h);
    }
    const double d = std::isfinite(respecting) && respecting > 0.0 ? respecting : any;
    return std::isfinite(d) ? scale * d : 0.0;
}

bool lex_less(const std::pair<double, int> &a, const std::pair<double, int> &b) {
    return a.first < b.first || (a.first == b.first && a.second < b.second);
}

} // namespace

RepairResult repair(DualMeshGenotype &g, Side side, const ReferenceSigns &ref, std::span<const int> tets,
                    std::span<const int> movable, Rng &rng, int samples, double sigma_scale) {
    RepairResult res;
    const TetTopology &topo = *g.topology;
    std::vector<int> points;
    for (int t : tets)
        if (violates(g.tet_volume(side, uz(t)), ref.sign(side, uz(t))))
            for (int p : topo.tet(uz(t)))
                if (std::find(movable.begin(), movable.end(), p) != movable.end()) points.push_back(p);
    if (points.empty() && fold_severity(g, side, ref, tets).second == 0) return res;
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());

    auto &c = g.coords(side);
    for (int p : points) {
        const auto inc = topo.incident(p);
        const auto before = fold_severity(g, side, ref, inc);
        if (before.second == 0) continue;
        const double sigma = repair_sigma(g, side, ref, p, sigma_scale);
        const Vec3 origin = c[uz(p)];
        Vec3 best_pos = origin;
        auto best = before;
        for (int s = 0; s < samples; ++s) {
            const Vec3 cand{origin.x + sigma * rng.normal(), origin.y + sigma * rng.normal(),
                            origin.z + sigma * rng.normal()};
            c[uz(p)] = cand;
            const auto sev = fold_severity(g, side, ref, inc);
            if (lex_less(sev, best)) {
                best = sev;
                best_pos = cand;
            }
        }
        c[uz(p)] = best_pos;
        if (!(best_pos == origin)) ++res.points_moved;
    }
    if (fold_severity(g, side, ref, tets).second == 0) {
        res.outcome = RepairOutcome::Repaired;
    } else {
        res.outcome = res.points_moved > 0 ? RepairOutcome::Improved : RepairOutcome::Aborted;
    }
    return res;
}

// Initialization ------------------------------------------------------------------

namespace {

bool point_star_ok(const DualMeshGenotype &g, Side side, const ReferenceSigns &ref, int p) {
    for (int t : g.topology->incident(p))
        if (violates(g.tet_volume(side, uz(t)), ref.sign(side, uz(t)))) return false;
    return true;
}

void gaussian_noise(DualMeshGenotype &g, const ReferenceSigns &ref, double sigma0, Rng &rng) {
    for (Side side : {Side::Source, Side::Target}) {
        auto &c = g.coords(side);
        for (int p = 0; p < static_cast<int>(c.size()); ++p) {
            const Vec3 origin = c[uz(p)];
            double sigma = sigma0;
            for (int attempt = 0; attempt < 8; ++attempt, sigma *= 0.5) {
                c[uz(p)] = origin + Vec3{rng.normal(), rng.normal(), rng.normal()} * sigma;
                if (point_star_ok(g, side, ref, p)) break;
                c[uz(p)] = origin;
            }
        }
    }
}

// Gravity-like attraction toward random Gaussian kernels, applied in rounds.
void kernel_noise(DualMeshGenotype &g, const ReferenceSigns &ref, const NoiseConfig &cfg, double amplitude,
                  Rng &rng) {
    for (Side side : {Side::Source, Side::Target}) {
        auto &c = g.coords(side);
        Vec3 lo = c.front();
        Vec3 hi = c.front();
        for (const Vec3 &p : c)
            for (std::size_t a = 0; a < 3; ++a) {
                lo[a] = std::min(lo[a], p[a]);
                hi[a] = std::max(hi[a], p[a]);
            }
        const Vec3 ext = hi - lo;
        const double width = 0.25 * std::max(1e-9, std::min({ext.x, ext.y, ext.z}));
        struct Kernel {
            Vec3 center;
            double weight;
        };
        std::vector<Kernel> kernels;
        for (int k = 0; k < cfg.kernel_count; ++k) {
            Kernel kk;
            for (std::size_t a = 0; a < 3; ++a) kk.center[a] = lo[a] + rng.uniform() * ext[a];
            kk.weight = cfg.kernel_weight_min + rng.uniform() * (cfg.kernel_weight_max - cfg.kernel_weight_min);
            kernels.push_back(kk);
        }
        const auto field = [&](const Vec3 &p) {
            Vec3 v;
            for (const Kernel &k : kernels) {
                const Vec3 d = k.center - p;
                v += d * (k.weight * std::exp(-norm2(d) / (2.0 * width * width)) / width);
            }
            return v;
        };
        const double step = amplitude / cfg.rounds;
        for (int r = 0; r < cfg.rounds; ++r) {
            std::vector<Vec3> inc(c.size());
            double vmax = 0.0;
            for (std::size_t p = 0; p < c.size(); ++p) {
                inc[p] = field(c[p]);
                vmax = std::max(vmax, norm(inc[p]));
            }
            if (!(vmax > 0.0)) break;
            for (int p = 0; p < static_cast<int>(c.size()); ++p) {
                const Vec3 origin = c[uz(p)];
                c[uz(p)] = origin + inc[uz(p)] * (step / vmax);
                if (!point_star_ok(g, side, ref, p)) c[uz(p)] = origin;
            }
        }
    }
}

} // namespace

std::vector<DualMeshGenotype> init_population(const DualMeshGenotype &base, const ReferenceSigns &ref,
                                              const EvolverConfig &cfg, double scale_mm) {
    cfg.validate();
    const auto n = uz(cfg.population_size);
    std::vector<DualMeshGenotype> pop(n, base);
    if (cfg.noise.factor == 0.0) return pop;
    for (std::size_t i = 1; i < n; ++i) {
        Rng rng = Rng::keyed({cfg.seed, 0x1217ULL, i});
        const double frac = static_cast<double>(i) / static_cast<double>(n - 1);
        if (cfg.noise.method == NoiseMethod::GlobalGaussian) {
            gaussian_noise(pop[i], ref, cfg.noise.factor * scale_mm * frac, rng);
        } else {
            kernel_noise(pop[i], ref, cfg.noise, cfg.noise.factor * scale_mm * 4.0 * frac, rng);
        }
    }
    return pop;
}

// Optimal mixing -----------------------------------------------------------------

namespace {

enum class Status { Reverted, Evaluated };

struct Proposal {
    Status status = Status::Reverted;
    Vector12 old_vars;
    std::vector<TetTerms> fresh;
    bool folded = false;
    bool repaired = false;
};

} // namespace

void mix_solution(Solution &s, int solution_id, int generation, std::span<const Gaussian12> models,
                  const RunInputs &in, const EvolverConfig &cfg, ElitistArchive &archive, MixingCounters &counters) {
    const FosPlan &plan = *in.plan;
    const Evaluator &ev = *in.evaluator;
    const ReferenceSigns &ref = *in.signs;
    DualMeshGenotype &g = s.genotype;
    std::vector<int> touch(s.acc.per_tet.size(), 0);

    for (const auto &cls : plan.classes) {
        std::vector<Proposal> props(cls.size());

        // Phase 1: independent proposals (disjoint dependent tets within a class).
        parallel_for(cls.size(), cfg.num_threads, [&](std::size_t k) {
            const int eid = cls[k];
            const FosElement &e = plan.elements[uz(eid)];
            Proposal &pr = props[k];
            Rng rng = Rng::keyed({cfg.seed, static_cast<std::uint64_t>(generation), static_cast<std::uint64_t>(eid),
                                  static_cast<std::uint64_t>(solution_id)});
            pr.old_vars = element_variables(g, e);
            set_element_variables(g, e, models[uz(eid)].sample(rng));
            const std::array<int, 2> movable{std::min(e.a, e.b), std::max(e.a, e.b)};
            bool ok = true;
            for (Side side : {Side::Source, Side::Target}) {
                if (fold_severity(g, side, ref, e.dependent_tets).second == 0) continue;
                pr.folded = true;
                if (cfg.repair_enabled)
                    repair(g, side, ref, e.dependent_tets, movable, rng, cfg.repair_samples, cfg.repair_sigma_scale);
                if (fold_severity(g, side, ref, e.dependent_tets).second != 0) ok = false;
            }
            if (!ok) {
                set_element_variables(g, e, pr.old_vars);
                return;
            }
            pr.repaired = pr.folded;
            pr.fresh = ev.evaluate_tets(g, e.dependent_tets);
            pr.status = Status::Evaluated;
        });

        // Phase 2: acceptance in element-id order.
        for (auto &t : touch) t = 0;
        for (std::size_t k = 0; k < cls.size(); ++k) {
            const FosElement &e = plan.elements[uz(cls[k])];
            Proposal &pr = props[k];
            ++counters.proposals;
            if (pr.folded) ++counters.folded;
            if (pr.status != Status::Evaluated) {
                ++counters.reverted_folds;
                continue;
            }
            if (pr.repaired) ++counters.repaired;
            for (int t : e.dependent_tets)
                counters.max_tet_touches_per_class = std::max(counters.max_tet_touches_per_class, ++touch[uz(t)]);

            const ObjectiveVector cand = ev.preview(s.acc, e.dependent_tets, pr.fresh);
            const bool accept =
                dominates(cand, s.objectives) || (archive.non_dominated(cand) && archive.satisfies_steering(cand));
            if (!accept) {
                set_element_variables(g, e, pr.old_vars);
                continue;
            }
            ev.apply(s.acc, e.dependent_tets, pr.fresh);
            s.objectives = s.acc.objectives();
            ++counters.accepted;
            if (archive.would_accept(s.objectives)) {
                // Snapshot without the class's later, still undecided proposals.
                std::vector<Vec3> src = g.source;
                std::vector<Vec3> tgt = g.target;
                DualMeshGenotype snap{g.topology, std::move(src), std::move(tgt)};
                for (std::size_t j = k + 1; j < cls.size(); ++j)
                    if (props[j].status == Status::Evaluated)
                        set_element_variables(snap, plan.elements[uz(cls[j])], props[j].old_vars);
                archive.insert(s.objectives, snap.source, snap.target);
            }
        }
    }
    ev.resync(s.acc);
    s.objectives = s.acc.objectives();
}

// Run ------------------------------------------------------------------------------

RunResult run_evolver(const RunInputs &in, const EvolverConfig &cfg, const GenerationCallback &callback) {
    cfg.validate();
    if (!in.base || !in.signs || !in.evaluator || !in.plan) throw ConfigError("run_evolver: incomplete inputs");
    RunResult out;
    out.topology = in.base->topology;
    out.archive = ElitistArchive(uz(cfg.archive_capacity));
    ElitistArchive &archive = out.archive;

    auto genotypes = init_population(*in.base, *in.signs, cfg, in.noise_scale_mm);
    std::vector<Solution> pop(genotypes.size());
    for (std::size_t i = 0; i < pop.size(); ++i) {
        pop[i].genotype = std::move(genotypes[i]);
        pop[i].acc = in.evaluator->initialize(pop[i].genotype);
        pop[i].objectives = pop[i].acc.objectives();
        pop[i].feasible = fold_free(pop[i].genotype, *in.signs);
    }
    std::array<double, 3> worst{0.0, 0.0, 0.0};
    for (const Solution &s : pop) {
        if (!s.feasible) continue;
        archive.insert(s.objectives, s.genotype.source, s.genotype.target);
        for (std::size_t m = 0; m < 3; ++m) worst[m] = std::max(worst[m], s.objectives[m]);
    }
    out.reference_point = {worst[0] * 1.1 + 1e-12, worst[1] * 1.1 + 1e-12, worst[2] * 1.1 + 1e-12};

    const std::size_t num_elements = in.plan->elements.size();
    for (int gen = 0; gen < cfg.num_generations; ++gen) {
        std::vector<ObjectiveVector> objs(pop.size());
        for (std::size_t i = 0; i < pop.size(); ++i) objs[i] = pop[i].objectives;
        const Clustering cl = select_and_cluster(objs, cfg.selection_fraction, cfg.num_clusters);

        std::vector<std::vector<Gaussian12>> models(cl.clusters.size(), std::vector<Gaussian12>(num_elements));
        std::vector<int> cluster_of(pop.size(), -1);
        for (std::size_t c = 0; c < cl.clusters.size(); ++c) {
            std::vector<const DualMeshGenotype *> members;
            for (int i : cl.clusters[c]) {
                members.push_back(&pop[uz(i)].genotype);
                cluster_of[uz(i)] = static_cast<int>(c);
            }
            parallel_for(num_elements, cfg.num_threads, [&](std::size_t e) {
                models[c][e] = estimate_distribution(members, in.plan->elements[e]);
            });
        }
        for (std::size_t i = 0; i < pop.size(); ++i)
            if (cluster_of[i] < 0) cluster_of[i] = cl.nearest(pop[i].objectives);

        for (std::size_t i = 0; i < pop.size(); ++i)
            mix_solution(pop[i], static_cast<int>(i), gen, models[uz(cluster_of[i])], in, cfg, archive, out.counters);

        const bool steering = cfg.steering_enabled && gen >= cfg.steering_activation_generation;
        if (steering) archive.set_steering(cfg.steering_ratio);

        std::vector<ObjectiveVector> front;
        front.reserve(archive.size());
        for (const ArchiveEntry &e : archive.entries()) front.push_back(e.objectives);
        GenerationStats st;
        st.generation = gen;
        st.hypervolume = hypervolume3_clipped(front, out.reference_point);
        st.best_guidance = archive.best_guidance();
        st.archive_size = archive.size();
        out.stats.push_back(st);
        out.generations_run = gen + 1;
        if (callback && !callback(GenerationView{out.stats.back(), archive, pop, out.counters, steering})) break;
    }
    return out;
}

} // namespace morea
