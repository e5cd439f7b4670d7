#include "boxfit/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <map>
#include <set>
#include <tuple>

#include "boxfit/rng.hpp"

namespace boxfit {

namespace {

struct Region {
    double lo[3];
    double hi[3];
};

AABox region_point_bbox(const PointCloud& cloud, const Region& r) {
    double lo[3], hi[3];
    bool any = false;
    for (const auto& p : cloud.points) {
        bool inside = true;
        for (int a = 0; a < 3; ++a) inside = inside && p[a] >= r.lo[a] && p[a] <= r.hi[a];
        if (!inside) continue;
        for (int a = 0; a < 3; ++a) {
            lo[a] = any ? std::min(lo[a], p[a]) : p[a];
            hi[a] = any ? std::max(hi[a], p[a]) : p[a];
        }
        any = true;
    }
    AABox box;
    for (int a = 0; a < 3; ++a) {
        double l = any ? lo[a] : r.lo[a];
        double h = any ? hi[a] : r.hi[a];
        box.center[a] = 0.5 * (l + h);
        box.size[a] = std::max(h - l, 1e-6);
    }
    return box;
}

// Optional handling of faces carrying several child entities (a mirror group
// counts as one entity): split the slab into equal strips along one of the
// two tangential axes. Which axis, and in which order entities take strips,
// cannot be told from the structure alone, so callers try the variants and
// keep the one with the lowest starting energy.
struct StripVariant {
    int tangent_choice = -1;  // -1: no strips, else 0 or 1
    bool reverse = false;
};

void region_init(const Template& t, const std::vector<std::vector<const Connector*>>& children,
                 int node, const Region& region, const PointCloud& cloud, double slab_fraction,
                 const StripVariant& variant, std::vector<AABox>& boxes) {
    // Carve one slab per attachment face off this node's region; the node
    // keeps the core, each child starts from its slab.
    Region core = region;
    for (const Connector* c : children[node]) {
        double slab = slab_fraction * (region.hi[c->axis] - region.lo[c->axis]);
        if (c->side > 0)
            core.hi[c->axis] = std::min(core.hi[c->axis], region.hi[c->axis] - slab);
        else
            core.lo[c->axis] = std::max(core.lo[c->axis], region.lo[c->axis] + slab);
    }
    boxes[node] = region_point_bbox(cloud, core);

    auto group_of = [&](int id) -> const SymmetryGroup* {
        for (const auto& g : t.groups)
            if (std::find(g.members.begin(), g.members.end(), id) != g.members.end()) return &g;
        return nullptr;
    };

    // Entity index of every child on its face: group members share one slot.
    std::map<std::pair<int, int>, std::vector<const void*>> face_entities;
    auto entity_position = [&](const Connector* c, int& count) {
        auto& entities = face_entities[{c->axis, c->side}];
        const void* key = group_of(c->child);
        if (!key) key = c;
        auto it = std::find(entities.begin(), entities.end(), key);
        if (it == entities.end()) {
            entities.push_back(key);
            it = std::prev(entities.end());
        }
        count = int(entities.size());
        return int(it - entities.begin());
    };
    for (const Connector* c : children[node]) {
        int count = 0;
        entity_position(c, count);
    }

    for (const Connector* c : children[node]) {
        Region child = region;
        if (c->side > 0)
            child.lo[c->axis] = core.hi[c->axis];
        else
            child.hi[c->axis] = core.lo[c->axis];

        int count = 0;
        int slot = entity_position(c, count);
        count = int(face_entities[{c->axis, c->side}].size());
        if (variant.tangent_choice >= 0 && count >= 2) {
            int tangent[2], ti = 0;
            for (int a = 0; a < 3; ++a)
                if (a != c->axis) tangent[ti++] = a;
            int a = tangent[variant.tangent_choice];
            if (variant.reverse) slot = count - 1 - slot;
            double w = (child.hi[a] - child.lo[a]) / count;
            child.hi[a] = child.lo[a] + (slot + 1) * w;
            child.lo[a] += slot * w;
        }

        // Mirror-group members each start in their own quadrant of the slab,
        // split by the parent's center planes (matching decode's reflections).
        if (const SymmetryGroup* g = group_of(c->child)) {
            auto it = std::find(g->members.begin(), g->members.end(), c->child);
            int k = int(it - g->members.begin());
            std::vector<int> axes = g->mirror_axes;
            std::sort(axes.begin(), axes.end());
            for (std::size_t j = 0; j < axes.size(); ++j) {
                int a = axes[j];
                double mid = boxes[node].center[a];
                if ((k >> j) & 1)
                    child.lo[a] = std::max(child.lo[a], mid);
                else
                    child.hi[a] = std::min(child.hi[a], mid);
            }
        }
        region_init(t, children, c->child, child, cloud, slab_fraction, variant, boxes);
    }
}

ParamVector slab_init(const PointCloud& cloud, const Template& t, double slab_fraction,
                      const StripVariant& variant = {}) {
    if (cloud.empty()) throw ValidationError("default_init: empty cloud");
    AABox bb = bounding_box(cloud);

    std::vector<std::vector<const Connector*>> children(t.node_count());
    for (const auto& c : t.connectors) children[c.parent].push_back(&c);

    Region region;
    for (int a = 0; a < 3; ++a) {
        region.lo[a] = bb.min(a);
        region.hi[a] = std::max(bb.max(a), bb.min(a) + 1e-6);
    }
    std::vector<AABox> boxes(t.node_count());
    region_init(t, children, 0, region, cloud, slab_fraction, variant, boxes);
    return encode(t, boxes);
}

// True if any face of any node carries more than one child entity, i.e. the
// strip variants produce inits distinct from the plain one.
bool has_shared_face(const Template& t) {
    std::map<std::tuple<int, int, int>, std::set<const void*>> faces;
    auto group_of = [&](int id) -> const void* {
        for (const auto& g : t.groups)
            if (std::find(g.members.begin(), g.members.end(), id) != g.members.end()) return &g;
        return nullptr;
    };
    for (const auto& c : t.connectors) {
        const void* key = group_of(c.child);
        if (!key) key = &c;
        auto& s = faces[std::make_tuple(c.parent, c.axis, c.side)];
        s.insert(key);
        if (s.size() > 1) return true;
    }
    return false;
}

// How deep a child slab cuts into its parent's region varies a lot across
// shapes (a tabletop keeps far less of the bbox than a mug body), so restarts
// sweep the fraction instead of guessing one.
constexpr double kSlabFractions[] = {0.35, 0.1, 0.6, 0.85};

// Greedy compass search over two move families: single parameters, and
// single box faces (a coupled center+size change that leaves the opposite
// face in place, needed to deflate a box that is pinned to points on one
// side). The point-coverage term sums over every sample, so the energy around
// a good fit is a steep needle that CMA-ES alone overshoots; this
// deterministic descent polishes the CMA result reliably.
double compass_polish(const std::function<double(const ParamVector&)>& f, const Template& t,
                      ParamVector& x, double step, int max_evals, int& evals) {
    double fx = f(x);
    const double min_step = 1e-5;
    int used = 1;

    auto try_move = [&](ParamVector&& y) {
        double fy = f(y);
        ++used;
        if (fy < fx) {
            x = std::move(y);
            fx = fy;
            return true;
        }
        return false;
    };

    // A successful move is repeated until it stops paying off, so a face that
    // has to travel far costs one evaluation per step instead of a full sweep.
    while (step > min_step && used < max_evals) {
        bool improved = false;
        for (std::size_t i = 0; i < x.size() && used < max_evals; ++i) {
            for (double s : {step, -step})
                while (used < max_evals) {
                    ParamVector y = x;
                    y[i] += s;
                    if (!try_move(std::move(y))) break;
                    improved = true;
                }
        }
        // Mirror-group members move in lockstep (reflected on mirror axes);
        // moving a single member would be cancelled by the size averaging in
        // encode. Only representatives are attempted, one face move covers
        // the whole group.
        auto move_face = [&](std::vector<AABox>& moved, int b, int axis, int side, double d) {
            const SymmetryGroup* group = nullptr;
            for (const auto& g : t.groups)
                if (std::find(g.members.begin(), g.members.end(), b) != g.members.end()) group = &g;
            std::vector<int> members = group ? group->members : std::vector<int>{b};
            int mirror_bit = -1;
            if (group) {
                std::vector<int> axes = group->mirror_axes;
                std::sort(axes.begin(), axes.end());
                for (std::size_t j = 0; j < axes.size(); ++j)
                    if (axes[j] == axis) mirror_bit = int(j);
            }
            bool valid = true;
            for (std::size_t k = 0; k < members.size(); ++k) {
                double sign = (mirror_bit >= 0 && ((k >> mirror_bit) & 1)) ? -1.0 : 1.0;
                moved[members[k]].size[axis] += side * d;
                moved[members[k]].center[axis] += 0.5 * d * sign;
                valid = valid && moved[members[k]].size[axis] > 1e-6;
            }
            return valid;
        };
        auto is_derived_member = [&](int b) {
            for (const auto& g : t.groups)
                for (std::size_t k = 1; k < g.members.size(); ++k)
                    if (g.members[k] == b) return true;
            return false;
        };

        std::vector<AABox> boxes = decode(t, x);
        for (std::size_t b = 0; b < boxes.size() && used < max_evals; ++b) {
            if (is_derived_member(int(b))) continue;
            for (int axis = 0; axis < 3; ++axis)
                for (int side : {+1, -1})
                    for (double d : {step, -step})
                        while (used < max_evals) {
                            std::vector<AABox> moved = boxes;
                            if (!move_face(moved, int(b), axis, side, d)) break;
                            if (!try_move(encode(t, moved))) break;
                            boxes = decode(t, x);
                            improved = true;
                        }
        }
        // Exchange moves: transfer territory between two boxes by sliding one
        // box's face together with the facing face of the other. A single face
        // move cannot do this without first exposing the points covered near
        // the shared boundary.
        for (std::size_t a = 0; a < boxes.size() && used < max_evals; ++a) {
            if (is_derived_member(int(a))) continue;
            for (std::size_t b = 0; b < boxes.size() && used < max_evals; ++b) {
                if (a == b || is_derived_member(int(b))) continue;
                for (int axis = 0; axis < 3; ++axis)
                    for (double d : {step, -step})
                        while (used < max_evals) {
                            std::vector<AABox> moved = boxes;
                            if (!move_face(moved, int(a), axis, +1, d)) break;
                            if (!move_face(moved, int(b), axis, -1, d)) break;
                            if (!try_move(encode(t, moved))) break;
                            boxes = decode(t, x);
                            improved = true;
                        }
            }
        }
        // Contact-plane moves: slide a parent face together with every child
        // attached to it, shrinking one side while the other grows. Neither a
        // parameter nor a single-face move can do this without first exposing
        // points on one side of the plane.
        for (int parent = 0; parent < t.node_count() && used < max_evals; ++parent)
            for (int axis = 0; axis < 3; ++axis)
                for (int side : {+1, -1}) {
                    std::vector<const Connector*> attached;
                    for (const auto& c : t.connectors)
                        if (c.parent == parent && c.axis == axis && c.side == side)
                            attached.push_back(&c);
                    if (attached.empty()) continue;
                    for (double d : {step, -step})
                        while (used < max_evals) {
                            std::vector<AABox> moved = boxes;
                            moved[parent].size[axis] += side * d;
                            moved[parent].center[axis] += 0.5 * d;
                            bool valid = moved[parent].size[axis] > 1e-6;
                            for (const Connector* c : attached) {
                                moved[c->child].size[axis] -= side * d;
                                moved[c->child].center[axis] += 0.5 * d;
                                valid = valid && moved[c->child].size[axis] > 1e-6;
                            }
                            if (!valid) break;
                            if (!try_move(encode(t, moved))) break;
                            boxes = decode(t, x);
                            improved = true;
                        }
                }
        if (!improved) step *= 0.5;
    }
    evals += used;
    return fx;
}

}  // namespace

ParamVector default_init(const PointCloud& cloud, const Template& t) {
    return slab_init(cloud, t, kSlabFractions[0]);
}

PointCloud resample_for_fitting(const PointCloud& cloud, const FitConfig& config) {
    if (int(cloud.size()) <= config.sample_count) return cloud;
    return farthest_point_subsample(cloud, config.sample_count, config.cma.seed);
}

FitResult fit_template(const PointCloud& cloud, const Template& t,
                       const std::vector<ParamVector>& inits, const FitConfig& config,
                       InitSource init_label) {
    if (cloud.empty()) throw ValidationError("fit_template: empty cloud");
    if (config.restarts < 1) throw ValidationError("fit_template: restarts must be >= 1");
    const int dim = free_param_count(t);
    for (const auto& init : inits)
        if (int(init.size()) != dim)
            throw ValidationError("fit_template: init length does not match template");

    PointCloud sample = resample_for_fitting(cloud, config);

    auto objective = [&](const std::vector<double>& p) {
        return e_total(sample, decode(t, p), config.weights).e_total;
    };

    FitResult best;
    best.template_id = t.template_id;
    best.breakdown.e_total = std::numeric_limits<double>::infinity();

    // Run list: supplied inits first, then default inits sweeping the slab
    // fraction (jittered once the fractions are exhausted) until
    // config.restarts runs exist.
    struct Run {
        ParamVector x0;
        InitSource source;
    };
    std::vector<Run> runs;
    for (const auto& init : inits) runs.push_back({init, init_label});
    std::vector<StripVariant> variants = {{}};
    if (has_shared_face(t))
        for (int tangent : {0, 1})
            for (bool reverse : {false, true}) variants.push_back({tangent, reverse});
    constexpr int n_fractions = int(std::size(kSlabFractions));
    for (int i = 0; int(runs.size()) < config.restarts && i < n_fractions; ++i) {
        // Per fraction, start from whichever strip variant scores best.
        ParamVector chosen;
        double best_f0 = std::numeric_limits<double>::infinity();
        for (const StripVariant& v : variants) {
            ParamVector candidate = slab_init(cloud, t, kSlabFractions[i], v);
            double f0 = objective(candidate);
            ++best.evaluations;
            if (f0 < best_f0) {
                best_f0 = f0;
                chosen = std::move(candidate);
            }
        }
        runs.push_back({std::move(chosen), InitSource::Default});
    }
    Rng jitter(config.cma.seed ^ 0x5eedfeedULL);
    while (int(runs.size()) < config.restarts) {
        ParamVector perturbed = runs.back().x0;
        for (auto& v : perturbed) v += 0.3 * jitter.normal();
        runs.push_back({perturbed, InitSource::Default});
    }

    for (std::size_t r = 0; r < runs.size(); ++r) {
        // Each restart alternates global and local phases: a first compass
        // descent drops the heuristic init into the nearest basin, CMA-ES
        // explores around it, and a final descent polishes whichever point
        // won. Either phase alone gets stuck (see compass_polish).
        ParamVector x = runs[r].x0;
        double fx = compass_polish(objective, t, x, 0.1, config.cma.max_evals,
                                   best.evaluations);

        CmaConfig cma = config.cma;
        cma.seed = config.cma.seed + r;
        CmaResult res = cma_minimize(objective, x, cma);
        best.evaluations += res.evaluations;

        // The incumbent itself is not sampled by CMA-ES; a warm start must
        // never come back worse than it went in.
        if (res.best_f < fx) x = res.best_x;
        fx = compass_polish(objective, t, x, 0.05, config.cma.max_evals, best.evaluations);

        if (fx < best.breakdown.e_total) {
            best.params = std::move(x);
            best.breakdown.e_total = fx;
            best.init_source = runs[r].source;
        }
    }

    best.boxes = decode(t, best.params);
    best.breakdown = e_total(sample, best.boxes, config.weights);
    return best;
}

SelectionResult select_template(const PointCloud& cloud, const std::vector<Template>& candidates,
                                const FitConfig& config) {
    if (candidates.empty()) throw ValidationError("select_template: no candidate templates");

    SelectionResult out;
    for (const auto& t : candidates) out.ranked.push_back(fit_template(cloud, t, {}, config));

    std::vector<int> box_counts;
    for (const auto& t : candidates) box_counts.push_back(t.node_count());

    std::stable_sort(out.ranked.begin(), out.ranked.end(), [&](const FitResult& a, const FitResult& b) {
        if (std::abs(a.breakdown.e_total - b.breakdown.e_total) <= 1e-12)
            return a.boxes.size() < b.boxes.size();
        return a.breakdown.e_total < b.breakdown.e_total;
    });
    out.best = out.ranked.front();
    return out;
}

}  // namespace boxfit
