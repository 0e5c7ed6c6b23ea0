// MCTS auto-tuner.
//
// Nodes hold full configurations (sketch + kernel); actions either nudge a
// sketch parameter, swap an adjacent independent instruction pair inside
// one block, or toggle the pipeline. The four-step loop — UCB selection,
// advisor-driven expansion, single-config simulation, backpropagation —
// runs under a pluggable evaluator (analytic cost model or the real-run
// harness) and a pluggable advisor. The heuristic advisor mirrors the two
// history policies: action selection weighted by per-parameter improvement
// along the path, and action-space granularity clustered from the global
// record.

#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <unordered_set>

#include "forge/bench.hpp"
#include "forge/cost.hpp"

namespace forge {

// ----------------------------------------------------------------- actions

enum class ParamKind { BM, BN, BK, MR, NR, PrefetchDist };

inline const char* to_string(ParamKind p) {
    switch (p) {
        case ParamKind::BM: return "BM";
        case ParamKind::BN: return "BN";
        case ParamKind::BK: return "BK";
        case ParamKind::MR: return "MR";
        case ParamKind::NR: return "NR";
        case ParamKind::PrefetchDist: return "PrefetchDist";
    }
    return "?";
}

struct TuningAction {
    enum class Type { ParamDelta, ReorderSwap, TogglePipeline };
    Type type = Type::TogglePipeline;

    // ParamDelta
    ParamKind param = ParamKind::BM;
    std::int64_t delta = 0;

    // ReorderSwap
    int stage_block = 0;      // index into KernelIR::stage_blocks
    std::size_t pair_i = 0;   // swaps positions (pair_i, pair_i + 1)

    bool operator==(const TuningAction&) const = default;

    static TuningAction param_delta(ParamKind p, std::int64_t d) {
        TuningAction a;
        a.type = Type::ParamDelta;
        a.param = p;
        a.delta = d;
        return a;
    }
    static TuningAction reorder(int block, std::size_t i) {
        TuningAction a;
        a.type = Type::ReorderSwap;
        a.stage_block = block;
        a.pair_i = i;
        return a;
    }
    static TuningAction toggle_pipeline() {
        TuningAction a;
        a.type = Type::TogglePipeline;
        return a;
    }

    // Grouping key for the advisor's impact statistics.
    std::string kind_key() const {
        switch (type) {
            case Type::ParamDelta: return to_string(param);
            case Type::ReorderSwap: return "Reorder";
            case Type::TogglePipeline: return "Pipeline";
        }
        return "?";
    }

    std::string describe() const {
        switch (type) {
            case Type::ParamDelta:
                return std::string(to_string(param)) +
                       (delta >= 0 ? "+" : "") + std::to_string(delta);
            case Type::ReorderSwap:
                return "swap(block=" + std::to_string(stage_block) +
                       ",i=" + std::to_string(pair_i) + ")";
            case Type::TogglePipeline: return "toggle_pipeline";
        }
        return "?";
    }
};

inline void to_json(json& j, const TuningAction& a) {
    switch (a.type) {
        case TuningAction::Type::ParamDelta:
            j = json{{"type", "param_delta"},
                     {"param", to_string(a.param)},
                     {"delta", a.delta}};
            break;
        case TuningAction::Type::ReorderSwap:
            j = json{{"type", "reorder_swap"},
                     {"block", a.stage_block},
                     {"i", a.pair_i}};
            break;
        case TuningAction::Type::TogglePipeline:
            j = json{{"type", "toggle_pipeline"}};
            break;
    }
}

// ------------------------------------------------------------ configuration

struct TuningConfig {
    ScheduleSketch sketch;
    KernelIR kernel;

    bool operator==(const TuningConfig&) const = default;
};

inline std::string digest_config(const TuningConfig& cfg) {
    json j;
    j["sketch"] = cfg.sketch;
    j["kernel"] = cfg.kernel;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(j.dump())));
    return std::string(buf);
}

// Applies one action to a configuration. ParamDelta adjusts the named
// parameter (upper-clamped to the problem dims) and re-validates; MR/NR
// and pipeline changes rebuild the kernel. Throws on illegal results —
// callers are expected to pre-check.
inline TuningConfig apply_action(const TuningConfig& cfg,
                                 const TuningAction& action,
                                 const GemmSpec& spec,
                                 const HardwareDescriptor& hw) {
    TuningConfig next = cfg;
    bool rebuild = false;
    switch (action.type) {
        case TuningAction::Type::ParamDelta: {
            auto& s = next.sketch;
            switch (action.param) {
                case ParamKind::BM:
                    s.bm = std::min(s.bm + action.delta, spec.m);
                    break;
                case ParamKind::BN:
                    s.bn = std::min(s.bn + action.delta, spec.n);
                    break;
                case ParamKind::BK:
                    s.bk = std::min(s.bk + action.delta, spec.k);
                    break;
                case ParamKind::MR:
                    s.mr += action.delta;
                    rebuild = true;
                    break;
                case ParamKind::NR:
                    s.nr += action.delta;
                    rebuild = true;
                    break;
                case ParamKind::PrefetchDist:
                    s.prefetch_distance += action.delta;
                    break;
            }
            break;
        }
        case TuningAction::Type::ReorderSwap: {
            auto& blocks = next.kernel.stage_blocks;
            if (action.stage_block < 0 ||
                action.stage_block >= int(blocks.size()))
                throw std::invalid_argument("reorder: no such block");
            Block& blk = blocks[action.stage_block];
            auto swaps = legal_swaps(blk);
            bool ok = false;
            for (auto& [i, j] : swaps) ok |= (i == action.pair_i);
            if (!ok)
                throw std::invalid_argument(
                    "reorder: pair not independent at " +
                    std::to_string(action.pair_i));
            apply_swap(blk, action.pair_i);
            break;
        }
        case TuningAction::Type::TogglePipeline:
            next.sketch.pipeline = !next.sketch.pipeline;
            rebuild = true;
            break;
    }

    auto diags = check_sketch_legality(next.sketch, spec, hw);
    if (!diags.empty())
        throw std::invalid_argument("illegal action " + action.describe() +
                                    ": " + diags.front());
    if (rebuild)
        next.kernel = build_kernel_ir(next.sketch, hw, spec.dtype,
                                      /*strict=*/true);
    return next;
}

// ----------------------------------------------------------------- history

struct GlobalRecord {
    TuningAction action;
    double parent_gflops = 0;
    double child_gflops = 0;
};

struct PathStep {
    TuningAction action;
    double parent_gflops = 0;
    double child_gflops = 0;
};

struct SearchHistory {
    std::vector<GlobalRecord> global_records;  // append-only
    double best_gflops = 0;
    TuningConfig best_config;
    PerfMeasurement best_measurement;
    int simulations = 0;
    std::unordered_set<std::uint64_t> config_hashes;
};

// ------------------------------------------------------------------ nodes

struct SearchNode {
    TuningConfig config;
    double value_sum = 0;
    int visits = 0;
    double gflops = 0;  // this node's own simulation result
    int self_sims = 0;

    SearchNode* parent = nullptr;
    std::optional<TuningAction> action_from_parent;
    std::vector<TuningAction> proposed_actions;
    std::vector<TuningAction> untried;
    bool proposals_populated = false;
    bool exhausted = false;
    std::vector<std::pair<TuningAction, std::unique_ptr<SearchNode>>> children;
    mutable bool subtree_dead_ = false;  // memo: exhaustion is monotone

    bool subtree_exhausted() const {
        if (subtree_dead_) return true;
        if (!proposals_populated || !exhausted) return false;
        for (const auto& [a, c] : children)
            if (!c->subtree_exhausted()) return false;
        subtree_dead_ = true;
        return true;
    }
};

inline std::vector<PathStep> path_steps(const SearchNode* node) {
    std::vector<PathStep> steps;
    for (const SearchNode* cur = node; cur->parent; cur = cur->parent)
        steps.push_back({*cur->action_from_parent, cur->parent->gflops,
                         cur->gflops});
    std::reverse(steps.begin(), steps.end());
    return steps;
}

// -------------------------------------------------------------------- UCB

// UCB1. Unvisited nodes score +inf so every proposed child is tried once.
inline double ucb_score(const SearchNode& node, int parent_visits, double c) {
    if (node.visits == 0) return std::numeric_limits<double>::infinity();
    return node.value_sum / node.visits +
           c * std::sqrt(std::log(double(parent_visits)) / node.visits);
}

// Descends by UCB argmax until a node still has an untried proposed action
// (or has no proposals yet, or no viable children). Ties break toward the
// earlier-proposed child.
inline SearchNode* select(SearchNode* root, double c) {
    SearchNode* node = root;
    for (;;) {
        if (!node->proposals_populated || !node->untried.empty()) return node;
        SearchNode* best = nullptr;
        double best_score = -std::numeric_limits<double>::infinity();
        for (auto& [a, child] : node->children) {
            if (child->subtree_exhausted()) continue;
            double s = ucb_score(*child, node->visits, c);
            if (s > best_score) {
                best_score = s;
                best = child.get();
            }
        }
        if (!best) return node;
        node = best;
    }
}

// ---------------------------------------------------------------- advisors

// Expansion policy: picks the next untried action for a node given the
// path history, and the delta granularity used when generating a node's
// action space from the global history.
struct Advisor {
    virtual ~Advisor() = default;
    virtual std::string name() const = 0;
    virtual std::size_t select_action(const std::vector<TuningAction>& untried,
                                      const std::vector<PathStep>& path,
                                      std::mt19937_64& rng) = 0;
    virtual std::int64_t space_step(const SearchHistory& history,
                                    std::mt19937_64& rng) = 0;
};

inline constexpr std::int64_t kDefaultSpaceStep = 16;

// Uniform-random choice over the fixed default space: the naive-MCTS
// ablation baseline.
class RandomAdvisor final : public Advisor {
  public:
    std::string name() const override { return "random"; }
    std::size_t select_action(const std::vector<TuningAction>& untried,
                              const std::vector<PathStep>&,
                              std::mt19937_64& rng) override {
        return std::size_t(rng() % untried.size());
    }
    std::int64_t space_step(const SearchHistory&, std::mt19937_64&) override {
        return kDefaultSpaceStep;
    }
};

// History-driven policy. Selection: with probability epsilon explore
// uniformly, otherwise prefer the action kind with the best mean
// improvement along the path (unseen kinds are optimistic). Space
// generation: if improvements in the global record cluster at one delta
// granularity, propose the space at that granularity.
class HeuristicAdvisor final : public Advisor {
  public:
    explicit HeuristicAdvisor(double epsilon = 0.1) : epsilon_(epsilon) {}

    std::string name() const override { return "heuristic"; }

    std::size_t select_action(const std::vector<TuningAction>& untried,
                              const std::vector<PathStep>& path,
                              std::mt19937_64& rng) override {
        double u = double(rng() >> 11) * (1.0 / 9007199254740992.0);
        if (u < epsilon_) return std::size_t(rng() % untried.size());

        std::map<std::string, std::pair<double, int>> stats;  // sum, count
        for (const auto& st : path) {
            auto& s = stats[st.action.kind_key()];
            s.first += st.child_gflops - st.parent_gflops;
            s.second += 1;
        }
        double best_score = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t i = 0; i < untried.size(); ++i) {
            auto it = stats.find(untried[i].kind_key());
            double score = it == stats.end()
                               ? std::numeric_limits<double>::infinity()
                               : it->second.first / it->second.second;
            if (score > best_score) {
                best_score = score;
                best_idx = i;
            }
        }
        return best_idx;
    }

    std::int64_t space_step(const SearchHistory& history,
                            std::mt19937_64&) override {
        std::map<std::int64_t, int> votes;
        for (const auto& rec : history.global_records) {
            if (rec.action.type != TuningAction::Type::ParamDelta) continue;
            switch (rec.action.param) {
                case ParamKind::BM:
                case ParamKind::BN:
                case ParamKind::BK: break;
                default: continue;
            }
            if (rec.child_gflops <= rec.parent_gflops) continue;
            votes[std::llabs(rec.action.delta)] += 1;
        }
        std::int64_t best = kDefaultSpaceStep;
        int best_votes = 0;
        for (const auto& [step, v] : votes)
            if (v > best_votes) {
                best_votes = v;
                best = step;
            }
        return best;
    }

  private:
    double epsilon_;
};

// --------------------------------------------------------------- evaluators

struct Evaluator {
    virtual ~Evaluator() = default;
    virtual std::string name() const = 0;
    virtual bool deterministic() const = 0;
    virtual PerfMeasurement evaluate(const TuningConfig& cfg,
                                     const GemmSpec& spec,
                                     const HardwareDescriptor& hw) = 0;
};

class CostModelEvaluator final : public Evaluator {
  public:
    std::string name() const override { return "cost"; }
    bool deterministic() const override { return true; }
    PerfMeasurement evaluate(const TuningConfig& cfg, const GemmSpec& spec,
                             const HardwareDescriptor& hw) override {
        PerfMeasurement p;
        p.source = PerfMeasurement::Source::CostModel;
        try {
            CostBreakdown cb = estimate_cycles(cfg.sketch, cfg.kernel, spec, hw);
            p.gflops = cb.est_gflops;
            p.correctness_pass = true;
        } catch (const std::exception& e) {
            p.error = e.what();
        }
        return p;
    }
};

// Emits, compiles and times each configuration on the host.
class RealRunEvaluator final : public Evaluator {
  public:
    explicit RealRunEvaluator(std::string toolchain, int repeats = 5,
                              KernelFlavor flavor = KernelFlavor::Scalar,
                              std::filesystem::path workdir = {})
        : toolchain_(std::move(toolchain)),
          repeats_(repeats),
          flavor_(flavor),
          workdir_(std::move(workdir)) {}

    std::string name() const override { return "real"; }
    bool deterministic() const override { return false; }

    PerfMeasurement evaluate(const TuningConfig& cfg, const GemmSpec& spec,
                             const HardwareDescriptor& hw) override {
        PerfMeasurement p;
        p.source = PerfMeasurement::Source::RealRun;
        try {
            SourceArtifact art =
                emit_sketch_source(cfg.sketch, cfg.kernel, spec, hw, flavor_,
                                   "cand_" + digest_config(cfg));
            CompileResult cr = compile_artifact(art, toolchain_, workdir_);
            if (!cr.ok) {
                p.error = cr.diagnostics;
                return p;
            }
            return run_benchmark(cr.op, spec, repeats_);
        } catch (const std::exception& e) {
            p.error = e.what();
            return p;
        }
    }

  private:
    std::string toolchain_;
    int repeats_;
    KernelFlavor flavor_;
    std::filesystem::path workdir_;
};

// ---------------------------------------------------------- action spaces

// Candidate actions for a node, at most `width_cap`, every one pre-checked
// legal and config-changing. The space always carries at least one reorder
// swap when any exists and a pipeline toggle when the path has not tried
// one; the parameter deltas use the advisor's granularity.
inline std::vector<TuningAction> propose_action_space(
    const SearchNode& node, Advisor& advisor, const SearchHistory& history,
    const GemmSpec& spec, const HardwareDescriptor& hw, std::mt19937_64& rng,
    std::size_t width_cap = 8) {
    const std::int64_t step = std::max<std::int64_t>(1, advisor.space_step(history, rng));
    const ScheduleSketch& s = node.config.sketch;

    std::vector<TuningAction> raw;
    for (ParamKind p : {ParamKind::BM, ParamKind::BN, ParamKind::BK}) {
        raw.push_back(TuningAction::param_delta(p, +step));
        raw.push_back(TuningAction::param_delta(p, -step));
    }

    bool pipeline_tried_on_path = false;
    for (const SearchNode* cur = &node; cur->parent; cur = cur->parent)
        if (cur->action_from_parent->type == TuningAction::Type::TogglePipeline)
            pipeline_tried_on_path = true;
    if (!pipeline_tried_on_path) raw.push_back(TuningAction::toggle_pipeline());

    for (int b = 0; b < int(node.config.kernel.stage_blocks.size()); ++b) {
        auto swaps = legal_swaps(node.config.kernel.stage_blocks[b]);
        if (!swaps.empty()) {
            raw.push_back(TuningAction::reorder(b, swaps.front().first));
            break;
        }
    }

    // next-feasible register-tile moves
    std::int64_t lanes = lanes_for(hw, spec.dtype);
    std::int64_t nstep = lanes > 1 ? lanes : 1;
    auto mr_move = [&](int dir) -> std::optional<std::int64_t> {
        for (std::int64_t mr = s.mr + dir; mr >= 1 && mr <= 64; mr += dir)
            if (register_budget_ok(hw, spec.dtype, mr, s.nr)) return mr - s.mr;
        return std::nullopt;
    };
    auto nr_move = [&](int dir) -> std::optional<std::int64_t> {
        for (std::int64_t nr = s.nr + dir * nstep; nr >= 1 && nr <= 64;
             nr += dir * nstep)
            if (register_budget_ok(hw, spec.dtype, s.mr, nr)) return nr - s.nr;
        return std::nullopt;
    };
    if (auto d = mr_move(+1)) raw.push_back(TuningAction::param_delta(ParamKind::MR, *d));
    if (auto d = mr_move(-1)) raw.push_back(TuningAction::param_delta(ParamKind::MR, *d));
    if (auto d = nr_move(+1)) raw.push_back(TuningAction::param_delta(ParamKind::NR, *d));
    if (auto d = nr_move(-1)) raw.push_back(TuningAction::param_delta(ParamKind::NR, *d));

    raw.push_back(TuningAction::param_delta(ParamKind::PrefetchDist, +1));
    raw.push_back(TuningAction::param_delta(ParamKind::PrefetchDist, -1));

    std::vector<TuningAction> out;
    for (const auto& a : raw) {
        if (out.size() >= width_cap) break;
        bool dup = false;
        for (const auto& b : out) dup |= (a == b);
        if (dup) continue;
        try {
            TuningConfig next = apply_action(node.config, a, spec, hw);
            if (next == node.config) continue;  // clamped into a no-op
        } catch (const std::exception&) {
            continue;  // illegal here
        }
        out.push_back(a);
    }
    return out;
}

// ---------------------------------------------------------------- the loop

struct LogRecord {
    int iter = 0;
    std::string action;
    std::string config_digest;
    double value = 0;
    double gflops = 0;
    double best_so_far = 0;
    double wall_ms = 0;
};

inline void to_json(json& j, const LogRecord& r) {
    j = json{{"iter", r.iter},         {"action", r.action},
             {"config", r.config_digest}, {"value", r.value},
             {"gflops", r.gflops},     {"best_so_far", r.best_so_far},
             {"wall_ms", r.wall_ms}};
}

struct TuneResult {
    TuningConfig best_config;
    PerfMeasurement best_measurement;
    SearchHistory history;
    std::vector<LogRecord> log;
    std::unique_ptr<SearchNode> root;  // retained for inspection
};

namespace detail {

// Simulation = one evaluation of the node's own config; the value is the
// GFLOPS normalized by the best seen so far (before this node), clamped to
// [0, 2]. Failed or incorrect measurements contribute zero.
inline double simulate(SearchNode& node, Evaluator& evaluator,
                       SearchHistory& history, const GemmSpec& spec,
                       const HardwareDescriptor& hw) {
    PerfMeasurement meas = evaluator.evaluate(node.config, spec, hw);
    double g = meas.correctness_pass ? meas.gflops : 0.0;

    double value;
    if (g <= 0)
        value = 0.0;
    else if (history.simulations == 0 || history.best_gflops <= 0)
        value = history.simulations == 0 ? 1.0 : 2.0;
    else
        value = std::clamp(g / history.best_gflops, 0.0, 2.0);

    node.gflops = g;
    node.self_sims += 1;
    history.simulations += 1;
    if (node.action_from_parent)
        history.global_records.push_back(
            {*node.action_from_parent, node.parent->gflops, g});
    if (g > history.best_gflops || history.simulations == 1) {
        history.best_gflops = g;
        history.best_config = node.config;
        history.best_measurement = meas;
    }
    return value;
}

}  // namespace detail

inline void backprop(SearchNode* node, double value) {
    for (SearchNode* cur = node; cur; cur = cur->parent) {
        cur->visits += 1;
        cur->value_sum += value;
    }
}

// Expands one child of `node`: the advisor picks among untried actions,
// illegal or duplicate results fall through to the next candidate, and a
// node with nothing left is marked exhausted (returns nullptr).
inline SearchNode* expand(SearchNode* node, Advisor& advisor,
                          SearchHistory& history, const GemmSpec& spec,
                          const HardwareDescriptor& hw, std::mt19937_64& rng,
                          std::size_t width_cap = 8) {
    if (!node->proposals_populated) {
        node->proposed_actions = propose_action_space(*node, advisor, history,
                                                      spec, hw, rng, width_cap);
        node->untried = node->proposed_actions;
        node->proposals_populated = true;
    }
    auto steps = path_steps(node);
    while (!node->untried.empty()) {
        std::size_t idx = advisor.select_action(node->untried, steps, rng);
        TuningAction action = node->untried[idx];
        node->untried.erase(node->untried.begin() +
                            static_cast<std::ptrdiff_t>(idx));
        TuningConfig next;
        try {
            next = apply_action(node->config, action, spec, hw);
        } catch (const std::exception&) {
            continue;  // legality gate: never applied
        }
        std::uint64_t h = fnv1a(digest_config(next));
        if (history.config_hashes.count(h)) continue;  // duplicate config
        history.config_hashes.insert(h);

        auto child = std::make_unique<SearchNode>();
        child->config = std::move(next);
        child->parent = node;
        child->action_from_parent = action;
        node->children.emplace_back(action, std::move(child));
        return node->children.back().second.get();
    }
    node->exhausted = true;
    return nullptr;
}

// Runs the four-step loop `budget` times starting from the default sketch
// and kernel. Deterministic for a fixed (seed, deterministic evaluator,
// heuristic advisor).
inline TuneResult tune(const GemmSpec& spec, const HardwareDescriptor& hw,
                       Evaluator& evaluator, Advisor& advisor, int budget,
                       std::uint64_t seed, std::size_t width_cap = 8,
                       double exploration_c = 1.4142135623730951) {
    if (budget < 1) throw std::invalid_argument("tune: budget must be >= 1");

    std::mt19937_64 rng(seed);
    TuneResult result;
    result.root = std::make_unique<SearchNode>();
    SearchNode* root = result.root.get();
    root->config.sketch = default_sketch(spec, hw);
    root->config.kernel =
        build_kernel_ir(root->config.sketch, hw, spec.dtype, /*strict=*/false);
    result.history.config_hashes.insert(fnv1a(digest_config(root->config)));

    const bool det = evaluator.deterministic();
    auto record = [&](int iter, const std::string& action, SearchNode* n,
                      double value, double wall_ms) {
        result.log.push_back({iter, action, digest_config(n->config), value,
                              n->gflops, result.history.best_gflops,
                              det ? 0.0 : wall_ms});
    };

    using clock = std::chrono::steady_clock;
    for (int iter = 1; iter <= budget; ++iter) {
        auto t0 = clock::now();
        SearchNode* target = nullptr;
        std::string action_desc;
        if (iter == 1) {
            target = root;
            action_desc = "init";
        } else {
            // a failed expansion marks one node exhausted, so this loop
            // terminates once the whole tree is dead
            while (!root->subtree_exhausted()) {
                SearchNode* leaf = select(root, exploration_c);
                SearchNode* child = expand(leaf, advisor, result.history, spec,
                                           hw, rng, width_cap);
                if (child) {
                    target = child;
                    action_desc = child->action_from_parent->describe();
                    break;
                }
            }
            if (!target) {  // degenerate space: re-test the root config
                target = root;
                action_desc = "exhausted";
            }
        }
        double value =
            detail::simulate(*target, evaluator, result.history, spec, hw);
        backprop(target, value);
        double wall_ms =
            std::chrono::duration<double, std::milli>(clock::now() - t0)
                .count();
        record(iter, action_desc, target, value, wall_ms);
    }

    result.best_config = result.history.best_config;
    result.best_measurement = result.history.best_measurement;
    return result;
}

}  // namespace forge
