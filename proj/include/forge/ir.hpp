// Operator specs, schedule sketches, and the micro-kernel IR.
//
// A sketch is the blocked loop-nest plan (tile sizes, loop order, packing
// and pipeline flags); the kernel IR is the register-resident mr x nr
// inner loop expressed as ordered Load/Compute/Store instruction blocks.
// Legality machinery lives here too: the register-budget rule, sketch
// diagnostics, dependence graphs, and the set of order-preserving swaps
// the tuner may apply.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/hw.hpp"

namespace forge {

using json = nlohmann::json;

// ---------------------------------------------------------- operator specs

enum class DType { F32, F64 };

inline std::uint32_t dtype_bytes(DType t) { return t == DType::F32 ? 4 : 8; }
inline const char* to_string(DType t) { return t == DType::F32 ? "f32" : "f64"; }

struct GemmSpec {
    std::int64_t m = 1, k = 1, n = 1;
    DType dtype = DType::F32;

    bool operator==(const GemmSpec&) const = default;
    std::int64_t flops() const { return 2 * m * n * k; }
};

struct ConvSpec {
    std::int64_t h = 1, w = 1;
    std::int64_t c_in = 1, c_out = 1;
    std::int64_t kh = 1, kw = 1;
    std::int64_t stride = 1, pad = 0;
    DType dtype = DType::F32;

    bool operator==(const ConvSpec&) const = default;
    std::int64_t out_h() const { return (h + 2 * pad - kh) / stride + 1; }
    std::int64_t out_w() const { return (w + 2 * pad - kw) / stride + 1; }
};

inline void validate_spec(const GemmSpec& s) {
    if (s.m < 1 || s.k < 1 || s.n < 1)
        throw std::invalid_argument("gemm dims must be >= 1");
}

inline void validate_spec(const ConvSpec& s) {
    if (s.h < 1 || s.w < 1 || s.c_in < 1 || s.c_out < 1 || s.kh < 1 || s.kw < 1)
        throw std::invalid_argument("conv dims must be >= 1");
    if (s.stride < 1) throw std::invalid_argument("conv stride must be >= 1");
    if (s.pad < 0) throw std::invalid_argument("conv pad must be >= 0");
    if (s.kh > s.h + 2 * s.pad || s.kw > s.w + 2 * s.pad)
        throw std::invalid_argument("filter larger than padded input");
}

// ------------------------------------------------------------ register tile

// Lane count of one vector register for the given element type (1 when the
// descriptor has no vector unit).
inline std::int64_t lanes_for(const HardwareDescriptor& hw, DType dt) {
    if (!hw.has_vector_unit()) return 1;
    return hw.registers.vector_width_bits / (dtype_bytes(dt) * 8);
}

// Register budget rule: an mr x nr tile needs mr*(nr/lanes) accumulators,
// one row of B-panel registers (nr/lanes) and one A-broadcast register.
// Vector kernels draw on the vector file; scalar kernels draw on the
// scalar file minus 4 registers reserved for addressing.
inline bool register_budget_ok(const HardwareDescriptor& hw, DType dt,
                               std::int64_t mr, std::int64_t nr,
                               bool pipelined = false) {
    if (mr < 1 || nr < 1) return false;
    std::int64_t lanes = lanes_for(hw, dt);
    bool vector_mode = lanes > 1 && nr % lanes == 0;
    std::int64_t v = vector_mode ? nr / lanes : nr;
    std::int64_t budget = vector_mode
                              ? std::int64_t(hw.registers.vector_count)
                              : std::int64_t(hw.registers.scalar_count) - 4;
    std::int64_t need = pipelined ? mr * v + 2 * v + 2 : mr * v + v + 1;
    return need <= budget;
}

// Largest feasible register tile: maximize mr*nr under the budget rule,
// ties broken toward larger mr. Enumeration is bounded at 64 per side.
inline std::pair<std::int64_t, std::int64_t> choose_register_tile(
    const HardwareDescriptor& hw, DType dt) {
    std::int64_t lanes = lanes_for(hw, dt);
    std::int64_t best_mr = 0, best_nr = 0;
    for (std::int64_t mr = 1; mr <= 64; ++mr) {
        for (std::int64_t nr = lanes; nr <= 64; nr += lanes) {
            if (!register_budget_ok(hw, dt, mr, nr)) continue;
            std::int64_t p = mr * nr, best = best_mr * best_nr;
            if (p > best || (p == best && mr > best_mr)) {
                best_mr = mr;
                best_nr = nr;
            }
        }
    }
    if (best_mr == 0)
        throw std::runtime_error(
            "no feasible register tile: register file too small");
    return {best_mr, best_nr};
}

// ---------------------------------------------------------------- sketches

enum class LoopAxis { M, N, K };

inline const char* to_string(LoopAxis a) {
    switch (a) {
        case LoopAxis::M: return "M";
        case LoopAxis::N: return "N";
        case LoopAxis::K: return "K";
    }
    return "?";
}

struct ScheduleSketch {
    std::int64_t bm = 1, bn = 1, bk = 1;  // block tile sizes, elements
    std::int64_t mr = 1, nr = 1;          // register tile
    std::array<LoopAxis, 3> loop_order = {LoopAxis::N, LoopAxis::K,
                                          LoopAxis::M};  // outermost first
    bool pack_a = true;
    bool pack_b = true;
    bool pipeline = false;
    std::int64_t prefetch_distance = 0;  // iterations ahead, 0 = off

    bool operator==(const ScheduleSketch&) const = default;
};

inline bool is_loop_permutation(const std::array<LoopAxis, 3>& order) {
    bool seen[3] = {false, false, false};
    for (auto a : order) seen[static_cast<int>(a)] = true;
    return seen[0] && seen[1] && seen[2];
}

// Diagnostics are empty iff the sketch is legal for (spec, hw).
inline std::vector<std::string> check_sketch_legality(
    const ScheduleSketch& s, const GemmSpec& spec,
    const HardwareDescriptor& hw) {
    std::vector<std::string> diags;
    auto bad = [&](const std::string& m) { diags.push_back(m); };

    if (s.mr < 1) bad("mr: must be >= 1");
    if (s.nr < 1) bad("nr: must be >= 1");
    if (s.bk < 1) bad("bk: must be >= 1");
    if (s.mr > s.bm) bad("bm: must be >= mr");
    if (s.nr > s.bn) bad("bn: must be >= nr");
    if (s.bm > spec.m) bad("bm: exceeds m");
    if (s.bn > spec.n) bad("bn: exceeds n");
    if (s.bk > spec.k) bad("bk: exceeds k");
    if (s.prefetch_distance < 0) bad("prefetch_distance: must be >= 0");
    if (!is_loop_permutation(s.loop_order))
        bad("loop_order: must be a permutation of {M,N,K}");

    // The lane rule applies to problems wide enough to vectorize; anything
    // narrower degrades to a scalar-mode kernel with nr free in [1, n].
    std::int64_t lanes = lanes_for(hw, spec.dtype);
    if (lanes > 1 && spec.n >= lanes && s.nr % lanes != 0)
        bad("nr: not lane-multiple");
    if (!register_budget_ok(hw, spec.dtype, s.mr, s.nr))
        bad("(mr,nr): exceeds the register budget");
    else if (s.pipeline && !register_budget_ok(hw, spec.dtype, s.mr, s.nr,
                                               /*pipelined=*/true))
        bad("pipeline: no spare registers for double buffering");
    return diags;
}

namespace detail {

inline std::int64_t round_down_multiple(std::int64_t x, std::int64_t m) {
    return m <= 1 ? x : (x / m) * m;
}

}  // namespace detail

// Initial sketch from the cache-capacity rule: bk sized so a packed
// bk x nr B sliver fits half of L1, bm so a packed bm x bk A block fits
// half of L2 (L1 when single-level), bn so a bk x bn panel fits half of
// the last-level cache; everything rounded to register-tile multiples and
// clamped to the problem.
inline ScheduleSketch default_sketch(const GemmSpec& spec,
                                     const HardwareDescriptor& hw) {
    validate_spec(spec);
    if (hw.family != HwFamily::Cpu)
        throw std::invalid_argument("default_sketch: cpu descriptors only");

    auto [mr, nr] = choose_register_tile(hw, spec.dtype);
    std::int64_t lanes = lanes_for(hw, spec.dtype);

    // Clamp the register tile to the problem, preserving lane multiples.
    mr = std::min(mr, spec.m);
    if (lanes > 1 && spec.n >= lanes) {
        nr = std::min(nr, detail::round_down_multiple(spec.n, lanes));
    } else if (lanes > 1) {
        // too narrow to vectorize: best scalar-mode tile under the budget
        std::int64_t best_mr = 0, best_nr = 0;
        for (std::int64_t cm = 1; cm <= std::min<std::int64_t>(64, spec.m); ++cm)
            for (std::int64_t cn = 1; cn <= spec.n; ++cn) {
                if (!register_budget_ok(hw, spec.dtype, cm, cn)) continue;
                if (cm * cn > best_mr * best_nr ||
                    (cm * cn == best_mr * best_nr && cm > best_mr)) {
                    best_mr = cm;
                    best_nr = cn;
                }
            }
        if (best_mr == 0)
            throw std::runtime_error(
                "no feasible register tile: register file too small");
        mr = best_mr;
        nr = best_nr;
    } else {
        nr = std::min(nr, spec.n);
    }
    while (mr > 1 && !register_budget_ok(hw, spec.dtype, mr, nr)) --mr;
    if (!register_budget_ok(hw, spec.dtype, mr, nr))
        throw std::runtime_error(
            "no feasible register tile: register file too small");

    const std::int64_t dt = dtype_bytes(spec.dtype);
    std::size_t n_cache = hw.cache_level_count();
    auto half = [&](std::size_t idx) {
        return std::int64_t(hw.memory[idx].size_bytes / 2);
    };

    ScheduleSketch s;
    s.mr = mr;
    s.nr = nr;
    s.bk = std::clamp<std::int64_t>(half(0) / (nr * dt), 1, spec.k);

    std::size_t a_level = n_cache >= 2 ? 1 : 0;
    std::int64_t bm = detail::round_down_multiple(half(a_level) / (s.bk * dt), mr);
    s.bm = std::min(std::max(bm, mr), spec.m);

    std::size_t llc = n_cache >= 1 ? n_cache - 1 : 0;
    std::int64_t bn = detail::round_down_multiple(half(llc) / (s.bk * dt), nr);
    s.bn = std::min(std::max(bn, nr), spec.n);

    s.pack_a = true;
    s.pack_b = true;
    s.pipeline = false;
    s.prefetch_distance = 0;

    auto diags = check_sketch_legality(s, spec, hw);
    if (!diags.empty())
        throw std::runtime_error("default_sketch produced illegal sketch: " +
                                 diags.front());
    return s;
}

// ----------------------------------------------------------- iteration walk

// Canonical blocked iteration order implied by a sketch: the three block
// loops in sketch order, then the nr/mr micro-tile loops, then the k-step
// and in-tile element loops. Fringe tiles get reduced extents. Visits
// every (i, j, q) of the full iteration space exactly once.
template <class Fn>
void visit_iteration_space(const ScheduleSketch& s, std::int64_t m,
                           std::int64_t n, std::int64_t k, Fn&& fn) {
    std::int64_t lo[3] = {0, 0, 0};
    const std::int64_t dims[3] = {m, n, k};  // indexed by LoopAxis
    const std::int64_t steps[3] = {s.bm, s.bn, s.bk};

    auto body = [&](std::int64_t m0, std::int64_t n0, std::int64_t k0) {
        const std::int64_t mc = std::min(s.bm, m - m0);
        const std::int64_t nc = std::min(s.bn, n - n0);
        const std::int64_t kc = std::min(s.bk, k - k0);
        for (std::int64_t jr = 0; jr < nc; jr += s.nr)
            for (std::int64_t ir = 0; ir < mc; ir += s.mr) {
                const std::int64_t tm = std::min(s.mr, mc - ir);
                const std::int64_t tn = std::min(s.nr, nc - jr);
                for (std::int64_t p = 0; p < kc; ++p)
                    for (std::int64_t i = 0; i < tm; ++i)
                        for (std::int64_t j = 0; j < tn; ++j)
                            fn(m0 + ir + i, n0 + jr + j, k0 + p);
            }
    };

    auto axis = [&](LoopAxis a) { return static_cast<int>(a); };
    for (lo[axis(s.loop_order[0])] = 0;
         lo[axis(s.loop_order[0])] < dims[axis(s.loop_order[0])];
         lo[axis(s.loop_order[0])] += steps[axis(s.loop_order[0])])
        for (lo[axis(s.loop_order[1])] = 0;
             lo[axis(s.loop_order[1])] < dims[axis(s.loop_order[1])];
             lo[axis(s.loop_order[1])] += steps[axis(s.loop_order[1])])
            for (lo[axis(s.loop_order[2])] = 0;
                 lo[axis(s.loop_order[2])] < dims[axis(s.loop_order[2])];
                 lo[axis(s.loop_order[2])] += steps[axis(s.loop_order[2])])
                body(lo[0], lo[1], lo[2]);
}

// ---------------------------------------------------------------- kernel IR

enum class BufferId { A, B, C };

inline const char* to_string(BufferId b) {
    switch (b) {
        case BufferId::A: return "A";
        case BufferId::B: return "B";
        case BufferId::C: return "C";
    }
    return "?";
}

// One coordinate of a memory reference: either a compile-time constant
// within the tile or the kernel's k-step induction variable. Offsets stay
// affine in the single loop index, which keeps the dependence test exact.
struct Coord {
    enum Kind { Const, KStep } kind = Const;
    std::int64_t value = 0;  // meaningful for Const

    bool operator==(const Coord&) const = default;
    static Coord at(std::int64_t v) { return {Const, v}; }
    static Coord kstep() { return {KStep, 0}; }
};

struct MemRef {
    BufferId buffer = BufferId::A;
    Coord row;
    Coord col;

    bool operator==(const MemRef&) const = default;
};

// Comparison of two references on the same buffer: exact when both
// coordinates are of matching kinds, conservative otherwise.
enum class AliasVerdict { Same, Distinct, MayAlias };

inline AliasVerdict compare_refs(const MemRef& a, const MemRef& b) {
    if (a.buffer != b.buffer) return AliasVerdict::Distinct;
    auto cmp = [](const Coord& x, const Coord& y) {
        if (x.kind != y.kind) return AliasVerdict::MayAlias;
        if (x.kind == Coord::KStep) return AliasVerdict::Same;
        return x.value == y.value ? AliasVerdict::Same : AliasVerdict::Distinct;
    };
    AliasVerdict r = cmp(a.row, b.row), c = cmp(a.col, b.col);
    if (r == AliasVerdict::Distinct || c == AliasVerdict::Distinct)
        return AliasVerdict::Distinct;
    if (r == AliasVerdict::Same && c == AliasVerdict::Same)
        return AliasVerdict::Same;
    return AliasVerdict::MayAlias;
}

using RegId = std::int32_t;
inline constexpr RegId kNoReg = -1;

struct VInstr {
    std::int32_t id = 0;  // creation ordinal, stable across reorders
    InstrKind op = InstrKind::VFma;
    RegId dst = kNoReg;          // stores have no dst
    std::vector<RegId> srcs;     // fma: {acc, src1, src2}; store: {value}
    std::optional<MemRef> mem;   // loads and stores only

    bool operator==(const VInstr&) const = default;
    bool writes_reg() const { return dst != kNoReg; }
};

enum class Stage { Load, Compute, Store };

inline const char* to_string(Stage s) {
    switch (s) {
        case Stage::Load: return "load";
        case Stage::Compute: return "compute";
        case Stage::Store: return "store";
    }
    return "?";
}

struct Block {
    Stage stage = Stage::Load;
    std::vector<VInstr> instrs;

    bool operator==(const Block&) const = default;
};

// role -> register ids. Shadow entries are populated when pipeline_depth
// is 2 and hold the double-buffered copies of the panel registers.
struct RegisterMap {
    std::vector<RegId> acc;       // mr rows x (nr/lanes) columns, row-major
    std::vector<RegId> b_panel;   // one row of the B panel
    std::vector<RegId> a_pool;    // rotating A-broadcast registers
    std::vector<RegId> b_shadow;
    std::vector<RegId> a_shadow;

    bool operator==(const RegisterMap&) const = default;
};

struct KernelIR {
    std::vector<Block> stage_blocks;
    RegisterMap register_map;
    int pipeline_depth = 1;  // 1 or 2

    // Geometry the blocks were built for; kept here so the IR is
    // self-describing for the interpreter and emitters.
    std::int64_t mr = 1, nr = 1;
    std::int64_t lanes = 1;   // effective lanes (1 in scalar mode)
    bool vector_mode = false;

    bool operator==(const KernelIR&) const = default;

    Block& block(Stage st) {
        for (auto& b : stage_blocks)
            if (b.stage == st) return b;
        throw std::logic_error("kernel has no such stage block");
    }
    const Block& block(Stage st) const {
        return const_cast<KernelIR*>(this)->block(st);
    }
};

// --------------------------------------------------------- dependence graph

enum class DepKind { Flow, Anti, Output, Memory };

inline const char* to_string(DepKind k) {
    switch (k) {
        case DepKind::Flow: return "flow";
        case DepKind::Anti: return "anti";
        case DepKind::Output: return "output";
        case DepKind::Memory: return "memory";
    }
    return "?";
}

struct DepEdge {
    std::int32_t producer = 0;  // VInstr id
    std::int32_t consumer = 0;
    DepKind kind = DepKind::Flow;

    bool operator==(const DepEdge&) const = default;
};

struct DependenceGraph {
    std::vector<std::int32_t> nodes;  // VInstr ids in block order
    std::vector<DepEdge> edges;

    bool has_edge_between(std::int32_t a, std::int32_t b) const {
        for (const auto& e : edges)
            if ((e.producer == a && e.consumer == b) ||
                (e.producer == b && e.consumer == a))
                return true;
        return false;
    }
};

// Builds the dependence relation of a single straight-line block. Edges
// always point from earlier to later position, so the graph is acyclic by
// construction. Register edges: flow (dst feeding a later source with no
// intervening redefinition), anti (read followed by the next write), and
// output (consecutive writes). Memory edges are conservative: any pair on
// the same buffer involving a store whose offsets are not provably
// distinct.
inline DependenceGraph dependence_graph(const Block& block) {
    DependenceGraph g;
    const auto& ins = block.instrs;
    for (const auto& in : ins) g.nodes.push_back(in.id);

    auto reads = [](const VInstr& in, RegId r) {
        for (RegId s : in.srcs)
            if (s == r) return true;
        return false;
    };
    auto redefined_between = [&](std::size_t i, std::size_t j, RegId r) {
        for (std::size_t t = i + 1; t < j; ++t)
            if (ins[t].dst == r) return true;
        return false;
    };

    for (std::size_t i = 0; i < ins.size(); ++i) {
        for (std::size_t j = i + 1; j < ins.size(); ++j) {
            const VInstr& a = ins[i];
            const VInstr& b = ins[j];
            if (a.writes_reg() && reads(b, a.dst) &&
                !redefined_between(i, j, a.dst))
                g.edges.push_back({a.id, b.id, DepKind::Flow});
            if (b.writes_reg() && reads(a, b.dst) &&
                !redefined_between(i, j, b.dst))
                g.edges.push_back({a.id, b.id, DepKind::Anti});
            if (a.writes_reg() && b.writes_reg() && a.dst == b.dst &&
                !redefined_between(i, j, a.dst))
                g.edges.push_back({a.id, b.id, DepKind::Output});
            if (a.mem && b.mem && (is_store(a.op) || is_store(b.op)) &&
                compare_refs(*a.mem, *b.mem) != AliasVerdict::Distinct)
                g.edges.push_back({a.id, b.id, DepKind::Memory});
        }
    }
    return g;
}

// Adjacent positions (i, i+1) that may be exchanged without touching any
// dependence: the tuner's reorder action space for one block.
inline std::vector<std::pair<std::size_t, std::size_t>> legal_swaps(
    const Block& block) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (block.instrs.size() < 2) return out;
    DependenceGraph g = dependence_graph(block);
    for (std::size_t i = 0; i + 1 < block.instrs.size(); ++i) {
        if (!g.has_edge_between(block.instrs[i].id, block.instrs[i + 1].id))
            out.emplace_back(i, i + 1);
    }
    return out;
}

inline void apply_swap(Block& block, std::size_t i) {
    if (i + 1 >= block.instrs.size())
        throw std::out_of_range("swap index out of range");
    std::swap(block.instrs[i], block.instrs[i + 1]);
}

// ------------------------------------------------------- kernel validation

// Structural sanity of a kernel against the register file: bounds, store
// coverage of every accumulator, single-writer discipline inside blocks,
// and acyclic per-block dependence graphs.
inline std::vector<std::string> validate_kernel_ir(
    const KernelIR& ir, const HardwareDescriptor& hw) {
    std::vector<std::string> diags;
    auto bad = [&](const std::string& m) { diags.push_back(m); };

    if (ir.pipeline_depth != 1 && ir.pipeline_depth != 2)
        bad("pipeline_depth: must be 1 or 2");

    std::int64_t reg_bound = ir.vector_mode ? hw.registers.vector_count
                                            : hw.registers.scalar_count;
    std::vector<RegId> stored;
    for (const auto& blk : ir.stage_blocks) {
        for (const auto& in : blk.instrs) {
            if (in.writes_reg() && (in.dst < 0 || in.dst >= reg_bound))
                bad("instr " + std::to_string(in.id) +
                    ": dst outside register file bounds");
            for (RegId s : in.srcs)
                if (s < 0 || s >= reg_bound)
                    bad("instr " + std::to_string(in.id) +
                        ": src outside register file bounds");
            if (is_load(in.op) || is_store(in.op)) {
                if (!in.mem)
                    bad("instr " + std::to_string(in.id) +
                        ": load/store without memory operand");
            } else if (in.mem) {
                bad("instr " + std::to_string(in.id) +
                    ": arithmetic with memory operand");
            }
            if (in.op == InstrKind::VFma || in.op == InstrKind::SFma) {
                if (in.srcs.size() != 3)
                    bad("instr " + std::to_string(in.id) +
                        ": fma needs 3 sources (acc, a, b)");
            }
            if (is_store(in.op)) {
                if (blk.stage != Stage::Store)
                    bad("instr " + std::to_string(in.id) +
                        ": store outside a Store block");
                if (!in.srcs.empty()) stored.push_back(in.srcs.front());
            }
        }

        // Two writes to one register with no intervening read leave a
        // producer dangling.
        for (std::size_t i = 0; i < blk.instrs.size(); ++i) {
            const auto& a = blk.instrs[i];
            if (!a.writes_reg()) continue;
            for (std::size_t j = i + 1; j < blk.instrs.size(); ++j) {
                const auto& b = blk.instrs[j];
                bool read = false;
                for (RegId s : b.srcs) read |= (s == a.dst);
                if (read) break;
                if (b.dst == a.dst) {
                    bad("reg " + std::to_string(a.dst) +
                        ": overwritten before any consumer (instrs " +
                        std::to_string(a.id) + " -> " + std::to_string(b.id) +
                        ")");
                    break;
                }
            }
        }
    }

    for (RegId acc : ir.register_map.acc) {
        bool found = false;
        for (RegId s : stored) found |= (s == acc);
        if (!found)
            bad("accumulator reg " + std::to_string(acc) +
                ": never stored in a Store block");
    }
    return diags;
}

// ------------------------------------------------------------------- JSON

inline void to_json(json& j, const Coord& c) {
    j = json{{"kind", c.kind == Coord::KStep ? "kstep" : "const"}};
    if (c.kind == Coord::Const) j["value"] = c.value;
}

inline void from_json(const json& j, Coord& c) {
    std::string k = j.at("kind");
    c.kind = (k == "kstep") ? Coord::KStep : Coord::Const;
    c.value = c.kind == Coord::Const ? j.at("value").get<std::int64_t>() : 0;
}

inline void to_json(json& j, const MemRef& m) {
    j = json{{"buffer", to_string(m.buffer)}, {"row", m.row}, {"col", m.col}};
}

inline void from_json(const json& j, MemRef& m) {
    std::string b = j.at("buffer");
    m.buffer = b == "A" ? BufferId::A : (b == "B" ? BufferId::B : BufferId::C);
    m.row = j.at("row").get<Coord>();
    m.col = j.at("col").get<Coord>();
}

inline void to_json(json& j, const VInstr& in) {
    j = json{{"id", in.id},
             {"op", to_string(in.op)},
             {"dst", in.dst},
             {"srcs", in.srcs}};
    if (in.mem) j["mem"] = *in.mem;
}

inline void from_json(const json& j, VInstr& in) {
    in.id = j.at("id");
    auto k = instr_kind_from_string(j.at("op").get<std::string>());
    if (!k) throw std::invalid_argument("bad instruction op in json");
    in.op = *k;
    in.dst = j.at("dst");
    in.srcs = j.at("srcs").get<std::vector<RegId>>();
    in.mem.reset();
    if (j.contains("mem")) in.mem = j.at("mem").get<MemRef>();
}

inline void to_json(json& j, const Block& b) {
    j = json{{"stage", to_string(b.stage)}, {"instrs", b.instrs}};
}

inline void from_json(const json& j, Block& b) {
    std::string s = j.at("stage");
    b.stage = s == "load" ? Stage::Load
                          : (s == "compute" ? Stage::Compute : Stage::Store);
    b.instrs = j.at("instrs").get<std::vector<VInstr>>();
}

inline void to_json(json& j, const RegisterMap& r) {
    j = json{{"acc", r.acc},
             {"b_panel", r.b_panel},
             {"a_pool", r.a_pool},
             {"b_shadow", r.b_shadow},
             {"a_shadow", r.a_shadow}};
}

inline void from_json(const json& j, RegisterMap& r) {
    r.acc = j.at("acc").get<std::vector<RegId>>();
    r.b_panel = j.at("b_panel").get<std::vector<RegId>>();
    r.a_pool = j.at("a_pool").get<std::vector<RegId>>();
    r.b_shadow = j.at("b_shadow").get<std::vector<RegId>>();
    r.a_shadow = j.at("a_shadow").get<std::vector<RegId>>();
}

inline void to_json(json& j, const KernelIR& ir) {
    j = json{{"stage_blocks", ir.stage_blocks},
             {"register_map", ir.register_map},
             {"pipeline_depth", ir.pipeline_depth},
             {"mr", ir.mr},
             {"nr", ir.nr},
             {"lanes", ir.lanes},
             {"vector_mode", ir.vector_mode}};
}

inline void from_json(const json& j, KernelIR& ir) {
    ir.stage_blocks = j.at("stage_blocks").get<std::vector<Block>>();
    ir.register_map = j.at("register_map").get<RegisterMap>();
    ir.pipeline_depth = j.at("pipeline_depth");
    ir.mr = j.at("mr");
    ir.nr = j.at("nr");
    ir.lanes = j.at("lanes");
    ir.vector_mode = j.at("vector_mode");
}

inline void to_json(json& j, const ScheduleSketch& s) {
    std::vector<std::string> order;
    for (auto a : s.loop_order) order.emplace_back(to_string(a));
    j = json{{"bm", s.bm},
             {"bn", s.bn},
             {"bk", s.bk},
             {"mr", s.mr},
             {"nr", s.nr},
             {"loop_order", order},
             {"pack_a", s.pack_a},
             {"pack_b", s.pack_b},
             {"pipeline", s.pipeline},
             {"prefetch_distance", s.prefetch_distance}};
}

inline void from_json(const json& j, ScheduleSketch& s) {
    s.bm = j.at("bm");
    s.bn = j.at("bn");
    s.bk = j.at("bk");
    s.mr = j.at("mr");
    s.nr = j.at("nr");
    auto order = j.at("loop_order").get<std::vector<std::string>>();
    if (order.size() != 3)
        throw std::invalid_argument("loop_order must have 3 axes");
    for (std::size_t i = 0; i < 3; ++i) {
        if (order[i] == "M") s.loop_order[i] = LoopAxis::M;
        else if (order[i] == "N") s.loop_order[i] = LoopAxis::N;
        else if (order[i] == "K") s.loop_order[i] = LoopAxis::K;
        else throw std::invalid_argument("bad loop axis: " + order[i]);
    }
    s.pack_a = j.at("pack_a");
    s.pack_b = j.at("pack_b");
    s.pipeline = j.at("pipeline");
    s.prefetch_distance = j.at("prefetch_distance");
}

// ------------------------------------------------------------------ digest

// Stable 64-bit FNV-1a, used for config digests and duplicate pruning.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace forge
