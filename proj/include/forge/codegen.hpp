// Kernel construction and source emission.
//
// build_kernel_ir turns a legal sketch into Load/Compute/Store blocks over
// an explicit register map; the emitters lower a (sketch, kernel) pair to a
// single compilable C translation unit. Two kernel flavors exist: a
// scalar-portable one (every instruction expanded to lane-wise scalar
// statements) and a templated one (instructions rendered through the
// descriptor's mnemonic templates inside delimited asm blocks). Both render
// the kernel's instructions in IR order, so tuner reorderings are visible
// in the emitted text.

#pragma once

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "forge/ir.hpp"

namespace forge {

// ------------------------------------------------------------ kernel build

// Builds the micro-kernel for one k step. Register layout: mr*(nr/lanes)
// accumulators, one row of B-panel registers, and a small rotating pool of
// A-broadcast registers (at least one; more when the file has slack).
// Broadcasts that do not fit the pool up front are interleaved into the
// Compute block right after the FMAs that free their register.
//
// pipeline=on builds depth-2 double buffering: shadow copies of the panel
// registers receive the next iteration's loads after the current FMAs. If
// the shadows do not fit, strict mode throws "register overflow"; otherwise
// the kernel silently degrades to depth 1.
inline KernelIR build_kernel_ir(const ScheduleSketch& sketch,
                                const HardwareDescriptor& hw, DType dt,
                                bool strict = true) {
    const std::int64_t lanes = lanes_for(hw, dt);
    const std::int64_t mr = sketch.mr, nr = sketch.nr;
    const bool vector_mode = lanes > 1 && nr % lanes == 0;

    KernelIR ir;
    ir.mr = mr;
    ir.nr = nr;
    ir.vector_mode = vector_mode;
    ir.lanes = vector_mode ? lanes : 1;

    const std::int64_t v = vector_mode ? nr / lanes : nr;
    const std::int64_t budget =
        vector_mode ? std::int64_t(hw.registers.vector_count)
                    : std::int64_t(hw.registers.scalar_count) - 4;

    if (mr * v + v + 1 > budget)
        throw std::invalid_argument(
            "build_kernel_ir: sketch violates the register budget");

    bool pipelined = sketch.pipeline;
    if (pipelined && mr * v + 2 * v + 2 > budget) {
        if (strict)
            throw std::runtime_error(
                "register overflow: cannot double-buffer panel registers");
        pipelined = false;
    }
    ir.pipeline_depth = pipelined ? 2 : 1;

    // Broadcast pool size: all the slack in depth-1 mode, half of it when
    // shadows double everything.
    std::int64_t pool;
    if (pipelined)
        pool = std::clamp<std::int64_t>((budget - mr * v - 2 * v) / 2, 1, mr);
    else
        pool = std::clamp<std::int64_t>(budget - mr * v - v, 1, mr);

    RegId next = 0;
    auto take = [&next](std::int64_t count) {
        std::vector<RegId> ids;
        for (std::int64_t i = 0; i < count; ++i) ids.push_back(next++);
        return ids;
    };
    ir.register_map.acc = take(mr * v);
    ir.register_map.b_panel = take(v);
    ir.register_map.a_pool = take(pool);
    if (pipelined) {
        ir.register_map.b_shadow = take(v);
        ir.register_map.a_shadow = take(pool);
    }

    const InstrKind k_bcast =
        vector_mode ? InstrKind::VBroadcast : InstrKind::SLoad;
    const InstrKind k_load = vector_mode ? InstrKind::VLoad : InstrKind::SLoad;
    const InstrKind k_fma = vector_mode ? InstrKind::VFma : InstrKind::SFma;
    const InstrKind k_store =
        vector_mode ? InstrKind::VStore : InstrKind::SStore;

    std::int32_t id = 0;
    Block load{Stage::Load, {}};
    for (std::int64_t r = 0; r < std::min(pool, mr); ++r)
        load.instrs.push_back({id++, k_bcast, ir.register_map.a_pool[r],
                               {},
                               MemRef{BufferId::A, Coord::at(r), Coord::kstep()}});
    for (std::int64_t j = 0; j < v; ++j)
        load.instrs.push_back(
            {id++, k_load, ir.register_map.b_panel[j],
             {},
             MemRef{BufferId::B, Coord::kstep(), Coord::at(j * ir.lanes)}});

    Block compute{Stage::Compute, {}};
    for (std::int64_t i = 0; i < mr; ++i) {
        RegId areg = ir.register_map.a_pool[i % pool];
        for (std::int64_t j = 0; j < v; ++j) {
            RegId acc = ir.register_map.acc[i * v + j];
            compute.instrs.push_back(
                {id++, k_fma, acc,
                 {acc, areg, ir.register_map.b_panel[j]},
                 std::nullopt});
        }
        // refill the register row i just consumed
        if (i + pool < mr)
            compute.instrs.push_back(
                {id++, k_bcast, ir.register_map.a_pool[(i + pool) % pool],
                 {},
                 MemRef{BufferId::A, Coord::at(i + pool), Coord::kstep()}});
    }

    Block store{Stage::Store, {}};
    for (std::int64_t i = 0; i < mr; ++i)
        for (std::int64_t j = 0; j < v; ++j)
            store.instrs.push_back(
                {id++, k_store, kNoReg,
                 {ir.register_map.acc[i * v + j]},
                 MemRef{BufferId::C, Coord::at(i), Coord::at(j * ir.lanes)}});

    ir.stage_blocks = {load, compute, store};

    auto diags = validate_kernel_ir(ir, hw);
    if (!diags.empty())
        throw std::logic_error("build_kernel_ir produced invalid IR: " +
                               diags.front());
    return ir;
}

// ------------------------------------------------------------------ im2col

struct Im2colPlan {
    GemmSpec gemm;
    ConvSpec conv;
    std::int64_t col_rows = 0;  // kh*kw*c_in
    std::int64_t col_cols = 0;  // out_h*out_w

    struct Source {
        std::int64_t channel, y, x;
    };

    // (row, col) of the column buffer -> input coordinate, or nullopt for a
    // padding ZERO entry.
    std::optional<Source> gather(std::int64_t row, std::int64_t col) const {
        std::int64_t ci = row / (conv.kh * conv.kw);
        std::int64_t rem = row % (conv.kh * conv.kw);
        std::int64_t fy = rem / conv.kw;
        std::int64_t fx = rem % conv.kw;
        std::int64_t oy = col / conv.out_w();
        std::int64_t ox = col % conv.out_w();
        std::int64_t y = oy * conv.stride + fy - conv.pad;
        std::int64_t x = ox * conv.stride + fx - conv.pad;
        if (y < 0 || y >= conv.h || x < 0 || x >= conv.w) return std::nullopt;
        return Source{ci, y, x};
    }
};

// Lowers convolution to GEMM: the filter reshapes to c_out x (kh*kw*c_in)
// and the input unrolls into a column buffer of matching inner dimension.
inline Im2colPlan conv_to_gemm(const ConvSpec& spec) {
    validate_spec(spec);
    Im2colPlan plan;
    plan.conv = spec;
    plan.col_rows = spec.kh * spec.kw * spec.c_in;
    plan.col_cols = spec.out_h() * spec.out_w();
    plan.gemm = GemmSpec{spec.c_out, plan.col_rows, plan.col_cols, spec.dtype};
    return plan;
}

inline void to_json(json& j, const GemmSpec& s) {
    j = json{{"m", s.m}, {"k", s.k}, {"n", s.n}, {"dtype", to_string(s.dtype)}};
}

inline void from_json(const json& j, GemmSpec& s) {
    s.m = j.at("m");
    s.k = j.at("k");
    s.n = j.at("n");
    s.dtype = j.at("dtype") == "f64" ? DType::F64 : DType::F32;
}

inline void to_json(json& j, const ConvSpec& s) {
    j = json{{"h", s.h},         {"w", s.w},   {"c_in", s.c_in},
             {"c_out", s.c_out}, {"kh", s.kh}, {"kw", s.kw},
             {"stride", s.stride}, {"pad", s.pad},
             {"dtype", to_string(s.dtype)}};
}

inline void from_json(const json& j, ConvSpec& s) {
    s.h = j.at("h");
    s.w = j.at("w");
    s.c_in = j.at("c_in");
    s.c_out = j.at("c_out");
    s.kh = j.at("kh");
    s.kw = j.at("kw");
    s.stride = j.at("stride");
    s.pad = j.at("pad");
    s.dtype = j.at("dtype") == "f64" ? DType::F64 : DType::F32;
}

inline void to_json(json& j, const Im2colPlan& p) {
    j = json{{"gemm", p.gemm},
             {"conv", p.conv},
             {"col_buffer_shape", {p.col_rows, p.col_cols}},
             {"gather_map",
              "row = ci*(kh*kw) + fy*kw + fx; col = oy*out_w + ox; "
              "input (ci, oy*stride + fy - pad, ox*stride + fx - pad), "
              "ZERO outside bounds"}};
}

// --------------------------------------------------------- source artifact

enum class KernelFlavor { Scalar, Templated };

inline const char* to_string(KernelFlavor f) {
    return f == KernelFlavor::Scalar ? "scalar" : "templated";
}

struct SourceArtifact {
    std::vector<std::pair<std::string, std::string>> files;  // (path, text)
    std::string entry_symbol;
    std::string abi =
        "void entry(const elt* a, const elt* b, elt* c, int64_t m, int64_t n, "
        "int64_t k); row-major, unit-stride innermost, C += A*B with "
        "caller-zeroed C";

    const std::string& text() const { return files.front().second; }
};

namespace emit {

inline const char* c_type(DType dt) {
    return dt == DType::F32 ? "float" : "double";
}

struct Writer {
    std::ostringstream out;
    int depth = 0;
    void line(const std::string& s) {
        for (int i = 0; i < depth; ++i) out << "    ";
        out << s << "\n";
    }
    void blank() { out << "\n"; }
    std::string str() const { return out.str(); }
};

// Rename map for pipelined execution: parity 1 swaps panel registers for
// their shadows.
inline RegId rename_reg(const KernelIR& ir, RegId r, int parity) {
    if (parity == 0 || ir.pipeline_depth != 2) return r;
    const auto& m = ir.register_map;
    for (std::size_t i = 0; i < m.b_panel.size(); ++i)
        if (m.b_panel[i] == r) return m.b_shadow[i];
    for (std::size_t i = 0; i < m.a_pool.size(); ++i)
        if (m.a_pool[i] == r) return m.a_shadow[i];
    return r;  // accumulators are shared across parities
}

inline std::string reg_var(const KernelIR& ir, RegId r, std::int64_t lane,
                           int parity) {
    return "r" + std::to_string(rename_reg(ir, r, parity)) + "_" +
           std::to_string(lane);
}

// Address of a memory reference, as a C expression. `kexpr` substitutes the
// k-step induction variable.
inline std::string addr_expr(const MemRef& m, const std::string& kexpr) {
    auto coord = [&](const Coord& c) {
        return c.kind == Coord::KStep ? kexpr : std::to_string(c.value);
    };
    switch (m.buffer) {
        case BufferId::A:
            return "ap[(" + coord(m.row) + ")*ai_stride + (" + coord(m.col) +
                   ")*ap_stride]";
        case BufferId::B:
            return "bp[(" + coord(m.row) + ")*bp_stride + (" + coord(m.col) +
                   ")*bj_stride]";
        case BufferId::C:
            return "c[(" + coord(m.row) + ")*ldc + (" + coord(m.col) + ")]";
    }
    return "";
}

// Lane-wise scalar expansion of one instruction, in IR order.
inline void emit_scalar_instr(Writer& w, const KernelIR& ir, const VInstr& in,
                              const std::string& kexpr, int parity) {
    for (std::int64_t l = 0; l < ir.lanes; ++l) {
        switch (in.op) {
            case InstrKind::VBroadcast:
                w.line(reg_var(ir, in.dst, l, parity) + " = " +
                       addr_expr(*in.mem, kexpr) + ";");
                break;
            case InstrKind::VLoad:
            case InstrKind::SLoad: {
                MemRef m = *in.mem;
                // broadcasts in scalar mode carry an A reference
                if (m.buffer == BufferId::B && m.col.kind == Coord::Const)
                    m.col.value += l;
                w.line(reg_var(ir, in.dst, l, parity) + " = " +
                       addr_expr(m, kexpr) + ";");
                break;
            }
            case InstrKind::VFma:
            case InstrKind::SFma:
                w.line(reg_var(ir, in.dst, l, parity) + " += " +
                       reg_var(ir, in.srcs[1], l, parity) + " * " +
                       reg_var(ir, in.srcs[2], l, parity) + ";");
                break;
            case InstrKind::VStore:
            case InstrKind::SStore: {
                MemRef m = *in.mem;
                if (m.col.kind == Coord::Const) m.col.value += l;
                w.line(addr_expr(m, kexpr) + " += " +
                       reg_var(ir, in.srcs[0], l, parity) + ";");
                break;
            }
        }
    }
}

inline std::string reg_name(const KernelIR& ir, RegId r, int parity) {
    RegId actual = rename_reg(ir, r, parity);
    return (ir.vector_mode ? "v" : "f") + std::to_string(actual);
}

inline std::string render_template(const KernelIR& ir,
                                   const InstructionTemplate& tmpl,
                                   const VInstr& in, const std::string& kexpr,
                                   int parity) {
    std::string s = tmpl.mnemonic_template;
    auto replace = [&s](const std::string& ph, const std::string& val) {
        auto pos = s.find(ph);
        if (pos != std::string::npos) s.replace(pos, ph.size(), val);
    };
    if (in.writes_reg()) replace("{dst}", reg_name(ir, in.dst, parity));
    if (is_store(in.op) && !in.srcs.empty())
        replace("{src1}", reg_name(ir, in.srcs[0], parity));
    else if (in.srcs.size() >= 3) {
        replace("{src1}", reg_name(ir, in.srcs[1], parity));
        replace("{src2}", reg_name(ir, in.srcs[2], parity));
    }
    if (in.mem) replace("{addr}", "(&" + addr_expr(*in.mem, kexpr) + ")");
    return s;
}

// Templated expansion: one rendered mnemonic per instruction, wrapped in an
// asm statement so the block both documents and (on a matching target)
// assembles the exact instruction order.
inline void emit_templated_instr(Writer& w, const KernelIR& ir,
                                 const HardwareDescriptor& hw,
                                 const VInstr& in, const std::string& kexpr,
                                 int parity) {
    const InstructionTemplate* tmpl = hw.find_template(in.op);
    if (!tmpl)
        throw std::runtime_error(
            std::string("descriptor lacks a template for kind '") +
            to_string(in.op) + "'");
    w.line("__asm__ volatile(\"" +
           render_template(ir, *tmpl, in, kexpr, parity) +
           "\" : : : \"memory\");");
}

inline void emit_block(Writer& w, const KernelIR& ir,
                       const HardwareDescriptor& hw, const Block& blk,
                       KernelFlavor flavor, const std::string& kexpr,
                       int parity) {
    for (const auto& in : blk.instrs) {
        if (flavor == KernelFlavor::Scalar)
            emit_scalar_instr(w, ir, in, kexpr, parity);
        else
            emit_templated_instr(w, ir, hw, in, kexpr, parity);
    }
}

}  // namespace emit

// -------------------------------------------------------- kernel emission

// Renders the micro-kernel as a standalone C function. The function reads
// an A sliver through (ai_stride, ap_stride), a B sliver through
// (bp_stride, bj_stride) and accumulates into C; packed callers pass unit
// sliver strides, unpacked callers pass the leading dimensions.
inline SourceArtifact emit_kernel_source(const KernelIR& ir,
                                         const HardwareDescriptor& hw,
                                         DType dt,
                                         KernelFlavor flavor,
                                         const std::string& name = "main",
                                         std::int64_t prefetch_distance = 0) {
    using emit::Writer;
    auto diags = validate_kernel_ir(ir, hw);
    if (!diags.empty())
        throw std::invalid_argument("emit_kernel_source: invalid IR: " +
                                    diags.front());

    Writer w;
    const std::string elt = emit::c_type(dt);
    const std::string fname = "forge_kernel_" + name;
    w.line("/* micro-kernel " + std::to_string(ir.mr) + "x" +
           std::to_string(ir.nr) + ", " + to_string(flavor) + " flavor, " +
           (ir.pipeline_depth == 2 ? "pipelined" : "straight") + " */");
    w.line("static void " + fname + "(const " + elt +
           "* ap, int64_t ai_stride, int64_t ap_stride,");
    w.line("        const " + elt +
           "* bp, int64_t bp_stride, int64_t bj_stride,");
    w.line("        " + elt + "* c, int64_t ldc, int64_t kc) {");
    w.depth++;

    // register declarations (zero-initialized; accumulators rely on it);
    // the templated flavor works in hardware registers and needs none
    if (flavor == KernelFlavor::Scalar) {
        auto declare = [&](const std::vector<RegId>& regs) {
            for (RegId r : regs)
                for (std::int64_t l = 0; l < ir.lanes; ++l)
                    w.line(elt + " r" + std::to_string(r) + "_" +
                           std::to_string(l) + " = 0;");
        };
        declare(ir.register_map.acc);
        declare(ir.register_map.b_panel);
        declare(ir.register_map.a_pool);
        declare(ir.register_map.b_shadow);
        declare(ir.register_map.a_shadow);
    }

    auto prefetch = [&]() {
        if (prefetch_distance <= 0 || flavor != KernelFlavor::Scalar) return;
        std::string d = std::to_string(prefetch_distance);
        w.line("FORGE_PREFETCH(&bp[(p + " + d + ")*bp_stride]);");
        w.line("FORGE_PREFETCH(&ap[(p + " + d + ")*ap_stride]);");
    };

    const Block& load = ir.block(Stage::Load);
    const Block& compute = ir.block(Stage::Compute);
    const Block& store = ir.block(Stage::Store);

    if (flavor == KernelFlavor::Templated)
        w.line("/* forge:templated:begin - rendered hardware mnemonics */");

    if (ir.pipeline_depth == 2) {
        emit::emit_block(w, ir, hw, load, flavor, "0", 0);
        w.line("for (int64_t p = 0; p < kc; ++p) {");
        w.depth++;
        prefetch();
        w.line("if ((p & 1) == 0) {");
        w.depth++;
        emit::emit_block(w, ir, hw, compute, flavor, "p", 0);
        w.line("if (p + 1 < kc) {");
        w.depth++;
        emit::emit_block(w, ir, hw, load, flavor, "(p + 1)", 1);
        w.depth--;
        w.line("}");
        w.depth--;
        w.line("} else {");
        w.depth++;
        emit::emit_block(w, ir, hw, compute, flavor, "p", 1);
        w.line("if (p + 1 < kc) {");
        w.depth++;
        emit::emit_block(w, ir, hw, load, flavor, "(p + 1)", 0);
        w.depth--;
        w.line("}");
        w.depth--;
        w.line("}");
        w.depth--;
        w.line("}");
    } else {
        w.line("for (int64_t p = 0; p < kc; ++p) {");
        w.depth++;
        prefetch();
        emit::emit_block(w, ir, hw, load, flavor, "p", 0);
        emit::emit_block(w, ir, hw, compute, flavor, "p", 0);
        w.depth--;
        w.line("}");
    }
    emit::emit_block(w, ir, hw, store, flavor, "0", 0);
    if (flavor == KernelFlavor::Templated)
        w.line("/* forge:templated:end */");
    w.depth--;
    w.line("}");

    SourceArtifact art;
    art.entry_symbol = fname;
    art.files.emplace_back("kernel_" + name + ".c", w.str());
    return art;
}

// -------------------------------------------------------- sketch emission

namespace emit {

inline void emit_pack_a(Writer& w, const std::string& elt) {
    w.line("static void forge_pack_a(const " + elt + "* a, int64_t lda, " +
           elt + "* buf,");
    w.line("        int64_t m0, int64_t k0, int64_t mc, int64_t kc, int64_t "
           "mr) {");
    w.depth++;
    w.line("for (int64_t ir = 0; ir + mr <= mc; ir += mr)");
    w.depth++;
    w.line("for (int64_t p = 0; p < kc; ++p)");
    w.depth++;
    w.line("for (int64_t i = 0; i < mr; ++i)");
    w.depth++;
    w.line("buf[(ir/mr)*(mr*kc) + p*mr + i] = a[(m0+ir+i)*lda + (k0+p)];");
    w.depth -= 4;
    w.line("}");
}

inline void emit_pack_b(Writer& w, const std::string& elt) {
    w.line("static void forge_pack_b(const " + elt + "* b, int64_t ldb, " +
           elt + "* buf,");
    w.line("        int64_t k0, int64_t n0, int64_t kc, int64_t nc, int64_t "
           "nr) {");
    w.depth++;
    w.line("for (int64_t jr = 0; jr + nr <= nc; jr += nr)");
    w.depth++;
    w.line("for (int64_t p = 0; p < kc; ++p)");
    w.depth++;
    w.line("for (int64_t j = 0; j < nr; ++j)");
    w.depth++;
    w.line("buf[(jr/nr)*(nr*kc) + p*nr + j] = b[(k0+p)*ldb + (n0+jr+j)];");
    w.depth -= 4;
    w.line("}");
}

inline void emit_epilogue(Writer& w, const std::string& elt) {
    w.line("static void forge_epilogue(const " + elt + "* a, const " + elt +
           "* b, " + elt + "* c,");
    w.line("        int64_t lda, int64_t ldb, int64_t ldc,");
    w.line("        int64_t i0, int64_t j0, int64_t k0,");
    w.line("        int64_t tm, int64_t tn, int64_t kc) {");
    w.depth++;
    w.line("for (int64_t i = 0; i < tm; ++i)");
    w.depth++;
    w.line("for (int64_t j = 0; j < tn; ++j) {");
    w.depth++;
    w.line(elt + " acc = 0;");
    w.line("for (int64_t p = 0; p < kc; ++p)");
    w.depth++;
    w.line("acc += a[(i0+i)*lda + (k0+p)] * b[(k0+p)*ldb + (j0+j)];");
    w.depth--;
    w.line("c[(i0+i)*ldc + (j0+j)] += acc;");
    w.depth--;
    w.line("}");
    w.depth -= 2;
    w.line("}");
}

}  // namespace emit

// Emits the full operator translation unit: blocked loops in sketch order,
// optional packing, micro-kernel calls for full tiles and a scalar epilogue
// for fringes. The kernel function is rendered by emit_kernel_source and
// embedded in the same file.
inline SourceArtifact emit_sketch_source(const ScheduleSketch& sketch,
                                         const KernelIR& ir,
                                         const GemmSpec& spec,
                                         const HardwareDescriptor& hw,
                                         KernelFlavor flavor,
                                         const std::string& name = "main") {
    auto diags = check_sketch_legality(sketch, spec, hw);
    if (!diags.empty())
        throw std::invalid_argument("emit_sketch_source: illegal sketch: " +
                                    diags.front());

    using emit::Writer;
    const std::string elt = emit::c_type(spec.dtype);
    const std::string entry = "forge_gemm_" + name;

    Writer w;
    w.line("/* generated by tensorforge */");
    w.line("/* operator: gemm m=" + std::to_string(spec.m) +
           " n=" + std::to_string(spec.n) + " k=" + std::to_string(spec.k) +
           " dtype=" + to_string(spec.dtype) + " */");
    {
        json js = sketch;
        w.line("/* sketch: " + js.dump() + " */");
    }
    w.line("/* target: " + hw.name + ", " + to_string(flavor) +
           " kernel flavor */");
    w.line("#include <stdint.h>");
    w.line("#include <stdlib.h>");
    w.line("#if defined(__GNUC__)");
    w.line("#define FORGE_PREFETCH(p) __builtin_prefetch((p), 0, 3)");
    w.line("#else");
    w.line("#define FORGE_PREFETCH(p) ((void)0)");
    w.line("#endif");
    w.blank();

    SourceArtifact kernel = emit_kernel_source(ir, hw, spec.dtype, flavor,
                                               name, sketch.prefetch_distance);
    w.out << kernel.text();
    w.blank();

    if (sketch.pack_a) emit::emit_pack_a(w, elt);
    if (sketch.pack_b) emit::emit_pack_b(w, elt);
    emit::emit_epilogue(w, elt);
    w.blank();

    w.line("void " + entry + "(const " + elt + "* a, const " + elt + "* b, " +
           elt + "* c,");
    w.line("        int64_t m, int64_t n, int64_t k) {");
    w.depth++;
    w.line("const int64_t bm = " + std::to_string(sketch.bm) +
           ", bn = " + std::to_string(sketch.bn) +
           ", bk = " + std::to_string(sketch.bk) + ";");
    w.line("const int64_t mr = " + std::to_string(sketch.mr) +
           ", nr = " + std::to_string(sketch.nr) + ";");
    if (sketch.pack_a) {
        w.line("size_t a_bytes = ((size_t)bm * bk * sizeof(" + elt +
               ") + 63) / 64 * 64;");
        w.line(elt + "* apack = (" + elt + "*)aligned_alloc(64, a_bytes);");
    }
    if (sketch.pack_b) {
        w.line("size_t b_bytes = ((size_t)bk * bn * sizeof(" + elt +
               ") + 63) / 64 * 64;");
        w.line(elt + "* bpack = (" + elt + "*)aligned_alloc(64, b_bytes);");
    }

    // Blocked loops in sketch order; packing sits just inside the deeper of
    // the two loops it depends on.
    auto pos_of = [&](LoopAxis a) {
        for (int i = 0; i < 3; ++i)
            if (sketch.loop_order[i] == a) return i;
        return -1;
    };
    const int pack_b_pos = std::max(pos_of(LoopAxis::K), pos_of(LoopAxis::N));
    const int pack_a_pos = std::max(pos_of(LoopAxis::K), pos_of(LoopAxis::M));

    for (int level = 0; level < 3; ++level) {
        switch (sketch.loop_order[level]) {
            case LoopAxis::M:
                w.line("for (int64_t m0 = 0; m0 < m; m0 += bm) {");
                w.depth++;
                w.line("const int64_t mc = (m - m0 < bm) ? (m - m0) : bm;");
                break;
            case LoopAxis::N:
                w.line("for (int64_t n0 = 0; n0 < n; n0 += bn) {");
                w.depth++;
                w.line("const int64_t nc = (n - n0 < bn) ? (n - n0) : bn;");
                break;
            case LoopAxis::K:
                w.line("for (int64_t k0 = 0; k0 < k; k0 += bk) {");
                w.depth++;
                w.line("const int64_t kc = (k - k0 < bk) ? (k - k0) : bk;");
                break;
        }
        if (sketch.pack_b && level == pack_b_pos)
            w.line("forge_pack_b(b, n, bpack, k0, n0, kc, nc, nr);");
        if (sketch.pack_a && level == pack_a_pos)
            w.line("forge_pack_a(a, k, apack, m0, k0, mc, kc, mr);");
    }

    w.line("for (int64_t jr = 0; jr < nc; jr += nr) {");
    w.depth++;
    w.line("const int64_t tn = (nc - jr < nr) ? (nc - jr) : nr;");
    w.line("for (int64_t ir = 0; ir < mc; ir += mr) {");
    w.depth++;
    w.line("const int64_t tm = (mc - ir < mr) ? (mc - ir) : mr;");
    w.line("if (tm == mr && tn == nr) {");
    w.depth++;
    std::string a_args = sketch.pack_a
                             ? "apack + (ir/mr)*(mr*kc), 1, mr"
                             : "a + (m0+ir)*k + k0, k, 1";
    std::string b_args = sketch.pack_b
                             ? "bpack + (jr/nr)*(nr*kc), nr, 1"
                             : "b + k0*n + (n0+jr), n, 1";
    w.line("forge_kernel_" + name + "(" + a_args + ",");
    w.line("        " + b_args + ",");
    w.line("        c + (m0+ir)*n + (n0+jr), n, kc);");
    w.depth--;
    w.line("} else {");
    w.depth++;
    w.line("forge_epilogue(a, b, c, k, n, n, m0+ir, n0+jr, k0, tm, tn, kc);");
    w.depth--;
    w.line("}");
    w.depth--;
    w.line("}");
    w.depth--;
    w.line("}");

    for (int level = 2; level >= 0; --level) {
        w.depth--;
        w.line("}");
    }
    if (sketch.pack_a) w.line("free(apack);");
    if (sketch.pack_b) w.line("free(bpack);");
    w.depth--;
    w.line("}");

    SourceArtifact art;
    art.entry_symbol = entry;
    art.files.emplace_back("gemm_" + name + ".c", w.str());
    return art;
}

// Unoptimized reference operator with the same ABI, for baseline timing.
inline SourceArtifact emit_naive_source(const GemmSpec& spec,
                                        const std::string& name = "naive") {
    using emit::Writer;
    const std::string elt = emit::c_type(spec.dtype);
    const std::string entry = "forge_gemm_" + name;
    Writer w;
    w.line("/* generated by tensorforge: naive triple loop */");
    w.line("#include <stdint.h>");
    w.blank();
    w.line("void " + entry + "(const " + elt + "* a, const " + elt + "* b, " +
           elt + "* c,");
    w.line("        int64_t m, int64_t n, int64_t k) {");
    w.depth++;
    w.line("for (int64_t i = 0; i < m; ++i)");
    w.depth++;
    w.line("for (int64_t j = 0; j < n; ++j)");
    w.depth++;
    w.line("for (int64_t q = 0; q < k; ++q)");
    w.depth++;
    w.line("c[i*n + j] += a[i*k + q] * b[q*n + j];");
    w.depth -= 4;
    w.line("}");
    SourceArtifact art;
    art.entry_symbol = entry;
    art.files.emplace_back("gemm_" + name + ".c", w.str());
    return art;
}

}  // namespace forge
