#include <doctest.h>

#include "test_support.hpp"

using namespace forge;
using forge::testing::descriptor;

namespace {

bool have_toolchain() { return toolchain_template().has_value(); }

std::pair<ScheduleSketch, KernelIR> default_config(const GemmSpec& spec,
                                                   const HardwareDescriptor& hw) {
    ScheduleSketch s = default_sketch(spec, hw);
    return {s, build_kernel_ir(s, hw, spec.dtype, false)};
}

}  // namespace

TEST_CASE("scalar-flavor operator compiles, runs and matches the oracle") {
    if (!have_toolchain()) return;  // environment without a compiler
    HardwareDescriptor hw = descriptor("c910-like");
    GemmSpec spec{64, 64, 64, DType::F32};
    auto [s, ir] = default_config(spec, hw);
    SourceArtifact art =
        emit_sketch_source(s, ir, spec, hw, KernelFlavor::Scalar, "smoke");

    CompileResult cr = compile_artifact(art, *toolchain_template());
    REQUIRE_MESSAGE(cr.ok, cr.diagnostics);

    PerfMeasurement perf = run_benchmark(cr.op, spec, 5, 42);
    CHECK(perf.correctness_pass);
    CHECK(perf.gflops > 0.0);
    CHECK(perf.runs.size() == 5);
    CHECK(perf.source == PerfMeasurement::Source::RealRun);
}

TEST_CASE("emitted source is warning-clean in scalar mode") {
    if (!have_toolchain()) return;
    HardwareDescriptor hw = descriptor("k1-like");
    GemmSpec spec{33, 17, 29, DType::F64};  // fringe-heavy shape
    auto [s, ir] = default_config(spec, hw);
    s.prefetch_distance = 2;
    SourceArtifact art =
        emit_sketch_source(s, ir, spec, hw, KernelFlavor::Scalar, "warnfree");

    std::string strict = *toolchain_template();
    auto pos = strict.find(' ');
    strict.insert(pos, " -Wall -Wextra -Werror");
    CompileResult cr = compile_artifact(art, strict);
    CHECK_MESSAGE(cr.ok, cr.diagnostics);
}

TEST_CASE("injected syntax error returns diagnostics, no crash") {
    if (!have_toolchain()) return;
    HardwareDescriptor hw = descriptor("c910-like");
    GemmSpec spec{16, 16, 16, DType::F32};
    auto [s, ir] = default_config(spec, hw);
    SourceArtifact art =
        emit_sketch_source(s, ir, spec, hw, KernelFlavor::Scalar, "broken");
    art.files.front().second += "\nthis is not C\n";

    CompileResult cr = compile_artifact(art, *toolchain_template());
    CHECK(!cr.ok);
    CHECK(!cr.diagnostics.empty());
}

TEST_CASE("templated flavor with foreign mnemonics fails host compilation") {
    if (!have_toolchain()) return;
    HardwareDescriptor hw = descriptor("c910-like");  // RVV-style mnemonics
    GemmSpec spec{16, 16, 16, DType::F32};
    auto [s, ir] = default_config(spec, hw);
    SourceArtifact art = emit_sketch_source(s, ir, spec, hw,
                                            KernelFlavor::Templated, "rvv");
    CompileResult cr = compile_artifact(art, *toolchain_template());
    CHECK(!cr.ok);  // assembler rejects the rendered instructions
    CHECK(!cr.diagnostics.empty());
}

TEST_CASE("an operator that writes wrong values fails the correctness gate") {
    if (!have_toolchain()) return;
    GemmSpec spec{8, 8, 8, DType::F32};
    SourceArtifact bogus;
    bogus.entry_symbol = "forge_gemm_bogus";
    bogus.files.emplace_back("bogus.c", R"(
#include <stdint.h>
void forge_gemm_bogus(const float* a, const float* b, float* c,
                      int64_t m, int64_t n, int64_t k) {
    (void)a; (void)b; (void)k;
    for (int64_t i = 0; i < m * n; ++i) c[i] = 1.0f;
}
)");
    CompileResult cr = compile_artifact(bogus, *toolchain_template());
    REQUIRE_MESSAGE(cr.ok, cr.diagnostics);
    PerfMeasurement perf = run_benchmark(cr.op, spec);
    CHECK(!perf.correctness_pass);
    CHECK(perf.gflops == 0.0);
}

TEST_CASE("compiled operators match the oracle across shapes and flags") {
    if (!have_toolchain()) return;
    HardwareDescriptor hw = descriptor("c910-like");

    struct Case {
        GemmSpec spec;
        bool pack_a, pack_b, pipeline;
    };
    std::vector<Case> cases = {
        {{33, 17, 29, DType::F64}, true, true, false},   // fringe-heavy
        {{16, 16, 16, DType::F32}, false, false, false}, // unpacked
        {{40, 24, 16, DType::F32}, true, false, true},   // pipelined
        {{7, 5, 3, DType::F32}, false, true, false},     // sub-vector n
    };
    int idx = 0;
    for (const auto& c : cases) {
        CAPTURE(idx);
        ScheduleSketch s = default_sketch(c.spec, hw);
        s.pack_a = c.pack_a;
        s.pack_b = c.pack_b;
        if (c.pipeline) {
            s.mr = 5;
            s.nr = 16;
            s.bm = std::min<std::int64_t>(s.bm, 40);
            s.pipeline = true;
        }
        REQUIRE(check_sketch_legality(s, c.spec, hw).empty());
        KernelIR ir = build_kernel_ir(s, hw, c.spec.dtype);
        if (c.pipeline) REQUIRE(ir.pipeline_depth == 2);

        SourceArtifact art = emit_sketch_source(
            s, ir, c.spec, hw, KernelFlavor::Scalar,
            "case" + std::to_string(idx));
        CompileResult cr = compile_artifact(art, *toolchain_template());
        REQUIRE_MESSAGE(cr.ok, cr.diagnostics);
        PerfMeasurement perf = run_benchmark(cr.op, c.spec, 1, 17 + idx);
        CHECK_MESSAGE(perf.correctness_pass, perf.error);
        ++idx;
    }
}

TEST_CASE("real-run evaluator drives a short tuning loop") {
    if (!have_toolchain()) return;
    HardwareDescriptor hw = descriptor("generic-host");
    GemmSpec spec{48, 48, 48, DType::F32};
    RealRunEvaluator ev(*toolchain_template(), /*repeats=*/1);
    HeuristicAdvisor advisor;
    TuneResult r = tune(spec, hw, ev, advisor, 4, 21);
    CHECK(r.root->visits == 4);
    CHECK(r.history.best_gflops > 0.0);
    CHECK(r.best_measurement.source == PerfMeasurement::Source::RealRun);
    CHECK(r.best_measurement.correctness_pass);
}

TEST_CASE("legal reorders execute byte-identically") {
    if (!have_toolchain()) return;
    HardwareDescriptor hw = descriptor("c910-like");
    GemmSpec spec{32, 24, 16, DType::F32};
    ScheduleSketch s = default_sketch(spec, hw);
    s.mr = 6;
    s.nr = 16;
    s.bm = 30;
    REQUIRE(check_sketch_legality(s, spec, hw).empty());
    KernelIR base = build_kernel_ir(s, hw, spec.dtype);

    KernelIR swapped = base;
    bool did_swap = false;
    for (auto& blk : swapped.stage_blocks) {
        auto swaps = legal_swaps(blk);
        if (!swaps.empty()) {
            apply_swap(blk, swaps.front().first);
            did_swap = true;
            break;
        }
    }
    REQUIRE(did_swap);

    auto run = [&](const KernelIR& ir) {
        SourceArtifact art = emit_sketch_source(s, ir, spec, hw,
                                                KernelFlavor::Scalar, "reord");
        CompileResult cr = compile_artifact(art, *toolchain_template());
        REQUIRE_MESSAGE(cr.ok, cr.diagnostics);
        Tensor<float> a = random_tensor<float>({spec.m, spec.k}, 5);
        Tensor<float> b = random_tensor<float>({spec.k, spec.n}, 6);
        Tensor<float> c = Tensor<float>::zeros({spec.m, spec.n});
        cr.op.fn()(a.data.data(), b.data.data(), c.data.data(), spec.m,
                   spec.n, spec.k);
        return c;
    };
    CHECK(run(base).data == run(swapped).data);
}

// ------------------------------------------------------------ repair ladder

TEST_CASE("refine ladder: register overflow shrinks the tile") {
    HardwareDescriptor hw = descriptor("c910-like");
    GemmSpec spec{64, 64, 64, DType::F32};
    RefineConfig cfg;
    cfg.sketch = default_sketch(spec, hw);
    cfg.flavor = KernelFlavor::Scalar;
    REQUIRE(!cfg.sketch.pipeline);

    RefineState st;
    auto out = refine_on_failure(st, cfg, "register overflow: ...", spec, hw);
    REQUIRE(out.has_value());
    CHECK(out->sketch.mr * out->sketch.nr < cfg.sketch.mr * cfg.sketch.nr);
    CHECK(check_sketch_legality(out->sketch, spec, hw).empty());
}

TEST_CASE("refine ladder: overflow with pipeline on disables it first") {
    HardwareDescriptor hw = descriptor("c910-like");
    GemmSpec spec{64, 64, 64, DType::F32};
    RefineConfig cfg;
    cfg.sketch = default_sketch(spec, hw);
    cfg.sketch.mr = 5;
    cfg.sketch.nr = 16;
    cfg.sketch.pipeline = true;
    REQUIRE(check_sketch_legality(cfg.sketch, spec, hw).empty());

    RefineState st;
    auto out = refine_on_failure(st, cfg, "register overflow", spec, hw);
    REQUIRE(out.has_value());
    CHECK(!out->sketch.pipeline);
    CHECK(out->sketch.mr == cfg.sketch.mr);  // tile untouched at step 1
}

TEST_CASE("refine ladder: templated compile error falls back to scalar") {
    HardwareDescriptor hw = descriptor("c910-like");
    GemmSpec spec{64, 64, 64, DType::F32};
    RefineConfig cfg;
    cfg.sketch = default_sketch(spec, hw);
    cfg.flavor = KernelFlavor::Templated;

    RefineState st;
    auto out = refine_on_failure(
        st, cfg, "error: unknown instruction `vfmacc.vv`", spec, hw);
    REQUIRE(out.has_value());
    CHECK(out->flavor == KernelFlavor::Scalar);
}

TEST_CASE("refine ladder terminates within the attempt bound") {
    HardwareDescriptor hw = descriptor("c910-like");
    GemmSpec spec{64, 64, 64, DType::F32};

    struct StubbornAdvisor : RepairAdvisor {
        std::optional<RefineConfig> propose_repair(const RefineConfig& cfg,
                                                   const std::string&) override {
            RefineConfig next = cfg;
            next.sketch.prefetch_distance += 1;  // legal, always different
            return next;
        }
    } advisor;

    RefineConfig cfg;
    cfg.sketch = default_sketch(spec, hw);
    cfg.sketch.pipeline =
        register_budget_ok(hw, spec.dtype, cfg.sketch.mr, cfg.sketch.nr, true);
    cfg.flavor = KernelFlavor::Templated;

    RefineState st;
    int proposals = 0;
    for (int call = 0; call < 10; ++call) {
        auto out = refine_on_failure(st, cfg, "some failure", spec, hw, &advisor);
        if (!out) break;
        ++proposals;
    }
    CHECK(proposals <= 6);          // <= 4 ladder steps + 2 advisor tries
    CHECK(st.advisor_attempts <= 2);
    // a fresh call after exhaustion keeps giving up
    CHECK(!refine_on_failure(st, cfg, "some failure", spec, hw, &advisor)
               .has_value());
}

TEST_CASE("FORGE_CC_TEMPLATE overrides the probed toolchain") {
    ::setenv("FORGE_CC_TEMPLATE", "mycc -Os -o {out} {src}", 1);
    auto t = toolchain_template();
    ::unsetenv("FORGE_CC_TEMPLATE");
    REQUIRE(t.has_value());
    CHECK(*t == "mycc -Os -o {out} {src}");
}

TEST_CASE("measurement json carries provenance") {
    PerfMeasurement p;
    p.gflops = 3.5;
    p.runs = {0.1, 0.2};
    p.source = PerfMeasurement::Source::RealRun;
    p.correctness_pass = true;
    json j = p;
    CHECK(j.at("source") == "real_run");
    CHECK(j.at("correctness_pass") == true);
}
