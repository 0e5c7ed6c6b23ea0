// Compile-and-run evaluator.
//
// Writes an emitted operator to disk, compiles it with the host toolchain
// (user-overridable through FORGE_CC_TEMPLATE, placeholders {src} {out}),
// loads the shared object, checks correctness against the naive oracle and
// only then times it. Failures come back as data — compiler diagnostics or
// a failed measurement — so the tuner's repair loop can act on them.

#pragma once

#include <dlfcn.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>

#include "forge/oracle.hpp"

namespace forge {

// ------------------------------------------------------------ measurement

struct PerfMeasurement {
    double gflops = 0.0;
    std::vector<double> runs;  // seconds, timed runs only
    enum class Source { CostModel, RealRun } source = Source::CostModel;
    bool correctness_pass = false;
    std::string error;
};

inline void to_json(json& j, const PerfMeasurement& p) {
    j = json{{"gflops", p.gflops},
             {"runs", p.runs},
             {"source", p.source == PerfMeasurement::Source::CostModel
                            ? "cost_model"
                            : "real_run"},
             {"correctness_pass", p.correctness_pass}};
    if (!p.error.empty()) j["error"] = p.error;
}

// -------------------------------------------------------------- toolchain

// Command template with {src} and {out} placeholders. Resolution order:
// FORGE_CC_TEMPLATE, then the first of cc/gcc/clang found on PATH.
inline std::optional<std::string> toolchain_template() {
    if (const char* env = std::getenv("FORGE_CC_TEMPLATE"); env && *env)
        return std::string(env);
    for (const char* cand : {"cc", "gcc", "clang"}) {
        std::string probe =
            std::string("command -v ") + cand + " >/dev/null 2>&1";
        if (std::system(probe.c_str()) == 0)
            return std::string(cand) + " -O2 -fPIC -shared -o {out} {src}";
    }
    return std::nullopt;
}

namespace detail {

inline std::string substitute(std::string tmpl, const std::string& ph,
                              const std::string& val) {
    for (auto pos = tmpl.find(ph); pos != std::string::npos;
         pos = tmpl.find(ph))
        tmpl.replace(pos, ph.size(), val);
    return tmpl;
}

inline int run_command(const std::string& cmd, std::string& output) {
    std::string full = cmd + " 2>&1";
    FILE* pipe = ::popen(full.c_str(), "r");
    if (!pipe) return -1;
    std::array<char, 4096> buf;
    while (std::size_t got = std::fread(buf.data(), 1, buf.size(), pipe))
        output.append(buf.data(), got);
    return ::pclose(pipe);
}

inline std::filesystem::path fresh_workdir() {
    static std::atomic<int> counter{0};
    auto dir = std::filesystem::temp_directory_path() /
               ("forge-bench-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter++));
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace detail

// --------------------------------------------------------------- compile

using GemmFn = void (*)(const void* a, const void* b, void* c, std::int64_t m,
                        std::int64_t n, std::int64_t k);

// RAII over the loaded shared object.
class CompiledOp {
  public:
    CompiledOp() = default;
    CompiledOp(void* handle, GemmFn fn) : handle_(handle), fn_(fn) {}
    CompiledOp(CompiledOp&& o) noexcept : handle_(o.handle_), fn_(o.fn_) {
        o.handle_ = nullptr;
        o.fn_ = nullptr;
    }
    CompiledOp& operator=(CompiledOp&& o) noexcept {
        if (this != &o) {
            reset();
            std::swap(handle_, o.handle_);
            std::swap(fn_, o.fn_);
        }
        return *this;
    }
    CompiledOp(const CompiledOp&) = delete;
    CompiledOp& operator=(const CompiledOp&) = delete;
    ~CompiledOp() { reset(); }

    explicit operator bool() const { return fn_ != nullptr; }
    GemmFn fn() const { return fn_; }

  private:
    void reset() {
        if (handle_) ::dlclose(handle_);
        handle_ = nullptr;
        fn_ = nullptr;
    }
    void* handle_ = nullptr;
    GemmFn fn_ = nullptr;
};

struct CompileResult {
    bool ok = false;
    CompiledOp op;
    std::string diagnostics;  // compiler output, verbatim
    std::filesystem::path src_path;
    std::filesystem::path lib_path;
};

// Writes the artifact's files under `workdir` (a fresh temp dir when
// empty), compiles the first file with the toolchain template, and loads
// the entry symbol.
inline CompileResult compile_artifact(
    const SourceArtifact& art, const std::string& toolchain,
    const std::filesystem::path& workdir = {}) {
    CompileResult res;
    auto dir = workdir.empty() ? detail::fresh_workdir() : workdir;
    std::filesystem::create_directories(dir);

    for (const auto& [name, text] : art.files) {
        std::ofstream f(dir / name, std::ios::binary);
        f << text;
    }
    res.src_path = dir / art.files.front().first;
    res.lib_path = dir / (art.entry_symbol + ".so");

    std::string cmd = detail::substitute(toolchain, "{src}", res.src_path.string());
    cmd = detail::substitute(cmd, "{out}", res.lib_path.string());
    std::string output;
    int rc = detail::run_command(cmd, output);
    if (rc != 0) {
        res.diagnostics = output.empty()
                              ? "toolchain exited with status " + std::to_string(rc)
                              : output;
        return res;
    }
    res.diagnostics = output;  // warnings, if any

    void* handle = ::dlopen(res.lib_path.c_str(), RTLD_NOW | RTLD_LOCAL);
    if (!handle) {
        res.diagnostics += std::string("\ndlopen: ") + ::dlerror();
        return res;
    }
    void* sym = ::dlsym(handle, art.entry_symbol.c_str());
    if (!sym) {
        res.diagnostics +=
            "\ndlsym: entry symbol not found: " + art.entry_symbol;
        ::dlclose(handle);
        return res;
    }
    res.op = CompiledOp(handle, reinterpret_cast<GemmFn>(sym));
    res.ok = true;
    return res;
}

// ------------------------------------------------------------- benchmark

namespace detail {

// Timing runs never overlap other measurements.
inline std::mutex& measurement_lock() {
    static std::mutex m;
    return m;
}

template <class T>
PerfMeasurement run_benchmark_impl(const CompiledOp& op, const GemmSpec& spec,
                                   int repeats, std::uint64_t seed) {
    PerfMeasurement perf;
    perf.source = PerfMeasurement::Source::RealRun;

    Tensor<T> a = random_tensor<T>({spec.m, spec.k}, seed);
    Tensor<T> b = random_tensor<T>({spec.k, spec.n}, seed ^ 0x9e3779b97f4a7c15ull);
    Tensor<T> ref = naive_gemm(a, b);
    Tensor<T> c = Tensor<T>::zeros({spec.m, spec.n});

    op.fn()(a.data.data(), b.data.data(), c.data.data(), spec.m, spec.n,
            spec.k);
    double max_rel = 0.0;
    for (std::size_t i = 0; i < ref.data.size(); ++i) {
        double r = double(ref.data[i]), g = double(c.data[i]);
        max_rel = std::max(max_rel,
                           std::abs(g - r) / std::max(std::abs(r), 1.0));
    }
    if (max_rel > dtype_tolerance(spec.dtype)) {
        perf.correctness_pass = false;
        perf.gflops = 0.0;
        perf.error = "correctness check failed, max_rel_err=" +
                     std::to_string(max_rel);
        return perf;
    }
    perf.correctness_pass = true;

    std::lock_guard<std::mutex> guard(measurement_lock());
    using clock = std::chrono::steady_clock;
    for (int r = -1; r < repeats; ++r) {  // r == -1 is the warmup
        std::fill(c.data.begin(), c.data.end(), T(0));
        auto t0 = clock::now();
        op.fn()(a.data.data(), b.data.data(), c.data.data(), spec.m, spec.n,
                spec.k);
        auto t1 = clock::now();
        if (r >= 0)
            perf.runs.push_back(
                std::chrono::duration<double>(t1 - t0).count());
    }
    std::vector<double> sorted = perf.runs;
    std::sort(sorted.begin(), sorted.end());
    double median = sorted[sorted.size() / 2];
    perf.gflops = 2.0 * double(spec.m) * spec.n * spec.k / median / 1e9;
    return perf;
}

}  // namespace detail

// Correctness first, then 1 warmup + `repeats` timed runs; the median run
// yields GFLOPS. A wrong operator reports correctness_pass=false and zero
// GFLOPS but never throws — the tuner treats it as a dead node.
inline PerfMeasurement run_benchmark(const CompiledOp& op, const GemmSpec& spec,
                                     int repeats = 5, std::uint64_t seed = 0) {
    try {
        if (spec.dtype == DType::F64)
            return detail::run_benchmark_impl<double>(op, spec, repeats, seed);
        return detail::run_benchmark_impl<float>(op, spec, repeats, seed);
    } catch (const std::exception& e) {
        PerfMeasurement perf;
        perf.source = PerfMeasurement::Source::RealRun;
        perf.error = e.what();
        return perf;
    }
}

// ------------------------------------------------------------ repair loop

struct RefineConfig {
    ScheduleSketch sketch;
    KernelFlavor flavor = KernelFlavor::Scalar;
};

// Optional advisor consulted before the deterministic ladder (at most two
// proposals per failure episode).
struct RepairAdvisor {
    virtual ~RepairAdvisor() = default;
    virtual std::optional<RefineConfig> propose_repair(
        const RefineConfig& cfg, const std::string& diagnostics) = 0;
};

struct RefineState {
    bool tried_step[3] = {false, false, false};  // pipeline / shrink / scalar
    int advisor_attempts = 0;
    int attempts = 0;
};

namespace detail {

// Next feasible register tile strictly below the current mr*nr product,
// respecting lane multiples and the current block tiles.
inline std::optional<std::pair<std::int64_t, std::int64_t>> next_smaller_tile(
    const ScheduleSketch& s, const GemmSpec& spec,
    const HardwareDescriptor& hw) {
    std::int64_t lanes = lanes_for(hw, spec.dtype);
    std::int64_t step = lanes > 1 ? lanes : 1;
    std::int64_t cur = s.mr * s.nr;
    std::int64_t best_mr = 0, best_nr = 0;
    for (std::int64_t mr = 1; mr <= std::min<std::int64_t>(64, s.bm); ++mr)
        for (std::int64_t nr = step; nr <= std::min<std::int64_t>(64, s.bn);
             nr += step) {
            if (!register_budget_ok(hw, spec.dtype, mr, nr)) continue;
            std::int64_t p = mr * nr;
            if (p >= cur) continue;
            std::int64_t best = best_mr * best_nr;
            if (p > best || (p == best && mr > best_mr)) {
                best_mr = mr;
                best_nr = nr;
            }
        }
    if (best_mr == 0) return std::nullopt;
    return std::make_pair(best_mr, best_nr);
}

}  // namespace detail

// Deterministic repair ladder: (1) disable pipeline, (2) shrink the
// register tile to the next feasible pair, (3) fall back to the scalar
// flavor, (4) give up (nullopt). Diagnostics steer the entry point —
// register overflow goes to (1)/(2), a templated compile error straight to
// (3). Total attempts are bounded by 4 ladder steps plus at most 2 advisor
// proposals.
inline std::optional<RefineConfig> refine_on_failure(
    RefineState& state, const RefineConfig& cfg, const std::string& diagnostics,
    const GemmSpec& spec, const HardwareDescriptor& hw,
    RepairAdvisor* advisor = nullptr) {
    ++state.attempts;

    if (advisor && state.advisor_attempts < 2) {
        ++state.advisor_attempts;
        if (auto proposal = advisor->propose_repair(cfg, diagnostics)) {
            bool legal =
                check_sketch_legality(proposal->sketch, spec, hw).empty();
            bool differs = !(proposal->sketch == cfg.sketch &&
                             proposal->flavor == cfg.flavor);
            if (legal && differs) return proposal;
        }
    }

    bool overflow = diagnostics.find("register overflow") != std::string::npos;
    bool templated_compile_error = cfg.flavor == KernelFlavor::Templated &&
                                   !overflow;

    auto try_step = [&](int step) -> std::optional<RefineConfig> {
        if (state.tried_step[step]) return std::nullopt;
        state.tried_step[step] = true;
        RefineConfig next = cfg;
        switch (step) {
            case 0:
                if (!cfg.sketch.pipeline) return std::nullopt;
                next.sketch.pipeline = false;
                return next;
            case 1: {
                auto tile = detail::next_smaller_tile(cfg.sketch, spec, hw);
                if (!tile) return std::nullopt;
                next.sketch.mr = tile->first;
                next.sketch.nr = tile->second;
                if (!check_sketch_legality(next.sketch, spec, hw).empty())
                    return std::nullopt;
                return next;
            }
            case 2:
                if (cfg.flavor != KernelFlavor::Templated) return std::nullopt;
                next.flavor = KernelFlavor::Scalar;
                return next;
        }
        return std::nullopt;
    };

    std::vector<int> order;
    if (templated_compile_error)
        order = {2, 0, 1};
    else if (overflow)
        order = cfg.sketch.pipeline ? std::vector<int>{0, 1, 2}
                                    : std::vector<int>{1, 0, 2};
    else
        order = {0, 1, 2};

    for (int step : order)
        if (auto next = try_step(step)) return next;
    return std::nullopt;  // give up
}

}  // namespace forge
