// One-line-prompt driver.
//
// Wires the full flow: parse the prompt, load the descriptor, build the
// default configuration, gate it through the interpreter diff test, tune,
// and emit sources plus the tuning log. Each stage's errors surface with a
// stage label and a distinct exit code so scripts can tell a usage mistake
// from a correctness failure from a missing toolchain.

#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>

#include "forge/tuner.hpp"

namespace forge {

// ------------------------------------------------------------ prompt parse

struct PromptRequest {
    enum class Op { Gemm, Conv } op = Op::Gemm;
    std::string hardware_name;
    std::optional<std::array<std::int64_t, 3>> gemm_dims;  // m, k, n
    std::optional<std::pair<std::int64_t, std::int64_t>> conv_filter;
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
        return static_cast<char>(std::tolower(c));
    });
    return s;
}

}  // namespace detail

// Case-insensitive keyword parse: {gemm, matmul, matrix multiplication}
// vs {conv, convolution}; hardware resolves by longest descriptor-name
// substring; dims accept "512x512x512" (m x k x n), "m=..,n=..,k=.." and,
// for conv, a bare "3x3" filter shape.
inline PromptRequest parse_prompt(const std::string& text,
                                  const std::vector<std::string>& hw_names) {
    std::string t = detail::lower(text);
    PromptRequest req;

    auto find_any = [&](std::initializer_list<const char*> kws) {
        std::size_t best = std::string::npos;
        for (const char* kw : kws) {
            auto pos = t.find(kw);
            if (pos != std::string::npos) best = std::min(best, pos);
        }
        return best;
    };
    std::size_t gemm_pos = find_any({"gemm", "matmul", "matrix multiplication"});
    std::size_t conv_pos = find_any({"conv"});
    if (gemm_pos == std::string::npos && conv_pos == std::string::npos)
        throw UsageError(
            "no operator keyword found (expected gemm/matmul/matrix "
            "multiplication or conv)");
    req.op = (conv_pos < gemm_pos) ? PromptRequest::Op::Conv
                                   : PromptRequest::Op::Gemm;

    std::string best_name;
    bool ambiguous = false;
    for (const auto& name : hw_names) {
        if (t.find(detail::lower(name)) == std::string::npos) continue;
        if (name.size() > best_name.size()) {
            best_name = name;
            ambiguous = false;
        } else if (name.size() == best_name.size() && name != best_name) {
            ambiguous = true;
        }
    }
    if (best_name.empty()) {
        std::string avail;
        for (const auto& n : hw_names) avail += (avail.empty() ? "" : ", ") + n;
        throw UsageError("no hardware descriptor matches the prompt; available: " +
                         avail);
    }
    if (ambiguous)
        throw UsageError("ambiguous hardware match in prompt");
    req.hardware_name = best_name;

    std::smatch m;
    if (std::regex_search(t, m, std::regex(R"((\d+)\s*x\s*(\d+)\s*x\s*(\d+))"))) {
        req.gemm_dims = {std::stoll(m[1]), std::stoll(m[2]), std::stoll(m[3])};
    } else if (std::regex_search(t, m, std::regex(R"(m\s*=\s*(\d+))"))) {
        std::array<std::int64_t, 3> dims{std::stoll(m[1]), 0, 0};
        std::smatch mk, mn;
        if (std::regex_search(t, mk, std::regex(R"(k\s*=\s*(\d+))")) &&
            std::regex_search(t, mn, std::regex(R"(n\s*=\s*(\d+))"))) {
            dims[1] = std::stoll(mk[1]);
            dims[2] = std::stoll(mn[1]);
            req.gemm_dims = dims;
        }
    } else if (req.op == PromptRequest::Op::Conv &&
               std::regex_search(t, m, std::regex(R"((\d+)\s*x\s*(\d+))"))) {
        req.conv_filter = {std::stoll(m[1]), std::stoll(m[2])};
    }
    return req;
}

// -------------------------------------------------------- descriptor store

inline std::vector<std::string> list_descriptor_names(
    const std::filesystem::path& dir) {
    std::vector<std::string> names;
    if (!std::filesystem::is_directory(dir)) return names;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".toml")
            names.push_back(e.path().stem().string());
    std::sort(names.begin(), names.end());
    return names;
}

inline HardwareDescriptor load_descriptor(const std::filesystem::path& dir,
                                          const std::string& name) {
    auto path = dir / (name + ".toml");
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("descriptor not found: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    HardwareDescriptor d = parse_descriptor(ss.str());
    // one file per name keeps names unique within a directory
    if (d.name != name)
        throw std::runtime_error("descriptor name '" + d.name +
                                 "' does not match its file stem '" + name +
                                 "'");
    return d;
}

// --------------------------------------------------------------- log files

// JSON-lines tuning log plus a companion (iter, best_so_far) curve file for
// plotting; overwrites are idempotent — bytes depend only on the records.
inline void write_tuning_log(const std::vector<LogRecord>& log,
                             const std::filesystem::path& path) {
    if (log.empty())
        throw std::invalid_argument("write_tuning_log: empty history");
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f)
            throw std::runtime_error("cannot write log: " + path.string());
        for (const auto& rec : log) {
            json j = rec;
            f << j.dump() << "\n";
        }
    }
    std::filesystem::path curve = path.parent_path() /
                                  (path.stem().string() + "_curve.tsv");
    std::ofstream c(curve, std::ios::binary | std::ios::trunc);
    c << "iter\tbest_so_far\n";
    for (const auto& rec : log) {
        json b = rec.best_so_far;  // uniform float formatting
        c << rec.iter << "\t" << b.dump() << "\n";
    }
}

// ----------------------------------------------------------------- pipeline

struct PipelineOptions {
    std::filesystem::path descriptor_dir = "descriptors";
    std::filesystem::path out_dir = "forge-out";
    int budget = 50;
    std::uint64_t seed = 0;
    std::string evaluator = "cost";    // cost | real
    std::string advisor = "heuristic"; // heuristic | random | llm
    int repeats = 5;
    std::array<std::int64_t, 3> default_gemm_dims = {512, 512, 512};
    DType dtype = DType::F32;
    std::ostream* out = &std::cout;
    Advisor* advisor_override = nullptr;  // e.g. an LlmAdvisor from the CLI
};

struct PipelineResult {
    int exit_code = 0;  // 0 ok, 2 usage, 3 correctness, 4 toolchain/env
    std::string stage;  // stage that failed, when exit_code != 0
    std::string message;
    GemmSpec spec;
    double initial_gflops = 0;
    double final_gflops = 0;
    int iterations = 0;
    double wall_seconds = 0;
    std::vector<std::filesystem::path> outputs;
};

namespace detail {

inline std::string sanitize_symbol(const std::string& s) {
    std::string out;
    for (char c : s)
        out += (std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return out;
}

}  // namespace detail

// Builds a GEMM spec (directly or through im2col) from a prompt request.
inline GemmSpec resolve_spec(const PromptRequest& req,
                             const PipelineOptions& opt,
                             std::optional<Im2colPlan>& plan_out) {
    if (req.op == PromptRequest::Op::Gemm) {
        auto d = req.gemm_dims.value_or(opt.default_gemm_dims);
        return GemmSpec{d[0], d[1], d[2], opt.dtype};
    }
    // ResNet-style default: 56x56 features, 64 channels, 3x3, stride 1, pad 1
    ConvSpec conv;
    conv.h = conv.w = 56;
    conv.c_in = conv.c_out = 64;
    conv.kh = req.conv_filter ? req.conv_filter->first : 3;
    conv.kw = req.conv_filter ? req.conv_filter->second : 3;
    conv.stride = 1;
    conv.pad = 1;
    conv.dtype = opt.dtype;
    plan_out = conv_to_gemm(conv);
    return plan_out->gemm;
}

inline PipelineResult run_pipeline(const PromptRequest& req,
                                   const PipelineOptions& opt) {
    PipelineResult res;
    auto t_start = std::chrono::steady_clock::now();
    auto fail = [&](int code, const std::string& stage, const std::string& msg) {
        res.exit_code = code;
        res.stage = stage;
        res.message = msg;
        (*opt.out) << "[" << stage << "] error: " << msg << "\n";
        return res;
    };

    // stage 1: descriptor + hints
    HardwareDescriptor hw;
    try {
        hw = load_descriptor(opt.descriptor_dir, req.hardware_name);
    } catch (const std::exception& e) {
        return fail(4, "descriptor", e.what());
    }
    if (hw.family != HwFamily::Cpu)
        return fail(2, "descriptor",
                    "descriptor '" + hw.name +
                        "' is a gpu target: parse/describe only, no lowering");
    (*opt.out) << "[descriptor] " << hw.name << ": "
               << hw.cache_level_count() << " cache levels, "
               << hw.registers.vector_count << "x"
               << hw.registers.vector_width_bits << "b vector registers\n";

    std::optional<Im2colPlan> plan;
    try {
        res.spec = resolve_spec(req, opt, plan);
    } catch (const std::exception& e) {
        return fail(2, "spec", e.what());
    }
    (*opt.out) << "[spec] gemm m=" << res.spec.m << " k=" << res.spec.k
               << " n=" << res.spec.n << " dtype=" << to_string(res.spec.dtype)
               << (plan ? " (lowered from conv via im2col)" : "") << "\n";

    // stage 2: default configuration + correctness gate
    TuningConfig init;
    try {
        init.sketch = default_sketch(res.spec, hw);
        init.kernel = build_kernel_ir(init.sketch, hw, res.spec.dtype,
                                      /*strict=*/false);
    } catch (const std::exception& e) {
        return fail(3, "generate", e.what());
    }
    DiffReport gate = diff_test(res.spec, init.sketch, init.kernel, hw,
                                /*seed=*/opt.seed);
    if (!gate.pass)
        return fail(3, "generate",
                    "initial configuration failed diff_test: max_rel_err=" +
                        std::to_string(gate.max_rel_err) + " " + gate.error);
    (*opt.out) << "[generate] default sketch bm=" << init.sketch.bm
               << " bn=" << init.sketch.bn << " bk=" << init.sketch.bk
               << " mr=" << init.sketch.mr << " nr=" << init.sketch.nr
               << ", diff_test max_rel_err=" << gate.max_rel_err << "\n";

    // stage 3: tune
    std::unique_ptr<Evaluator> evaluator;
    if (opt.evaluator == "cost") {
        evaluator = std::make_unique<CostModelEvaluator>();
    } else if (opt.evaluator == "real") {
        auto tc = toolchain_template();
        if (!tc)
            return fail(4, "tune",
                        "no host toolchain found (set FORGE_CC_TEMPLATE)");
        evaluator = std::make_unique<RealRunEvaluator>(*tc, opt.repeats);
    } else {
        return fail(2, "tune", "unknown evaluator: " + opt.evaluator);
    }

    std::unique_ptr<Advisor> owned_advisor;
    Advisor* advisor = opt.advisor_override;
    if (!advisor) {
        if (opt.advisor == "heuristic")
            owned_advisor = std::make_unique<HeuristicAdvisor>();
        else if (opt.advisor == "random")
            owned_advisor = std::make_unique<RandomAdvisor>();
        else
            return fail(2, "tune",
                        "unknown advisor: " + opt.advisor +
                            " (llm needs an advisor_override, see the CLI)");
        advisor = owned_advisor.get();
    }

    TuneResult tuned;
    try {
        tuned = tune(res.spec, hw, *evaluator, *advisor, opt.budget, opt.seed);
    } catch (const std::exception& e) {
        return fail(3, "tune", e.what());
    }
    res.iterations = int(tuned.log.size());
    res.initial_gflops = tuned.log.front().gflops;
    res.final_gflops = tuned.history.best_gflops;

    // final correctness gate on the tuned config
    DiffReport final_gate =
        diff_test(res.spec, tuned.best_config.sketch, tuned.best_config.kernel,
                  hw, opt.seed + 1);
    if (!final_gate.pass)
        return fail(3, "tune",
                    "tuned configuration failed diff_test: max_rel_err=" +
                        std::to_string(final_gate.max_rel_err) + " " +
                        final_gate.error);

    // stage 4: emit
    try {
        std::filesystem::create_directories(opt.out_dir);
        std::string name = detail::sanitize_symbol(hw.name);
        auto write = [&](const std::filesystem::path& p, const std::string& text) {
            std::ofstream f(p, std::ios::binary | std::ios::trunc);
            f << text;
            res.outputs.push_back(p);
        };

        SourceArtifact scalar = emit_sketch_source(
            tuned.best_config.sketch, tuned.best_config.kernel, res.spec, hw,
            KernelFlavor::Scalar, name);
        write(opt.out_dir / scalar.files.front().first, scalar.text());

        try {
            SourceArtifact templ = emit_sketch_source(
                tuned.best_config.sketch, tuned.best_config.kernel, res.spec,
                hw, KernelFlavor::Templated, name + "_templated");
            write(opt.out_dir / templ.files.front().first, templ.text());
        } catch (const std::exception& e) {
            (*opt.out) << "[emit] templated flavor skipped: " << e.what()
                       << "\n";
        }

        json best;
        best["sketch"] = tuned.best_config.sketch;
        best["kernel"] = tuned.best_config.kernel;
        write(opt.out_dir / "best_config.json", best.dump(2) + "\n");

        if (plan) {
            json pj = *plan;
            write(opt.out_dir / "im2col_plan.json", pj.dump(2) + "\n");
        }

        write_tuning_log(tuned.log, opt.out_dir / "tuning_log.jsonl");
        res.outputs.push_back(opt.out_dir / "tuning_log.jsonl");
        res.outputs.push_back(opt.out_dir / "tuning_log_curve.tsv");
    } catch (const std::exception& e) {
        return fail(4, "emit", e.what());
    }

    res.wall_seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t_start)
                           .count();
    (*opt.out) << "[done] " << res.iterations << " iterations, "
               << (opt.evaluator == "cost" ? "estimated " : "measured ")
               << "GFLOPS " << res.initial_gflops << " -> "
               << res.final_gflops << ", wall " << res.wall_seconds << " s\n";
    return res;
}

}  // namespace forge
