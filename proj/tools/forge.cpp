// tensorforge command line.
//
//   forge prompt "generate a high-performance GEMM operator on c910-like"
//   forge generate --hw c910-like --dims 512x512x512 --out out/
//   forge tune --hw c910-like --dims 512x512x512 --budget 200 --seed 7
//   forge bench --hw generic-host --dims 256x256x256
//   forge emit --hw a76-like --dims 64x64x64 --out out/
//   forge describe-hw --hw c910-like
//
// Exit codes: 0 success, 2 usage/parse error, 3 correctness failure,
// 4 toolchain/environment failure.

#include <CLI11.hpp>

#include "forge/forge.hpp"
#include "forge/llm_advisor.hpp"

namespace {

struct CommonFlags {
    std::string hw = "generic-host";
    std::string dims;
    std::string op = "gemm";
    int budget = 50;
    std::uint64_t seed = 0;
    std::string evaluator = "cost";
    std::string advisor = "heuristic";
    std::string out_dir = "forge-out";
    std::string descriptor_dir = "descriptors";
    std::string log_path;
    std::string dtype = "f32";
    int repeats = 5;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--hw", f.hw, "hardware descriptor name");
    cmd->add_option("--dims", f.dims, "problem size MxKxN");
    cmd->add_option("--op", f.op, "operator: gemm|conv");
    cmd->add_option("--budget", f.budget, "tuning iterations");
    cmd->add_option("--seed", f.seed, "rng seed");
    cmd->add_option("--evaluator", f.evaluator, "cost|real");
    cmd->add_option("--advisor", f.advisor, "heuristic|llm|random");
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--descriptor-dir", f.descriptor_dir,
                    "descriptor directory");
    cmd->add_option("--log", f.log_path, "tuning log path (JSON lines)");
    cmd->add_option("--dtype", f.dtype, "f32|f64");
    cmd->add_option("--repeats", f.repeats, "timed runs per measurement");
}

forge::PipelineOptions to_options(const CommonFlags& f) {
    forge::PipelineOptions opt;
    opt.descriptor_dir = f.descriptor_dir;
    opt.out_dir = f.out_dir;
    opt.budget = f.budget;
    opt.seed = f.seed;
    opt.evaluator = f.evaluator;
    opt.advisor = f.advisor;
    opt.repeats = f.repeats;
    opt.dtype = f.dtype == "f64" ? forge::DType::F64 : forge::DType::F32;
    return opt;
}

forge::PromptRequest request_from_flags(const CommonFlags& f) {
    forge::PromptRequest req;
    req.op = f.op == "conv" ? forge::PromptRequest::Op::Conv
                            : forge::PromptRequest::Op::Gemm;
    req.hardware_name = f.hw;
    if (!f.dims.empty()) {
        std::smatch m;
        if (std::regex_match(f.dims, m,
                             std::regex(R"((\d+)x(\d+)x(\d+))"))) {
            req.gemm_dims = {std::stoll(m[1]), std::stoll(m[2]),
                             std::stoll(m[3])};
        } else if (req.op == forge::PromptRequest::Op::Conv &&
                   std::regex_match(f.dims, m, std::regex(R"((\d+)x(\d+))"))) {
            req.conv_filter = {std::stoll(m[1]), std::stoll(m[2])};
        } else {
            throw forge::UsageError("cannot parse --dims '" + f.dims + "'");
        }
    }
    return req;
}

int run_with_options(const forge::PromptRequest& req, CommonFlags& flags) {
    forge::PipelineOptions opt = to_options(flags);
    forge::LlmAdvisor llm;
    if (flags.advisor == "llm") {
        if (!llm.configured())
            std::cerr << "note: FORGE_LLM_ENDPOINT not set; the llm advisor "
                         "will fall back to the heuristic policy\n";
        opt.advisor_override = &llm;
    }
    forge::PipelineResult res = forge::run_pipeline(req, opt);
    if (res.exit_code == 0 && !flags.log_path.empty() &&
        std::filesystem::exists(opt.out_dir / "tuning_log.jsonl")) {
        std::filesystem::copy_file(
            opt.out_dir / "tuning_log.jsonl", flags.log_path,
            std::filesystem::copy_options::overwrite_existing);
    }
    return res.exit_code;
}

int cmd_describe(const CommonFlags& f) {
    auto hw = forge::load_descriptor(f.descriptor_dir, f.hw);
    auto diags = forge::validate_descriptor(hw);
    std::cout << "name: " << hw.name << "\n"
              << "family: " << (hw.family == forge::HwFamily::Cpu ? "cpu" : "gpu")
              << "\nfrequency_ghz: " << hw.frequency_ghz << "\n";
    for (const auto& lv : hw.memory) {
        std::cout << "memory " << lv.name << ": ";
        if (lv.name == "MAIN")
            std::cout << "(unbounded)";
        else
            std::cout << lv.size_bytes / 1024 << " KiB";
        std::cout << ", line " << lv.line_bytes << " B, latency "
                  << lv.latency_cycles << " cyc, " << lv.bytes_per_cycle
                  << " B/cyc\n";
    }
    std::cout << "registers: " << hw.registers.vector_count << "x"
              << hw.registers.vector_width_bits << "b vector, "
              << hw.registers.scalar_count << " scalar\n";
    for (const auto& t : hw.isa)
        std::cout << "instr " << forge::to_string(t.kind) << ": \""
                  << t.mnemonic_template << "\" latency " << t.latency_cycles
                  << " throughput " << t.throughput_per_cycle << "\n";
    if (hw.sm)
        std::cout << "sm: " << hw.sm->sm_count << " SMs, "
                  << hw.sm->cuda_cores_per_sm << " cuda cores/SM, "
                  << hw.sm->tensor_cores_per_sm << " tensor cores/SM\n";
    std::cout << (diags.empty() ? "valid: yes" : "valid: NO") << "\n";
    for (const auto& d : diags) std::cout << "  " << d << "\n";

    std::cout << "\noptimization hints:\n";
    for (const auto& h : forge::optimization_hints().entries)
        std::cout << "  [" << forge::to_string(h.technique) << " / "
                  << forge::to_string(h.factor) << "] " << h.text << "\n";
    return diags.empty() ? 0 : 2;
}

int cmd_generate(const CommonFlags& f, bool emit_only) {
    forge::PromptRequest req = request_from_flags(f);
    auto hw = forge::load_descriptor(f.descriptor_dir, f.hw);
    forge::PipelineOptions opt = to_options(f);

    std::optional<forge::Im2colPlan> plan;
    forge::GemmSpec spec = forge::resolve_spec(req, opt, plan);
    auto sketch = forge::default_sketch(spec, hw);
    auto kernel = forge::build_kernel_ir(sketch, hw, spec.dtype, false);

    auto gate = forge::diff_test(spec, sketch, kernel, hw, f.seed);
    if (!gate.pass) {
        std::cerr << "diff_test failed: max_rel_err=" << gate.max_rel_err
                  << " " << gate.error << "\n";
        return 3;
    }

    std::filesystem::create_directories(opt.out_dir);
    std::string name = f.hw;
    for (auto& c : name)
        if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
    auto scalar = forge::emit_sketch_source(sketch, kernel, spec, hw,
                                            forge::KernelFlavor::Scalar, name);
    std::ofstream(opt.out_dir / scalar.files.front().first)
        << scalar.text();
    forge::json cfg;
    cfg["sketch"] = sketch;
    cfg["kernel"] = kernel;
    std::ofstream(opt.out_dir / "default_config.json") << cfg.dump(2) << "\n";
    if (plan) {
        forge::json pj = *plan;
        std::ofstream(opt.out_dir / "im2col_plan.json") << pj.dump(2) << "\n";
    }
    std::cout << (emit_only ? "emitted " : "generated ")
              << (opt.out_dir / scalar.files.front().first).string()
              << " (diff_test max_rel_err=" << gate.max_rel_err << ")\n";
    return 0;
}

int cmd_bench(const CommonFlags& f) {
    forge::PromptRequest req = request_from_flags(f);
    auto hw = forge::load_descriptor(f.descriptor_dir, f.hw);
    forge::PipelineOptions opt = to_options(f);

    auto toolchain = forge::toolchain_template();
    if (!toolchain) {
        std::cerr << "no host toolchain found (set FORGE_CC_TEMPLATE)\n";
        return 4;
    }

    std::optional<forge::Im2colPlan> plan;
    forge::GemmSpec spec = forge::resolve_spec(req, opt, plan);
    auto sketch = forge::default_sketch(spec, hw);
    auto kernel = forge::build_kernel_ir(sketch, hw, spec.dtype, false);

    auto art = forge::emit_sketch_source(sketch, kernel, spec, hw,
                                         forge::KernelFlavor::Scalar, "bench");
    auto cr = forge::compile_artifact(art, *toolchain);
    if (!cr.ok) {
        std::cerr << "compile failed:\n" << cr.diagnostics << "\n";
        return 4;
    }
    auto perf = forge::run_benchmark(cr.op, spec, f.repeats, f.seed);
    if (!perf.correctness_pass) {
        std::cerr << "correctness check failed: " << perf.error << "\n";
        return 3;
    }
    auto cb = forge::estimate_cycles(sketch, kernel, spec, hw);
    std::cout << "measured: " << perf.gflops
              << " GFLOPS (median of " << perf.runs.size() << ")\n"
              << "cost model estimate for " << hw.name << ": "
              << cb.est_gflops << " GFLOPS\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tensorforge: tensor-operator generation and auto-tuning"};
    app.require_subcommand(1);

    std::string prompt_text;
    CommonFlags pf, gf, tf, bf, ef, df;

    auto* prompt = app.add_subcommand(
        "prompt", "run the full pipeline from a one-line prompt");
    prompt->add_option("text", prompt_text, "prompt sentence")->required();
    add_common(prompt, pf);

    auto* generate = app.add_subcommand(
        "generate", "build + verify the default configuration");
    add_common(generate, gf);

    auto* tune = app.add_subcommand("tune", "run the MCTS tuning pipeline");
    add_common(tune, tf);

    auto* bench = app.add_subcommand(
        "bench", "compile and time the default configuration on this host");
    add_common(bench, bf);

    auto* emit =
        app.add_subcommand("emit", "emit sources for the default config");
    add_common(emit, ef);

    auto* describe =
        app.add_subcommand("describe-hw", "print a descriptor and the hints");
    add_common(describe, df);

    CLI11_PARSE(app, argc, argv);

    try {
        if (prompt->parsed()) {
            auto names =
                forge::list_descriptor_names(pf.descriptor_dir);
            forge::PromptRequest req = forge::parse_prompt(prompt_text, names);
            // flags fill whatever the sentence left unspecified
            if (!req.gemm_dims && !req.conv_filter && !pf.dims.empty()) {
                forge::PromptRequest flag_req = request_from_flags(pf);
                req.gemm_dims = flag_req.gemm_dims;
                req.conv_filter = flag_req.conv_filter;
            }
            return run_with_options(req, pf);
        }
        if (generate->parsed()) return cmd_generate(gf, false);
        if (tune->parsed()) {
            forge::PromptRequest req = request_from_flags(tf);
            return run_with_options(req, tf);
        }
        if (bench->parsed()) return cmd_bench(bf);
        if (emit->parsed()) return cmd_generate(ef, true);
        if (describe->parsed()) return cmd_describe(df);
    } catch (const forge::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const forge::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
