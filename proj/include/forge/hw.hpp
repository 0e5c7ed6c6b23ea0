// Hardware model: descriptor file parsing, validation, and the static
// registry of optimization hints the generation pipeline consults.
//
// A descriptor captures the four factors the rest of the toolkit needs:
// memory hierarchy, instruction templates, register file, and (for GPUs)
// streaming-multiprocessor info. Descriptors are immutable values; parsing
// is a pure function of the file text.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace forge {

// ---------------------------------------------------------------- errors

struct ParseError : std::runtime_error {
    int line = 0;
    int column = 0;
    ParseError(const std::string& msg, int ln = 0, int col = 0)
        : std::runtime_error(ln > 0 ? "line " + std::to_string(ln) + ":" +
                                          std::to_string(col) + ": " + msg
                                    : msg),
          line(ln),
          column(col) {}
};

// ------------------------------------------------------------ core types

struct CacheLevel {
    std::string name;  // "L1", "L2", ..., "MAIN"
    std::uint64_t size_bytes = 0;
    std::uint64_t line_bytes = 0;
    std::uint64_t latency_cycles = 1;
    double bytes_per_cycle = 1.0;  // sustained bandwidth proxy

    bool operator==(const CacheLevel&) const = default;
};

// Effectively-unbounded size used for the synthetic main-memory level.
inline constexpr std::uint64_t kMainMemoryBytes = 1ull << 62;

enum class InstrKind { VLoad, VStore, VBroadcast, VFma, SLoad, SStore, SFma };

inline const char* to_string(InstrKind k) {
    switch (k) {
        case InstrKind::VLoad: return "vload";
        case InstrKind::VStore: return "vstore";
        case InstrKind::VBroadcast: return "vbroadcast";
        case InstrKind::VFma: return "vfma";
        case InstrKind::SLoad: return "sload";
        case InstrKind::SStore: return "sstore";
        case InstrKind::SFma: return "sfma";
    }
    return "?";
}

inline std::optional<InstrKind> instr_kind_from_string(const std::string& s) {
    if (s == "vload") return InstrKind::VLoad;
    if (s == "vstore") return InstrKind::VStore;
    if (s == "vbroadcast") return InstrKind::VBroadcast;
    if (s == "vfma") return InstrKind::VFma;
    if (s == "sload") return InstrKind::SLoad;
    if (s == "sstore") return InstrKind::SStore;
    if (s == "sfma") return InstrKind::SFma;
    return std::nullopt;
}

inline bool is_fma(InstrKind k) {
    return k == InstrKind::VFma || k == InstrKind::SFma;
}
inline bool is_load(InstrKind k) {
    return k == InstrKind::VLoad || k == InstrKind::SLoad ||
           k == InstrKind::VBroadcast;
}
inline bool is_store(InstrKind k) {
    return k == InstrKind::VStore || k == InstrKind::SStore;
}

struct InstructionTemplate {
    InstrKind kind = InstrKind::VFma;
    std::string mnemonic_template;  // e.g. "vfmacc.vv {dst},{src1},{src2}"
    std::uint32_t latency_cycles = 1;
    double throughput_per_cycle = 1.0;  // issues per cycle

    bool operator==(const InstructionTemplate&) const = default;
};

// Placeholder set each instruction kind must carry, exactly.
inline std::vector<std::string> required_placeholders(InstrKind k) {
    switch (k) {
        case InstrKind::VLoad:
        case InstrKind::SLoad:
        case InstrKind::VBroadcast: return {"{dst}", "{addr}"};
        case InstrKind::VStore:
        case InstrKind::SStore: return {"{src1}", "{addr}"};
        case InstrKind::VFma:
        case InstrKind::SFma: return {"{dst}", "{src1}", "{src2}"};
    }
    return {};
}

struct RegisterFile {
    std::uint32_t vector_count = 0;
    std::uint32_t vector_width_bits = 0;  // 0 = no vector unit
    std::uint32_t scalar_count = 0;

    bool operator==(const RegisterFile&) const = default;
};

struct SmInfo {
    std::uint32_t sm_count = 0;
    std::uint32_t cuda_cores_per_sm = 0;
    std::uint32_t tensor_cores_per_sm = 0;

    bool operator==(const SmInfo&) const = default;
};

enum class HwFamily { Cpu, Gpu };

struct HardwareDescriptor {
    std::string name;
    HwFamily family = HwFamily::Cpu;
    double frequency_ghz = 1.0;
    std::vector<CacheLevel> memory;  // innermost first; last level is MAIN
    std::string isa_name;
    std::vector<InstructionTemplate> isa;
    bool fma_available = false;
    RegisterFile registers;
    std::optional<SmInfo> sm;

    bool operator==(const HardwareDescriptor&) const = default;

    bool has_vector_unit() const { return registers.vector_width_bits > 0; }

    // Cache levels excluding the synthetic main-memory entry.
    std::size_t cache_level_count() const {
        std::size_t n = memory.size();
        if (n > 0 && memory.back().name == "MAIN") --n;
        return n;
    }

    const InstructionTemplate* find_template(InstrKind k) const {
        for (const auto& t : isa)
            if (t.kind == k) return &t;
        return nullptr;
    }

    // Summed issue throughput of all FMA templates of the given kind.
    double fma_throughput(InstrKind k) const {
        double total = 0.0;
        for (const auto& t : isa)
            if (t.kind == k) total += t.throughput_per_cycle;
        return total;
    }
};

// ------------------------------------------------------------ validation

namespace detail {

inline bool placeholders_exact(const std::string& tmpl, InstrKind kind) {
    static const std::vector<std::string> all = {"{dst}", "{src1}", "{src2}",
                                                 "{addr}"};
    auto required = required_placeholders(kind);
    for (const auto& ph : all) {
        bool present = tmpl.find(ph) != std::string::npos;
        bool needed =
            std::find(required.begin(), required.end(), ph) != required.end();
        if (present != needed) return false;
    }
    return true;
}

}  // namespace detail

// Returns one message per violated invariant; empty means the descriptor
// is well-formed. Messages name the field and the rule.
inline std::vector<std::string> validate_descriptor(
    const HardwareDescriptor& d) {
    std::vector<std::string> diags;
    auto bad = [&](const std::string& m) { diags.push_back(m); };

    if (d.name.empty()) bad("name: must be non-empty");
    if (d.frequency_ghz <= 0) bad("frequency_ghz: must be > 0");

    if (d.memory.empty()) {
        bad("memory: at least one level required");
    } else {
        for (std::size_t i = 0; i < d.memory.size(); ++i) {
            const auto& lv = d.memory[i];
            std::string p = "memory." + lv.name;
            if (lv.size_bytes == 0) bad(p + ".size_bytes: must be > 0");
            if (lv.line_bytes == 0)
                bad(p + ".line_bytes: must be > 0");
            else if (lv.size_bytes % lv.line_bytes != 0)
                bad(p + ".line_bytes: must divide size_bytes");
            if (lv.latency_cycles < 1) bad(p + ".latency_cycles: must be >= 1");
            if (lv.bytes_per_cycle <= 0)
                bad(p + ".bytes_per_cycle: must be > 0");
            if (i > 0 && d.memory[i - 1].size_bytes >= lv.size_bytes)
                bad("memory: memory levels must increase in size (" +
                    d.memory[i - 1].name + " >= " + lv.name + ")");
        }
    }

    for (const auto& t : d.isa) {
        if (!detail::placeholders_exact(t.mnemonic_template, t.kind))
            bad("isa.instr(" + std::string(to_string(t.kind)) +
                "): mnemonic_template must contain exactly the placeholders "
                "required by its kind");
        if (t.latency_cycles < 1)
            bad("isa.instr(" + std::string(to_string(t.kind)) +
                "): latency_cycles must be >= 1");
        if (t.throughput_per_cycle <= 0)
            bad("isa.instr(" + std::string(to_string(t.kind)) +
                "): throughput_per_cycle must be > 0");
    }

    const auto& r = d.registers;
    if (r.vector_count < 2) bad("registers.vector_count: must be >= 2");
    switch (r.vector_width_bits) {
        case 0: case 64: case 128: case 256: case 512: case 1024: break;
        default:
            bad("registers.vector_width_bits: must be one of "
                "{0,64,128,256,512,1024}");
    }
    if (r.scalar_count < 4) bad("registers.scalar_count: must be >= 4");

    if (d.family == HwFamily::Cpu) {
        bool any_fma = false;
        for (const auto& t : d.isa) any_fma |= is_fma(t.kind);
        if (!any_fma)
            bad("isa: cpu descriptors must define at least one vfma or sfma "
                "template");
        if (d.sm.has_value())
            bad("sm: present but family is cpu (sm is gpu-only)");
    } else {
        if (!d.sm.has_value()) bad("sm: gpu descriptors must define [sm]");
    }
    return diags;
}

// --------------------------------------------------------------- parsing
//
// File format (UTF-8, '#' comments, keys lowercase):
//
//   [hardware]          name, family, frequency_ghz
//   [memory.<LEVEL>]    size_kib, line_bytes, latency_cycles, bytes_per_cycle
//   [registers]         vector_count, vector_width_bits, scalar_count
//   [isa]               name, fma = true|false
//   [[isa.instr]]       kind, template, latency, throughput   (repeatable)
//   [sm]                sm_count, cuda_cores_per_sm, tensor_cores_per_sm
//
// Omitted optional fields default to: latency_cycles = 4*(level_index+1),
// bytes_per_cycle = 16 halving per outer level, frequency_ghz = 1.0.
// A final MAIN level of 2^62 bytes is appended when the file does not
// define one, so traffic formulas can treat main memory uniformly.

namespace detail {

struct KeyValue {
    std::string value;
    int line = 0;
    int col = 0;
    bool consumed = false;
};

struct Section {
    std::string name;
    int line = 0;
    std::map<std::string, KeyValue> kv;
};

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string strip_comment(const std::string& s) {
    bool in_quote = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_quote = !in_quote;
        if (s[i] == '#' && !in_quote) return s.substr(0, i);
    }
    return s;
}

inline std::vector<Section> parse_sections(const std::string& text) {
    std::vector<Section> out;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            bool dbl = line.size() > 1 && line[1] == '[';
            std::string close = dbl ? "]]" : "]";
            auto pos = line.find(close);
            if (pos == std::string::npos || trim(line.substr(pos + close.size())) != "")
                throw ParseError("malformed section header", line_no, 1);
            std::string name = trim(line.substr(dbl ? 2 : 1, pos - (dbl ? 2 : 1)));
            if (name.empty())
                throw ParseError("empty section name", line_no, 1);
            out.push_back({name, line_no, {}});
        } else {
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ParseError("expected 'key = value'", line_no, 1);
            if (out.empty())
                throw ParseError("key outside of any section", line_no, 1);
            std::string key = trim(line.substr(0, eq));
            std::string val = trim(line.substr(eq + 1));
            if (key.empty())
                throw ParseError("empty key", line_no, 1);
            for (char c : key)
                if (std::isupper(static_cast<unsigned char>(c)))
                    throw ParseError("keys must be lowercase: " + key, line_no, 1);
            if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
                val = val.substr(1, val.size() - 2);
            if (out.back().kv.count(key))
                throw ParseError("duplicate key: " + key, line_no, 1);
            int col = static_cast<int>(raw.find(key)) + 1;
            out.back().kv[key] = {val, line_no, col, false};
        }
    }
    return out;
}

inline std::uint64_t to_u64(const KeyValue& kv, const std::string& key) {
    try {
        std::size_t pos = 0;
        std::uint64_t v = std::stoull(kv.value, &pos);
        if (pos != kv.value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ParseError("expected integer for '" + key + "', got '" +
                             kv.value + "'",
                         kv.line, kv.col);
    }
}

inline double to_f64(const KeyValue& kv, const std::string& key) {
    try {
        std::size_t pos = 0;
        double v = std::stod(kv.value, &pos);
        if (pos != kv.value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ParseError("expected number for '" + key + "', got '" +
                             kv.value + "'",
                         kv.line, kv.col);
    }
}

inline bool to_bool(const KeyValue& kv, const std::string& key) {
    if (kv.value == "true") return true;
    if (kv.value == "false") return false;
    throw ParseError("expected true|false for '" + key + "'", kv.line, kv.col);
}

class SectionReader {
  public:
    explicit SectionReader(Section& s) : s_(s) {}

    std::optional<KeyValue*> find(const std::string& key) {
        auto it = s_.kv.find(key);
        if (it == s_.kv.end()) return std::nullopt;
        it->second.consumed = true;
        return &it->second;
    }

    KeyValue& require(const std::string& key) {
        auto kv = find(key);
        if (!kv)
            throw ParseError("section [" + s_.name + "] missing required key '" +
                                 key + "'",
                             s_.line, 1);
        return **kv;
    }

    void finish() const {
        for (const auto& [k, v] : s_.kv)
            if (!v.consumed)
                throw ParseError("unknown key '" + k + "' in section [" +
                                     s_.name + "]",
                                 v.line, v.col);
    }

  private:
    Section& s_;
};

}  // namespace detail

inline HardwareDescriptor parse_descriptor(const std::string& text) {
    using namespace detail;
    auto sections = parse_sections(text);

    HardwareDescriptor d;
    bool saw_hardware = false, saw_registers = false;
    std::size_t mem_index = 0;

    for (auto& sec : sections) {
        SectionReader r(sec);
        if (sec.name == "hardware") {
            saw_hardware = true;
            d.name = r.require("name").value;
            std::string fam = r.require("family").value;
            if (fam == "cpu")
                d.family = HwFamily::Cpu;
            else if (fam == "gpu")
                d.family = HwFamily::Gpu;
            else
                throw ParseError("family must be cpu|gpu, got '" + fam + "'",
                                 sec.line, 1);
            if (auto kv = r.find("frequency_ghz"))
                d.frequency_ghz = to_f64(**kv, "frequency_ghz");
            r.finish();
        } else if (sec.name.rfind("memory.", 0) == 0) {
            CacheLevel lv;
            lv.name = sec.name.substr(7);
            if (lv.name.empty())
                throw ParseError("memory level needs a name", sec.line, 1);
            lv.size_bytes = to_u64(r.require("size_kib"), "size_kib") * 1024;
            lv.line_bytes = to_u64(r.require("line_bytes"), "line_bytes");
            if (auto kv = r.find("latency_cycles"))
                lv.latency_cycles = to_u64(**kv, "latency_cycles");
            else
                lv.latency_cycles = 4 * (mem_index + 1);
            if (auto kv = r.find("bytes_per_cycle"))
                lv.bytes_per_cycle = to_f64(**kv, "bytes_per_cycle");
            else
                lv.bytes_per_cycle =
                    std::max(1.0, 16.0 / double(1ull << mem_index));
            r.finish();
            d.memory.push_back(lv);
            ++mem_index;
        } else if (sec.name == "registers") {
            saw_registers = true;
            d.registers.vector_count =
                static_cast<std::uint32_t>(to_u64(r.require("vector_count"), "vector_count"));
            d.registers.vector_width_bits = static_cast<std::uint32_t>(
                to_u64(r.require("vector_width_bits"), "vector_width_bits"));
            d.registers.scalar_count =
                static_cast<std::uint32_t>(to_u64(r.require("scalar_count"), "scalar_count"));
            r.finish();
        } else if (sec.name == "isa") {
            if (auto kv = r.find("name")) d.isa_name = (*kv)->value;
            if (auto kv = r.find("fma")) d.fma_available = to_bool(**kv, "fma");
            r.finish();
        } else if (sec.name == "isa.instr") {
            InstructionTemplate t;
            auto& kind_kv = r.require("kind");
            auto kind = instr_kind_from_string(kind_kv.value);
            if (!kind)
                throw ParseError("unknown instruction kind '" + kind_kv.value +
                                     "'",
                                 kind_kv.line, kind_kv.col);
            t.kind = *kind;
            t.mnemonic_template = r.require("template").value;
            if (auto kv = r.find("latency"))
                t.latency_cycles =
                    static_cast<std::uint32_t>(to_u64(**kv, "latency"));
            if (auto kv = r.find("throughput"))
                t.throughput_per_cycle = to_f64(**kv, "throughput");
            r.finish();
            d.isa.push_back(t);
        } else if (sec.name == "sm") {
            SmInfo sm;
            sm.sm_count =
                static_cast<std::uint32_t>(to_u64(r.require("sm_count"), "sm_count"));
            if (auto kv = r.find("cuda_cores_per_sm"))
                sm.cuda_cores_per_sm =
                    static_cast<std::uint32_t>(to_u64(**kv, "cuda_cores_per_sm"));
            if (auto kv = r.find("tensor_cores_per_sm"))
                sm.tensor_cores_per_sm = static_cast<std::uint32_t>(
                    to_u64(**kv, "tensor_cores_per_sm"));
            r.finish();
            d.sm = sm;
        } else {
            throw ParseError("unknown section [" + sec.name + "]", sec.line, 1);
        }
    }

    if (!saw_hardware)
        throw ParseError("missing [hardware] section");
    if (!saw_registers)
        throw ParseError("missing [registers] section");
    if (d.memory.empty())
        throw ParseError("missing [memory.*] sections");

    // Synthesize the main-memory level unless the file spelled one out.
    bool has_main = !d.memory.empty() && d.memory.back().name == "MAIN";
    if (!has_main) {
        CacheLevel main;
        main.name = "MAIN";
        main.size_bytes = kMainMemoryBytes;
        main.line_bytes = 64;
        main.latency_cycles = 4 * (d.memory.size() + 1);
        main.bytes_per_cycle =
            std::max(1.0, 16.0 / double(1ull << d.memory.size()));
        d.memory.push_back(main);
    }

    auto diags = validate_descriptor(d);
    if (!diags.empty()) throw ParseError("invalid descriptor: " + diags.front());
    return d;
}

inline std::string serialize_descriptor(const HardwareDescriptor& d) {
    std::ostringstream out;
    auto num = [](double v) {
        std::ostringstream s;
        s << v;
        return s.str();
    };
    out << "[hardware]\n";
    out << "name = " << d.name << "\n";
    out << "family = " << (d.family == HwFamily::Cpu ? "cpu" : "gpu") << "\n";
    out << "frequency_ghz = " << num(d.frequency_ghz) << "\n";
    for (const auto& lv : d.memory) {
        out << "\n[memory." << lv.name << "]\n";
        out << "size_kib = " << lv.size_bytes / 1024 << "\n";
        out << "line_bytes = " << lv.line_bytes << "\n";
        out << "latency_cycles = " << lv.latency_cycles << "\n";
        out << "bytes_per_cycle = " << num(lv.bytes_per_cycle) << "\n";
    }
    out << "\n[registers]\n";
    out << "vector_count = " << d.registers.vector_count << "\n";
    out << "vector_width_bits = " << d.registers.vector_width_bits << "\n";
    out << "scalar_count = " << d.registers.scalar_count << "\n";
    out << "\n[isa]\n";
    if (!d.isa_name.empty()) out << "name = " << d.isa_name << "\n";
    out << "fma = " << (d.fma_available ? "true" : "false") << "\n";
    for (const auto& t : d.isa) {
        out << "\n[[isa.instr]]\n";
        out << "kind = " << to_string(t.kind) << "\n";
        out << "template = \"" << t.mnemonic_template << "\"\n";
        out << "latency = " << t.latency_cycles << "\n";
        out << "throughput = " << num(t.throughput_per_cycle) << "\n";
    }
    if (d.sm) {
        out << "\n[sm]\n";
        out << "sm_count = " << d.sm->sm_count << "\n";
        out << "cuda_cores_per_sm = " << d.sm->cuda_cores_per_sm << "\n";
        out << "tensor_cores_per_sm = " << d.sm->tensor_cores_per_sm << "\n";
    }
    return out.str();
}

// ----------------------------------------------------- optimization hints
//
// Static background knowledge pairing the five optimization techniques
// with the hardware factor that drives each of them. Text is advisory
// prose consumed by advisors and the describe-hw command.

enum class Technique { Tiling, Reordering, Vectorization, Layout, Pipeline };
enum class HwFactor { MH, INST, VR, SMs };

inline const char* to_string(Technique t) {
    switch (t) {
        case Technique::Tiling: return "tiling";
        case Technique::Reordering: return "reordering";
        case Technique::Vectorization: return "vectorization";
        case Technique::Layout: return "layout";
        case Technique::Pipeline: return "pipeline";
    }
    return "?";
}

inline const char* to_string(HwFactor f) {
    switch (f) {
        case HwFactor::MH: return "MH";
        case HwFactor::INST: return "INST";
        case HwFactor::VR: return "VR";
        case HwFactor::SMs: return "SMs";
    }
    return "?";
}

struct Hint {
    Technique technique;
    HwFactor factor;
    std::string text;
};

struct HintSet {
    std::vector<Hint> entries;

    std::vector<const Hint*> lookup(Technique t, HwFactor f) const {
        std::vector<const Hint*> out;
        for (const auto& h : entries)
            if (h.technique == t && h.factor == f) out.push_back(&h);
        return out;
    }
};

inline const HintSet& optimization_hints() {
    static const HintSet hints{{
        {Technique::Tiling, HwFactor::MH,
         "Cache capacity at each level bounds the tile sizes: pick block "
         "dimensions so each tile's working set stays resident in the cache "
         "it targets, keeping input data local across reuse."},
        {Technique::Tiling, HwFactor::SMs,
         "On GPUs the SM count and per-SM core counts set the grid and "
         "block dimensions used to partition the matrix across the chip."},
        {Technique::Reordering, HwFactor::MH,
         "Loop order decides which operand streams and which stays "
         "resident; order loops so the innermost traffic hits the fastest "
         "level."},
        {Technique::Vectorization, HwFactor::INST,
         "The available vector load/store/fma instructions fix the lane "
         "width and legal operand shapes of the inner kernel."},
        {Technique::Vectorization, HwFactor::VR,
         "The vector register count bounds how many accumulators a register "
         "tile can keep live, which sets the micro-kernel dimensions."},
        {Technique::Layout, HwFactor::MH,
         "Packing panels into contiguous buffers turns strided operand "
         "walks into unit-stride streams matched to line granularity."},
        {Technique::Pipeline, HwFactor::VR,
         "Spare registers permit double-buffered loads that overlap memory "
         "access with computation; without them pipelining cannot be "
         "applied."},
    }};
    return hints;
}

// -------------------------------------------- prose factor extraction
//
// Optional front end: an advisor turns manual-style prose into descriptor
// text which is then run through parse_descriptor. The default advisor is
// a deterministic keyword scanner; an LLM-backed advisor can implement the
// same interface.

struct FactorAdvisor {
    virtual ~FactorAdvisor() = default;
    // Returns descriptor-format text, or throws std::runtime_error with a
    // message naming the missing factor.
    virtual std::string propose_descriptor(const std::string& manual_text) = 0;
};

class HeuristicFactorAdvisor final : public FactorAdvisor {
  public:
    std::string propose_descriptor(const std::string& manual_text) override {
        std::string text = lower(manual_text);
        if (detail::trim(text).empty())
            throw std::runtime_error("no factors found: manual text is empty");

        // memory hierarchy: "64 KiB L1 ...", "L2 cache of 1 MiB", "L1: 32KB"
        std::map<int, std::uint64_t> levels;
        std::regex size_first(R"((\d+)\s*([km])i?b(?:\s+of)?[^.;,]*?\bl(\d))");
        std::regex level_first(R"(\bl(\d)\b[^.;,0-9]*?(\d+)\s*([km])i?b)");
        for (auto it = std::sregex_iterator(text.begin(), text.end(), size_first);
             it != std::sregex_iterator(); ++it) {
            std::uint64_t kib = std::stoull((*it)[1]) * ((*it)[2] == "m" ? 1024 : 1);
            levels.emplace(std::stoi((*it)[3]), kib);
        }
        for (auto it = std::sregex_iterator(text.begin(), text.end(), level_first);
             it != std::sregex_iterator(); ++it) {
            std::uint64_t kib = std::stoull((*it)[2]) * ((*it)[3] == "m" ? 1024 : 1);
            levels.emplace(std::stoi((*it)[1]), kib);
        }
        if (levels.empty())
            throw std::runtime_error(
                "no factors found: missing memory hierarchy (MH) — no cache "
                "sizes recognized");

        // registers: "32 vector registers of 128 bits", "16 256-bit vector
        // registers", "32 scalar registers"
        std::smatch m;
        std::uint64_t vcount = 0, vbits = 0, scount = 32;
        if (std::regex_search(text, m,
                              std::regex(R"((\d+)\s*vector\s+registers?)")))
            vcount = std::stoull(m[1]);
        if (std::regex_search(
                text, m,
                std::regex(R"(vector\s+registers?\s+of\s+(\d+)\s*bits?)")))
            vbits = std::stoull(m[1]);
        else if (std::regex_search(text, m,
                                   std::regex(R"((\d+)-bit\s+vector)")))
            vbits = std::stoull(m[1]);
        if (std::regex_search(text, m,
                              std::regex(R"((\d+)\s*scalar\s+registers?)")))
            scount = std::stoull(m[1]);

        bool mentions_isa =
            vcount > 0 ||
            text.find("fma") != std::string::npos ||
            text.find("fused multiply") != std::string::npos ||
            text.find("rvv") != std::string::npos ||
            text.find("neon") != std::string::npos ||
            text.find("avx") != std::string::npos;
        if (!mentions_isa)
            throw std::runtime_error(
                "missing factor: instructions (INST) / registers ((V)R) — no "
                "vector register or fma information recognized");

        bool gpu = text.find("gpu") != std::string::npos ||
                   text.find("cuda") != std::string::npos;
        double ghz = 1.0;
        if (std::regex_search(text, m,
                              std::regex(R"((\d+(?:\.\d+)?)\s*ghz)")))
            ghz = std::stod(m[1]);

        std::ostringstream out;
        out << "[hardware]\nname = extracted\nfamily = " << (gpu ? "gpu" : "cpu")
            << "\nfrequency_ghz = " << ghz << "\n";
        for (const auto& [lvl, kib] : levels)
            out << "\n[memory.L" << lvl << "]\nsize_kib = " << kib
                << "\nline_bytes = 64\n";
        out << "\n[registers]\nvector_count = " << std::max<std::uint64_t>(vcount, 2)
            << "\nvector_width_bits = " << vbits
            << "\nscalar_count = " << std::max<std::uint64_t>(scount, 4) << "\n";
        out << "\n[isa]\nfma = true\n";
        if (vbits > 0) {
            out << "\n[[isa.instr]]\nkind = vload\ntemplate = \"vle.v {dst},{addr}\"\n";
            out << "\n[[isa.instr]]\nkind = vstore\ntemplate = \"vse.v {src1},{addr}\"\n";
            out << "\n[[isa.instr]]\nkind = vbroadcast\ntemplate = \"vlse.v {dst},{addr}\"\n";
            out << "\n[[isa.instr]]\nkind = vfma\ntemplate = \"vfmacc.vv {dst},{src1},{src2}\"\nlatency = 4\n";
        }
        out << "\n[[isa.instr]]\nkind = sload\ntemplate = \"flw {dst},{addr}\"\n";
        out << "\n[[isa.instr]]\nkind = sstore\ntemplate = \"fsw {src1},{addr}\"\n";
        out << "\n[[isa.instr]]\nkind = sfma\ntemplate = \"fmadd {dst},{src1},{src2}\"\nlatency = 4\n";
        if (gpu) {
            std::uint64_t sms = 1;
            if (std::regex_search(text, m, std::regex(R"((\d+)\s*sms?\b)")))
                sms = std::stoull(m[1]);
            out << "\n[sm]\nsm_count = " << sms << "\n";
        }
        return out.str();
    }

  private:
    static std::string lower(std::string s) {
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
            return static_cast<char>(std::tolower(c));
        });
        return s;
    }
};

// Runs the advisor and parses its output; on parse failure the advisor's
// raw text is attached so callers can inspect what was proposed.
inline HardwareDescriptor extract_factors_with_advisor(
    const std::string& manual_text, FactorAdvisor& advisor) {
    std::string proposed = advisor.propose_descriptor(manual_text);
    try {
        return parse_descriptor(proposed);
    } catch (const ParseError& e) {
        throw std::runtime_error(
            std::string("advisor output unparseable: ") + e.what() +
            "\n--- advisor text ---\n" + proposed);
    }
}

}  // namespace forge
