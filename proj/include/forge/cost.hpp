// Analytic cost model.
//
// Deterministic stand-in for on-hardware measurement: a BLIS-style reuse
// model gives per-level traffic, FMA throughput gives compute cycles, and
// the pipeline flag decides whether the two overlap. The model is monotone
// by construction: growing any cache, widening any bandwidth, or enabling
// the pipeline never makes the estimate worse, and the GFLOPS estimate
// never exceeds the machine's FLOPs-per-cycle peak.

#pragma once

#include <cmath>
#include <vector>

#include "forge/ir.hpp"

namespace forge {

struct CostBreakdown {
    double compute_cycles = 0;
    std::vector<double> traffic_bytes_per_level;
    double mem_cycles = 0;
    double total_cycles = 0;
    double est_gflops = 0;
};

inline void to_json(json& j, const CostBreakdown& c) {
    j = json{{"compute_cycles", c.compute_cycles},
             {"traffic_bytes_per_level", c.traffic_bytes_per_level},
             {"mem_cycles", c.mem_cycles},
             {"total_cycles", c.total_cycles},
             {"est_gflops", c.est_gflops}};
}

// Per-level traffic in bytes. At a level whose half capacity holds the
// working set (packed A block + packed B panel + C register tile) each
// operand streams once; otherwise A is re-read per n-panel and B per
// m-panel. C is written and re-read per k-panel unless the bm x bn tile
// itself fits. Packing charges one extra read+write of each packed panel
// at the level the panel is staged: the B sliver in L1, the A block in L2
// (L1 when single-level).
inline std::vector<double> estimate_traffic(const ScheduleSketch& s,
                                            const GemmSpec& spec,
                                            const HardwareDescriptor& hw) {
    const double dt = dtype_bytes(spec.dtype);
    const double m = double(spec.m), n = double(spec.n), k = double(spec.k);
    const double working_set =
        (double(s.bm) * s.bk + double(s.bk) * s.bn + double(s.mr) * s.nr) * dt;
    const double c_tile = double(s.bm) * s.bn * dt;
    const double n_panels = std::ceil(n / double(s.bn));
    const double m_panels = std::ceil(m / double(s.bm));
    const double k_panels = std::ceil(k / double(s.bk));

    std::vector<double> traffic(hw.memory.size(), 0.0);
    for (std::size_t lvl = 0; lvl < hw.memory.size(); ++lvl) {
        const double half = double(hw.memory[lvl].size_bytes) / 2.0;
        const bool fits = working_set <= half;
        double bytes = 0;
        bytes += m * k * dt * (fits ? 1.0 : n_panels);          // A
        bytes += k * n * dt * (fits ? 1.0 : m_panels);          // B
        bytes += 2.0 * m * n * dt * (c_tile <= half ? 1.0 : k_panels);  // C
        traffic[lvl] = bytes;
    }

    const std::size_t n_cache = hw.cache_level_count();
    if (s.pack_b && !traffic.empty()) traffic[0] += 2.0 * k * n * dt;
    if (s.pack_a && !traffic.empty()) {
        std::size_t staged = n_cache >= 2 ? 1 : 0;
        traffic[staged] += 2.0 * m * k * dt;
    }
    return traffic;
}

// FLOPs-per-cycle peak implied by the descriptor for the kernel's mode.
inline double peak_flops_per_cycle(const KernelIR& ir,
                                   const HardwareDescriptor& hw) {
    double thr = hw.fma_throughput(ir.vector_mode ? InstrKind::VFma
                                                  : InstrKind::SFma);
    if (thr <= 0)  // fall back to whichever fma the descriptor does define
        thr = hw.fma_throughput(ir.vector_mode ? InstrKind::SFma
                                               : InstrKind::VFma);
    if (thr <= 0)
        throw std::invalid_argument(
            "estimate_cycles: descriptor defines no fma template");
    return double(ir.lanes) * thr * 2.0;
}

inline CostBreakdown estimate_cycles(const ScheduleSketch& s,
                                     const KernelIR& ir, const GemmSpec& spec,
                                     const HardwareDescriptor& hw) {
    CostBreakdown out;
    const double mnk = double(spec.m) * spec.n * spec.k;
    const double fma_rate = peak_flops_per_cycle(ir, hw) / 2.0;  // MACs/cycle
    out.compute_cycles = std::ceil(mnk / fma_rate);

    out.traffic_bytes_per_level = estimate_traffic(s, spec, hw);
    out.mem_cycles = 0;
    for (std::size_t lvl = 0; lvl < out.traffic_bytes_per_level.size(); ++lvl)
        out.mem_cycles +=
            out.traffic_bytes_per_level[lvl] / hw.memory[lvl].bytes_per_cycle;

    const double serial = out.compute_cycles + out.mem_cycles;
    if (ir.pipeline_depth == 2) {
        const double startup =
            double(ir.pipeline_depth) * double(hw.memory.back().latency_cycles);
        // overlap bounded by the serial schedule
        out.total_cycles =
            std::min(serial, std::max(out.compute_cycles, out.mem_cycles) +
                                 startup);
    } else {
        out.total_cycles = serial;
    }
    out.est_gflops = 2.0 * mnk * hw.frequency_ghz / out.total_cycles;
    return out;
}

// 2*m*n*k FLOPs over the cycle count, expressed in GFLOPS.
inline double estimate_gflops(const CostBreakdown& b, const GemmSpec& spec,
                              const HardwareDescriptor& hw) {
    if (b.total_cycles <= 0)
        throw std::invalid_argument("estimate_gflops: zero-cycle breakdown");
    double seconds = b.total_cycles / (hw.frequency_ghz * 1e9);
    return 2.0 * double(spec.m) * spec.n * spec.k / seconds / 1e9;
}

}  // namespace forge
