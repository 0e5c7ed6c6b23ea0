// Random legal sketch generator shared by the unit and acceptance suites.

#pragma once

#include <random>

#include "forge/forge.hpp"

namespace forge::testing {

inline ScheduleSketch generate_legal_sketch(const GemmSpec& spec,
                                            const HardwareDescriptor& hw,
                                            std::mt19937_64& rng) {
    const std::int64_t lanes = lanes_for(hw, spec.dtype);
    const std::int64_t nstep = lanes > 1 ? lanes : 1;

    std::vector<std::pair<std::int64_t, std::int64_t>> tiles;
    for (std::int64_t mr = 1; mr <= std::min<std::int64_t>(16, spec.m); ++mr) {
        if (lanes > 1 && spec.n < lanes) {
            // scalar-mode tiles for problems too narrow to vectorize
            for (std::int64_t nr = 1; nr <= spec.n; ++nr)
                if (register_budget_ok(hw, spec.dtype, mr, nr))
                    tiles.emplace_back(mr, nr);
        } else {
            for (std::int64_t nr = nstep;
                 nr <= std::min<std::int64_t>(32, spec.n); nr += nstep)
                if (register_budget_ok(hw, spec.dtype, mr, nr))
                    tiles.emplace_back(mr, nr);
        }
    }
    if (tiles.empty())
        throw std::runtime_error("no feasible register tiles for generator");

    auto pick = [&](std::int64_t lo, std::int64_t hi) {
        return lo + std::int64_t(rng() % std::uint64_t(hi - lo + 1));
    };

    ScheduleSketch s;
    auto [mr, nr] = tiles[rng() % tiles.size()];
    s.mr = mr;
    s.nr = nr;
    s.bm = pick(mr, spec.m);
    s.bn = pick(nr, spec.n);
    s.bk = pick(1, spec.k);

    std::array<LoopAxis, 3> order{LoopAxis::M, LoopAxis::N, LoopAxis::K};
    for (int i = 2; i > 0; --i)
        std::swap(order[i], order[rng() % std::uint64_t(i + 1)]);
    s.loop_order = order;
    s.pack_a = rng() % 2;
    s.pack_b = rng() % 2;
    s.prefetch_distance = std::int64_t(rng() % 3);
    s.pipeline = (rng() % 2) &&
                 register_budget_ok(hw, spec.dtype, mr, nr, /*pipelined=*/true);

    if (!check_sketch_legality(s, spec, hw).empty())
        throw std::runtime_error("generator produced an illegal sketch");
    return s;
}

}  // namespace forge::testing
