#pragma once

#include "htd2/geometry.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace htd2 {

using Rng = std::mt19937_64;

/// Independent generator streams derived from one master seed. Each consumer
/// owns its stream, so changing the dispatcher never perturbs the demand.
enum class Stream : std::uint32_t {
    demand = 1,
    training = 2,
    noise = 3,
    assignment = 4,
    dispatch_point = 5,
    fleet_init = 6,
};

inline Rng make_stream(std::uint64_t master_seed, Stream stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed & 0xffffffffu),
                      static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(stream), 0x48544432u};
    return Rng(seq);
}

/// Uniform point inside cell s (half-open, so the result always maps back to s).
inline Position sample_in_cell(const StateSpace& space, int s, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Position lo = space.lower_corner(s);
    const double ds = space.cell_size();
    for (;;) {
        const Position p = lo + ds * Position(unit(rng), unit(rng));
        // Rounding can land a draw on the far edge; redraw (probability ~1e-16).
        if (space.try_cell_of(p) == s) return p;
    }
}

/// Uniform point over the valid area of the map.
inline Position sample_valid_area(const StateSpace& space, Rng& rng) {
    std::uniform_int_distribution<int> cell(0, space.n_states() - 1);
    return sample_in_cell(space, cell(rng), rng);
}

}  // namespace htd2
