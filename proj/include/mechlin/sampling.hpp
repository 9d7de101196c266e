#pragma once

// Deterministic low-discrepancy sampling of domain boxes.

#include "mechlin/types.hpp"

#include <cstdint>
#include <vector>

namespace mechlin {

/// `count` points of a Halton sequence mapped into `box`, one prime base per
/// coordinate.  The seed selects the starting index, so identical (box, count,
/// seed) triples always produce the identical point list.
std::vector<Eigen::VectorXd> sample_box(const Box& box, int count, std::uint64_t seed);

}  // namespace mechlin
