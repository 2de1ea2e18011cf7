#pragma once

#include <cstddef>

#include "dpp/matrix.hpp"
#include "dpp/rng.hpp"

namespace dpp {

/// count unit-norm rows of length dim drawn from rng; pairwise orthogonal when dim >= count.
Matrix unit_directions(std::size_t count, std::size_t dim, Rng& rng);

}  // namespace dpp
