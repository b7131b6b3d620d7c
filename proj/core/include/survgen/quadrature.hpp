#pragma once

#include <cstddef>
#include <vector>

namespace survgen {

// Nodes in (0, 1), ascending; weights positive.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// n-point Gauss-Legendre rule mapped from [-1, 1] onto [0, 1]. Exact for
// polynomials of degree <= 2n - 1; weights sum to 1.
QuadratureRule gauss_legendre_01(std::size_t n);

} // namespace survgen
