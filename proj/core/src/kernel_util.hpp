#pragma once

// Helpers shared by kernel bodies. Not installed.

#include <algorithm>
#include <cstddef>
#include <span>

#include "blocklin/device_matrix.hpp"

namespace blocklin::detail {

inline constexpr std::size_t kTile2d = 8;

inline ViewTag view_arg(const KernelArgs& a, std::size_t i) {
    return static_cast<ViewTag>(a.integer(i));
}

inline std::int64_t view_code(ViewTag v) {
    return static_cast<std::int64_t>(v);
}

/// Element (i, j) of a row-major matrix with `cols` columns, read as zero
/// outside `view`.
inline double load(std::span<const double> m, std::size_t cols, std::size_t i, std::size_t j, ViewTag view) {
    return view_contains(view, i, j) ? m[i * cols + j] : 0.0;
}

inline std::size_t ceil_div(std::size_t a, std::size_t b) {
    return (a + b - 1) / b;
}

/// Global range and work-group shape for a per-element 2D kernel.
inline NDRange grid2d(std::size_t rows, std::size_t cols) {
    return NDRange(rows, cols);
}
inline NDRange group2d() {
    return NDRange(kTile2d, kTile2d);
}

}  // namespace blocklin::detail

namespace blocklin::detail {

/// Fixed-order tree reduction over one work group's partials, as a
/// local-memory reduction would perform it: at each step item `lid` adds
/// item `lid + stride`. Leaves the sum in s[0].
inline double tree_reduce(std::span<double> s) {
    const std::size_t n = s.size();
    if (n == 0) {
        return 0.0;
    }
    std::size_t p = 1;
    while (p < n) {
        p <<= 1;
    }
    for (std::size_t stride = p / 2; stride > 0; stride /= 2) {
        for (std::size_t lid = 0; lid < stride; ++lid) {
            if (lid + stride < n) {
                s[lid] += s[lid + stride];
            }
        }
    }
    return s[0];
}

}  // namespace blocklin::detail
