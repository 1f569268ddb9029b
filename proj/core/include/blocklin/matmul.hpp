#pragma once

#include <cstddef>

#include "blocklin/device_matrix.hpp"

namespace blocklin {

struct GemmConfig {
    /// Output columns computed by each thread.
    std::size_t wpt = 8;
    /// Edge of the square tiles staged through work-group local memory.
    std::size_t tile = 32;
    /// Number of partial dot products in gemm_big_k; 0 picks it from the shape.
    std::size_t split_s = 0;
    std::size_t offload_min_nm = 250000;
    std::size_t offload_min_k = 100;
    /// Work-group size of the matrix-vector kernels.
    std::size_t wg_vec = 64;

    /// Throws std::invalid_argument on a zero field or wpt not dividing tile.
    void validate() const;
};

/// C = A * B with a 2D grid of n x ceil(m / wpt) threads in tile x
/// (tile / wpt) work groups. Triangular views on A or B shrink each dot
/// product to the span that can be nonzero.
DeviceMatrix gemm(const DeviceMatrix& a, const DeviceMatrix& b, const GemmConfig& cfg = {});

/// Split count used by gemm_big_k when cfg.split_s == 0:
/// clamp(k / max(n * m, 1), 1, 16).
std::size_t auto_split(std::size_t n, std::size_t m, std::size_t k);

/// C = A * B for long inner dimensions: n x m x s threads each write one
/// partial dot product into one of s copies of C, then a second kernel sums
/// the copies in order.
DeviceMatrix gemm_big_k(const DeviceMatrix& a, const DeviceMatrix& b, const GemmConfig& cfg = {});

/// C = A * A^T. Only threads with j <= i compute; each value is written to
/// both (i, j) and (j, i), so the result is exactly symmetric.
DeviceMatrix multiply_transpose(const DeviceMatrix& a, const GemmConfig& cfg = {});

/// Matrix times column vector: one work group of cfg.wg_vec threads per row.
DeviceMatrix mv_multiply(const DeviceMatrix& a, const DeviceMatrix& v, const GemmConfig& cfg = {});
/// Row vector times matrix: one work group per output column.
DeviceMatrix rv_multiply(const DeviceMatrix& r, const DeviceMatrix& a, const GemmConfig& cfg = {});

/// Picks the vector kernels, gemm_big_k or gemm based on the operand shapes.
DeviceMatrix multiply(const DeviceMatrix& a, const DeviceMatrix& b, const GemmConfig& cfg = {});
DeviceMatrix operator*(const DeviceMatrix& a, const DeviceMatrix& b);

/// Device offload pays off only for large products: n*m > offload_min_nm and
/// k > offload_min_k.
bool should_offload_gemm(std::size_t n, std::size_t m, std::size_t k, const GemmConfig& cfg = {});

/// Host-level product. Runs on the device when should_offload_gemm() says
/// so, otherwise on the host.
HostMatrix multiply(const HostMatrix& a, const HostMatrix& b, const GemmConfig& cfg = {});

}  // namespace blocklin
