#pragma once

#include <cstddef>

#include "blocklin/device_matrix.hpp"
#include "blocklin/matmul.hpp"

namespace blocklin {

struct TriSolveConfig {
    /// Order b of the diagonal blocks inverted directly.
    std::size_t diag_block = 32;
    /// The device path is used only for n > offload_min_n.
    std::size_t offload_min_n = 500;

    void validate() const;
};

/// Inverts the ceil(n / b) diagonal b x b blocks of lower-triangular A (the
/// last one may be smaller). One work group per block, one thread per block
/// column doing forward substitution against an identity scratch. Elements
/// outside the diagonal blocks are copied from A unchanged.
///
/// Throws std::domain_error if A has a zero on its diagonal.
DeviceMatrix diag_inv(const DeviceMatrix& a, std::size_t b);

/// Blocked inverse of a triangular matrix. Diagonal blocks come from
/// diag_inv; each following sweep doubles the inverted block order by
/// filling C3 = -C2 * A3 * C1 for every pair of neighbouring blocks, as
/// T = C2 * A3 followed by C3 = -T * C1. Upper input is transposed in and out.
DeviceMatrix lower_triangular_inverse(const DeviceMatrix& a, const TriSolveConfig& cfg = {});

/// Number of doubling sweeps after diag_inv: ceil(log2(ceil(n / b))).
std::size_t inverse_sweeps(std::size_t n, std::size_t b);

bool should_offload_trisolve(std::size_t n, const TriSolveConfig& cfg = {});

/// Solves A x = b for triangular A (view Lower or Upper). Above the offload
/// threshold this is lower_triangular_inverse followed by a product;
/// otherwise substitution on the host.
DeviceMatrix triangular_solve(const DeviceMatrix& a, const DeviceMatrix& b, const TriSolveConfig& cfg = {},
                              const GemmConfig& gemm_cfg = {});

/// Host-level entry. `view` selects which triangle of `a` is used.
HostMatrix triangular_solve(const HostMatrix& a, const HostMatrix& b, ViewTag view, const TriSolveConfig& cfg = {},
                            const GemmConfig& gemm_cfg = {});

}  // namespace blocklin
