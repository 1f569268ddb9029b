#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "blocklin/device_matrix.hpp"
#include "blocklin/matmul.hpp"
#include "blocklin/trisolve.hpp"

namespace blocklin {

struct CholeskyConfig {
    /// The leading block of the recursion has order n / partition.
    std::size_t partition = 4;
    /// Orders at or below this go straight to cholesky_small.
    std::size_t min_l11 = 64;
    /// Block size of the gradient sweep.
    std::size_t grad_block = 128;
    /// Host entries use the device only for n > offload_min_n.
    std::size_t offload_min_n = 1024;

    GemmConfig gemm {};
    TriSolveConfig tri {};

    void validate() const;
};

/// Raised at the first non-positive pivot.
class NotPositiveDefinite : public std::domain_error {
  public:
    explicit NotPositiveDefinite(std::size_t index);
    /// Zero-based row of the failing pivot in the matrix passed by the caller.
    std::size_t index() const {
        return index_;
    }

  private:
    std::size_t index_;
};

/// Sequential algorithm in a single work group of n threads: one pass for
/// the pivot, one for the column below it. Reads only the lower triangle.
DeviceMatrix cholesky_small(const DeviceMatrix& a);

/// Blocked recursion: L11 by recursion on the leading n / partition block,
/// L21 = A21 * inverse(L11)^T, L22 from A22 - L21 L21^T by recursion.
/// Orders <= cfg.min_l11 use cholesky_small. Reads only the lower triangle
/// of A; the result has view Lower.
DeviceMatrix cholesky_decompose(const DeviceMatrix& a, const CholeskyConfig& cfg = {});

/// Host entry. Runs on the device for n > cfg.offload_min_n, otherwise uses
/// a host LLT.
HostMatrix cholesky_decompose(const HostMatrix& a, const CholeskyConfig& cfg = {});

/// Adjoint of A given L = chol(A) and the adjoint of L, by blocked reverse
/// sweep over cfg.grad_block columns at a time. The result is lower
/// triangular: entry (i, j), i >= j, is the derivative with respect to A(i, j)
/// when the factorization reads only the lower triangle of A.
DeviceMatrix cholesky_gradient(const DeviceMatrix& l, const DeviceMatrix& l_adj, const CholeskyConfig& cfg = {});

/// Same, with L, its adjoint and the result moved in packed lower form.
std::vector<double> cholesky_gradient(std::span<const double> l_packed, std::span<const double> l_adj_packed,
                                      std::size_t n, const CholeskyConfig& cfg = {});

/// Host version of the blocked sweep, used below the offload threshold.
HostMatrix cholesky_gradient(const HostMatrix& l, const HostMatrix& l_adj, const CholeskyConfig& cfg = {});

}  // namespace blocklin
