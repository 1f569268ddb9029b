#include "blocklin/trisolve.hpp"

#include <stdexcept>
#include <string>

#include "blocklin/kernels_basic.hpp"
#include "kernel_util.hpp"

namespace blocklin {

using detail::ceil_div;

namespace {

constexpr auto In = ArgKind::In;
constexpr auto InOut = ArgKind::InOut;
constexpr auto Out = ArgKind::Out;
constexpr auto S = ArgKind::Scalar;

// args: M (n x n, holds A on entry), scratch (identities), n, b
// Group g inverts diagonal block g. Item c solves for column c of the block
// inverse in the scratch identity, then all items copy the block back.
const Kernel diag_inv_kernel(
    "diag_inv", {InOut, InOut, S, S}, GroupBody([](const WorkGroup& g, const KernelArgs& a) {
        const std::size_t n = a.size(2), b = a.size(3);
        const std::size_t start = g.group_id(0) * b;
        const std::size_t bs = std::min(b, n - start);
        auto m = a.out(0);
        auto x = a.out(1).subspan(g.group_id(0) * b * b, b * b);

        g.for_each_item([&](const WorkItem& it) {
            const std::size_t c = it.local[0];
            if (c >= bs) {
                return;
            }
            // rows above c are zero in column c of a lower inverse
            for (std::size_t i = c; i < bs; ++i) {
                double s = x[i * b + c];
                for (std::size_t l = c; l < i; ++l) {
                    s -= m[(start + i) * n + start + l] * x[l * b + c];
                }
                x[i * b + c] = s / m[(start + i) * n + start + i];
            }
        });
        g.for_each_item([&](const WorkItem& it) {
            const std::size_t c = it.local[0];
            if (c >= bs) {
                return;
            }
            for (std::size_t i = 0; i < bs; ++i) {
                m[(start + i) * n + start + c] = x[i * b + c];
            }
        });
    }));

// Pair p of sweep with block order `cur` covers rows/cols starting at
// r0 = 2 p cur: C1 at (r0, r0), C2 at (r0 + cur, r0 + cur), A3 and C3 at
// (r0 + cur, r0). C2 may be cut short by the end of the matrix.

// args: T (n x n scratch), inv, A, n, cur. T = C2 * A3.
const Kernel inv_lower_tri_multiply_kernel(
    "inv_lower_tri_multiply", {Out, In, In, S, S}, ItemBody([](const WorkItem& it, const KernelArgs& a) {
        const std::size_t n = a.size(3), cur = a.size(4);
        const std::size_t i = it.global[0], j = it.global[1], p = it.global[2];
        const std::size_t r0 = 2 * p * cur, rs = r0 + cur;
        const std::size_t h2 = std::min(cur, n - rs);
        if (i >= h2) {
            return;
        }
        const auto inv = a.in(1);
        const auto A = a.in(2);
        double acc = 0.0;
        for (std::size_t l = 0; l <= i; ++l) {
            acc += inv[(rs + i) * n + rs + l] * A[(rs + l) * n + r0 + j];
        }
        a.out(0)[(rs + i) * n + r0 + j] = acc;
    }));

// args: inv, T, n, cur. C3 = -T * C1, written into inv.
const Kernel neg_rect_lower_tri_multiply_kernel(
    "neg_rect_lower_tri_multiply", {InOut, In, S, S}, ItemBody([](const WorkItem& it, const KernelArgs& a) {
        const std::size_t n = a.size(2), cur = a.size(3);
        const std::size_t i = it.global[0], j = it.global[1], p = it.global[2];
        const std::size_t r0 = 2 * p * cur, rs = r0 + cur;
        const std::size_t h2 = std::min(cur, n - rs);
        if (i >= h2) {
            return;
        }
        auto inv = a.out(0);
        const auto T = a.in(1);
        double acc = 0.0;
        for (std::size_t l = j; l < cur; ++l) {
            acc += T[(rs + i) * n + r0 + l] * inv[(r0 + l) * n + r0 + j];
        }
        inv[(rs + i) * n + r0 + j] = -acc;
    }));

void require_square(const DeviceMatrix& a, const char* what) {
    if (!a.is_square()) {
        throw std::invalid_argument(std::string(what) + ": matrix must be square, got " + std::to_string(a.rows())
                                    + "x" + std::to_string(a.cols()));
    }
}

void require_nonzero_diagonal(const DeviceMatrix& a, const char* what) {
    if (check(CheckKind::DiagonalZeros, a)) {
        throw std::domain_error(std::string(what) + ": zero on the diagonal");
    }
}

// Copy of `a` restricted to its lower triangle, with view Lower.
DeviceMatrix lower_part(const DeviceMatrix& a) {
    DeviceMatrix l(a.rows(), a.cols(), ViewTag::Lower);
    sub_block(a, l, 0, 0, 0, 0, a.rows(), a.cols(), ViewTag::Lower);
    return l;
}

}  // namespace

void TriSolveConfig::validate() const {
    if (diag_block == 0) {
        throw std::invalid_argument("TriSolveConfig: diag_block must be at least 1");
    }
}

DeviceMatrix diag_inv(const DeviceMatrix& a, std::size_t b) {
    require_square(a, "diag_inv");
    if (b == 0) {
        throw std::invalid_argument("diag_inv: block order must be at least 1");
    }
    const std::size_t n = a.rows();
    DeviceMatrix m = copy(a);
    if (n == 0) {
        return m;
    }
    require_nonzero_diagonal(a, "diag_inv");
    const std::size_t nblocks = ceil_div(n, b);
    DeviceBuffer scratch = batch_identity(nblocks, b);
    diag_inv_kernel(NDRange(nblocks * b), NDRange(b), m, scratch, n, b);
    return m;
}

std::size_t inverse_sweeps(std::size_t n, std::size_t b) {
    std::size_t sweeps = 0;
    for (std::size_t blocks = ceil_div(n, b); blocks > 1; blocks = ceil_div(blocks, 2)) {
        ++sweeps;
    }
    return sweeps;
}

DeviceMatrix lower_triangular_inverse(const DeviceMatrix& a, const TriSolveConfig& cfg) {
    cfg.validate();
    require_square(a, "lower_triangular_inverse");
    if (a.view() == ViewTag::Upper) {
        DeviceMatrix inv_t = lower_triangular_inverse(transpose(a), cfg);
        return transpose(inv_t);
    }
    const std::size_t n = a.rows();
    if (n == 0) {
        return DeviceMatrix(0, 0, ViewTag::Lower);
    }
    const DeviceMatrix lo = lower_part(a);
    const std::size_t b = std::min(cfg.diag_block, n);
    DeviceMatrix inv = diag_inv(lo, b);
    inv.set_view(ViewTag::Lower);

    DeviceMatrix t(n, n);
    std::size_t cur = b;
    for (std::size_t s = 0, sweeps = inverse_sweeps(n, b); s < sweeps; ++s, cur *= 2) {
        const std::size_t pairs = ceil_div(n, cur) / 2;
        const NDRange global(cur, cur, pairs);
        const NDRange local(detail::kTile2d, detail::kTile2d, 1);
        inv_lower_tri_multiply_kernel(global, local, t, inv, lo, n, cur);
        neg_rect_lower_tri_multiply_kernel(global, local, inv, t, n, cur);
    }
    return inv;
}

bool should_offload_trisolve(std::size_t n, const TriSolveConfig& cfg) {
    return n > cfg.offload_min_n;
}

DeviceMatrix triangular_solve(const DeviceMatrix& a, const DeviceMatrix& b, const TriSolveConfig& cfg,
                              const GemmConfig& gemm_cfg) {
    require_square(a, "triangular_solve");
    if (a.view() != ViewTag::Lower && a.view() != ViewTag::Upper) {
        throw std::invalid_argument("triangular_solve: A must have a Lower or Upper view");
    }
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("triangular_solve: A is " + std::to_string(a.rows()) + "x"
                                    + std::to_string(a.cols()) + " but b has " + std::to_string(b.rows())
                                    + " rows");
    }
    if (should_offload_trisolve(a.rows(), cfg)) {
        return multiply(lower_triangular_inverse(a, cfg), b, gemm_cfg);
    }
    require_nonzero_diagonal(a, "triangular_solve");
    const HostMatrix ha = from_device(a);
    const HostMatrix hb = from_device(b);
    if (a.view() == ViewTag::Lower) {
        return to_device(HostMatrix(ha.triangularView<Eigen::Lower>().solve(hb)));
    }
    return to_device(HostMatrix(ha.triangularView<Eigen::Upper>().solve(hb)));
}

HostMatrix triangular_solve(const HostMatrix& a, const HostMatrix& b, ViewTag view, const TriSolveConfig& cfg,
                            const GemmConfig& gemm_cfg) {
    if (a.rows() != a.cols() || a.rows() != b.rows()) {
        throw std::invalid_argument("triangular_solve: shape mismatch");
    }
    if (view != ViewTag::Lower && view != ViewTag::Upper) {
        throw std::invalid_argument("triangular_solve: view must be Lower or Upper");
    }
    if (should_offload_trisolve(static_cast<std::size_t>(a.rows()), cfg)) {
        return from_device(triangular_solve(to_device(a, view), to_device(b), cfg, gemm_cfg));
    }
    if ((a.diagonal().array() == 0.0).any()) {
        throw std::domain_error("triangular_solve: zero on the diagonal");
    }
    if (view == ViewTag::Lower) {
        return a.triangularView<Eigen::Lower>().solve(b);
    }
    return a.triangularView<Eigen::Upper>().solve(b);
}

}  // namespace blocklin
