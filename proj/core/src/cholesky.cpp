#include "blocklin/cholesky.hpp"

#include <cmath>
#include <string>

#include "blocklin/kernels_basic.hpp"
#include "kernel_util.hpp"

namespace blocklin {

namespace {

constexpr auto In = ArgKind::In;
constexpr auto Out = ArgKind::Out;
constexpr auto S = ArgKind::Scalar;

// args: L, A, flag, n
// flag ends up 0 on success, pivot index + 1 otherwise.
const Kernel cholesky_small_kernel(
    "cholesky_small", {Out, In, Out, S}, GroupBody([](const WorkGroup& g, const KernelArgs& a) {
        const std::size_t n = a.size(3);
        auto L = a.out(0);
        const auto A = a.in(1);
        auto flag = a.out_i32(2);
        flag[0] = 0;
        for (std::size_t j = 0; j < n; ++j) {
            bool failed = false;
            g.for_each_item([&](const WorkItem& it) {
                if (it.local[0] != 0) {
                    return;
                }
                double d = A[j * n + j];
                for (std::size_t k = 0; k < j; ++k) {
                    d -= L[j * n + k] * L[j * n + k];
                }
                if (!(d > 0.0)) {
                    flag[0] = static_cast<std::int32_t>(j + 1);
                    failed = true;
                    return;
                }
                L[j * n + j] = std::sqrt(d);
            });
            if (failed) {
                return;
            }
            g.for_each_item([&](const WorkItem& it) {
                const std::size_t i = it.local[0];
                if (i <= j) {
                    if (i < j) {
                        L[i * n + j] = 0.0;
                    }
                    return;
                }
                double s = A[i * n + j];
                for (std::size_t k = 0; k < j; ++k) {
                    s -= L[i * n + k] * L[j * n + k];
                }
                L[i * n + j] = s / L[j * n + j];
            });
        }
    }));

DeviceMatrix decompose(const DeviceMatrix& a, const CholeskyConfig& cfg, std::size_t offset) {
    const std::size_t n = a.rows();
    if (n == 0) {
        return DeviceMatrix(0, 0, ViewTag::Lower);
    }
    if (n <= cfg.min_l11) {
        try {
            return cholesky_small(a);
        } catch (const NotPositiveDefinite& e) {
            throw NotPositiveDefinite(offset + e.index());
        }
    }
    const std::size_t blk = std::max<std::size_t>(1, n / cfg.partition);
    const std::size_t rest = n - blk;

    DeviceMatrix l11 = decompose(block(a, 0, 0, blk, blk), cfg, offset);
    DeviceMatrix l21 = multiply(block(a, blk, 0, rest, blk), transpose(lower_triangular_inverse(l11, cfg.tri)),
                                cfg.gemm);
    DeviceMatrix a22 = block(a, blk, blk, rest, rest);
    DeviceMatrix l22 = decompose(a22 - multiply_transpose(l21, cfg.gemm), cfg, offset + blk);

    DeviceMatrix l(n, n, ViewTag::Lower);
    sub_block(l11, l, 0, 0, 0, 0, blk, blk);
    sub_block(l21, l, 0, 0, blk, 0, rest, blk);
    sub_block(l22, l, 0, 0, blk, blk, rest, rest);
    return l;
}

void require_square(std::size_t rows, std::size_t cols, const char* what) {
    if (rows != cols) {
        throw std::invalid_argument(std::string(what) + ": matrix must be square, got " + std::to_string(rows) + "x"
                                    + std::to_string(cols));
    }
}

}  // namespace

NotPositiveDefinite::NotPositiveDefinite(std::size_t index)
    : std::domain_error("matrix is not positive definite (pivot " + std::to_string(index) + ")"), index_(index) {}

void CholeskyConfig::validate() const {
    if (partition < 2) {
        throw std::invalid_argument("CholeskyConfig: partition must be at least 2");
    }
    if (min_l11 < 1 || grad_block < 1) {
        throw std::invalid_argument("CholeskyConfig: min_l11 and grad_block must be at least 1");
    }
    gemm.validate();
    tri.validate();
}

DeviceMatrix cholesky_small(const DeviceMatrix& a) {
    require_square(a.rows(), a.cols(), "cholesky_small");
    const std::size_t n = a.rows();
    DeviceMatrix l(n, n, ViewTag::Lower);
    if (n == 0) {
        return l;
    }
    DeviceBuffer flag = alloc_buffer(1, ElementType::I32);
    cholesky_small_kernel(NDRange(n), NDRange(n), l, a, flag, n);
    const std::int32_t pivot = flag.read_i32()[0];
    if (pivot != 0) {
        throw NotPositiveDefinite(static_cast<std::size_t>(pivot - 1));
    }
    return l;
}

DeviceMatrix cholesky_decompose(const DeviceMatrix& a, const CholeskyConfig& cfg) {
    cfg.validate();
    require_square(a.rows(), a.cols(), "cholesky_decompose");
    return decompose(a, cfg, 0);
}

HostMatrix cholesky_decompose(const HostMatrix& a, const CholeskyConfig& cfg) {
    require_square(static_cast<std::size_t>(a.rows()), static_cast<std::size_t>(a.cols()), "cholesky_decompose");
    const auto n = static_cast<std::size_t>(a.rows());
    if (n > cfg.offload_min_n) {
        return from_device(cholesky_decompose(to_device(a), cfg));
    }
    Eigen::LLT<HostMatrix, Eigen::Lower> llt(a);
    if (llt.info() != Eigen::Success) {
        // LLT does not report where it stopped; find it the slow way
        for (std::size_t k = 1; k <= n; ++k) {
            Eigen::LLT<HostMatrix, Eigen::Lower> lead(a.topLeftCorner(k, k));
            if (lead.info() != Eigen::Success) {
                throw NotPositiveDefinite(k - 1);
            }
        }
        throw NotPositiveDefinite(n - 1);
    }
    return HostMatrix(llt.matrixL());
}

DeviceMatrix cholesky_gradient(const DeviceMatrix& l_in, const DeviceMatrix& l_adj_in, const CholeskyConfig& cfg) {
    cfg.validate();
    require_square(l_in.rows(), l_in.cols(), "cholesky_gradient");
    if (l_adj_in.rows() != l_in.rows() || l_adj_in.cols() != l_in.cols()) {
        throw std::invalid_argument("cholesky_gradient: L and its adjoint differ in shape");
    }
    const std::size_t n = l_in.rows();
    if (n == 0) {
        return DeviceMatrix(0, 0, ViewTag::Lower);
    }
    if (check(CheckKind::DiagonalZeros, l_in)) {
        throw std::domain_error("cholesky_gradient: zero on the diagonal of L");
    }

    // lower-masked working copies; the adjoint is updated in place
    DeviceMatrix lv(n, n);
    sub_block(l_in, lv, 0, 0, 0, 0, n, n, ViewTag::Lower);
    DeviceMatrix la(n, n);
    sub_block(l_adj_in, la, 0, 0, 0, 0, n, n, ViewTag::Lower);

    const std::size_t bs = cfg.grad_block;
    for (std::size_t k = n; k > 0; k -= std::min(k, bs)) {
        const std::size_t j = k > bs ? k - bs : 0;
        const std::size_t w = k - j, below = n - k;

        DeviceMatrix r = block(lv, j, 0, w, j);
        DeviceMatrix d = block(lv, j, j, w, w);
        d.set_view(ViewTag::Lower);
        DeviceMatrix b = block(lv, k, 0, below, j);
        DeviceMatrix c = block(lv, k, j, below, w);
        DeviceMatrix r_adj = block(la, j, 0, w, j);
        DeviceMatrix d_adj = block(la, j, j, w, w);
        DeviceMatrix b_adj = block(la, k, 0, below, j);
        DeviceMatrix c_adj = block(la, k, j, below, w);

        const DeviceMatrix d_inv = lower_triangular_inverse(d, cfg.tri);
        c_adj = multiply(c_adj, d_inv, cfg.gemm);
        b_adj = b_adj - multiply(c_adj, r, cfg.gemm);
        d_adj = d_adj - multiply(transpose(c_adj), c, cfg.gemm);

        d_adj = multiply(transpose(d), d_adj, cfg.gemm);
        triangular_transpose(d_adj, TriangularMap::LowerToUpper);
        const DeviceMatrix d_inv_t = transpose(d_inv);
        d_adj = multiply(d_inv_t, transpose(multiply(d_inv_t, d_adj, cfg.gemm)), cfg.gemm);
        triangular_transpose(d_adj, TriangularMap::LowerToUpper);

        r_adj = r_adj - multiply(transpose(c_adj), b, cfg.gemm) - multiply(d_adj, r, cfg.gemm);
        d_adj = scalar_multiply(d_adj, 0.5, true);
        set_zeros(d_adj, ViewTag::Upper, false);

        sub_block(r_adj, la, 0, 0, j, 0, w, j);
        sub_block(d_adj, la, 0, 0, j, j, w, w);
        sub_block(b_adj, la, 0, 0, k, 0, below, j);
        sub_block(c_adj, la, 0, 0, k, j, below, w);
    }
    la.set_view(ViewTag::Lower);
    return la;
}

std::vector<double> cholesky_gradient(std::span<const double> l_packed, std::span<const double> l_adj_packed,
                                      std::size_t n, const CholeskyConfig& cfg) {
    const DeviceMatrix l = packed_copy_to_device(l_packed, n, ViewTag::Lower);
    const DeviceMatrix l_adj = packed_copy_to_device(l_adj_packed, n, ViewTag::Lower);
    return packed_copy_from_device(cholesky_gradient(l, l_adj, cfg));
}

HostMatrix cholesky_gradient(const HostMatrix& l_in, const HostMatrix& l_adj_in, const CholeskyConfig& cfg) {
    cfg.validate();
    require_square(static_cast<std::size_t>(l_in.rows()), static_cast<std::size_t>(l_in.cols()),
                   "cholesky_gradient");
    if (l_adj_in.rows() != l_in.rows() || l_adj_in.cols() != l_in.cols()) {
        throw std::invalid_argument("cholesky_gradient: L and its adjoint differ in shape");
    }
    const auto n = static_cast<std::size_t>(l_in.rows());
    if (n > cfg.offload_min_n) {
        const std::vector<double> out =
            cholesky_gradient(pack_host(l_in, ViewTag::Lower), pack_host(l_adj_in, ViewTag::Lower), n, cfg);
        return from_device(packed_copy_to_device(out, n, ViewTag::Lower));
    }
    if ((l_in.diagonal().array() == 0.0).any()) {
        throw std::domain_error("cholesky_gradient: zero on the diagonal of L");
    }
    const HostMatrix lv = l_in.triangularView<Eigen::Lower>();
    HostMatrix la = l_adj_in.triangularView<Eigen::Lower>();
    const auto N = static_cast<Eigen::Index>(n);
    const auto bs = static_cast<Eigen::Index>(cfg.grad_block);
    for (Eigen::Index k = N; k > 0; k -= std::min(k, bs)) {
        const Eigen::Index j = std::max<Eigen::Index>(0, k - bs);
        const Eigen::Index w = k - j, below = N - k;
        const HostMatrix r = lv.block(j, 0, w, j);
        const HostMatrix d = lv.block(j, j, w, w);
        const HostMatrix b = lv.block(k, 0, below, j);
        const HostMatrix c = lv.block(k, j, below, w);
        HostMatrix r_adj = la.block(j, 0, w, j);
        HostMatrix d_adj = la.block(j, j, w, w);
        HostMatrix b_adj = la.block(k, 0, below, j);
        HostMatrix c_adj = la.block(k, j, below, w);

        const HostMatrix d_inv = d.triangularView<Eigen::Lower>().solve(HostMatrix::Identity(w, w));
        c_adj = c_adj * d_inv;
        b_adj -= c_adj * r;
        d_adj -= c_adj.transpose() * c;
        d_adj = d.transpose() * d_adj;
        d_adj.triangularView<Eigen::StrictlyUpper>() = d_adj.transpose().eval();
        const HostMatrix d_inv_t = d_inv.transpose();
        d_adj = d_inv_t * (d_inv_t * d_adj).transpose();
        d_adj.triangularView<Eigen::StrictlyUpper>() = d_adj.transpose().eval();
        r_adj -= c_adj.transpose() * b + d_adj * r;
        d_adj.diagonal() *= 0.5;
        d_adj.triangularView<Eigen::StrictlyUpper>().setZero();

        la.block(j, 0, w, j) = r_adj;
        la.block(j, j, w, w) = d_adj;
        la.block(k, 0, below, j) = b_adj;
        la.block(k, j, below, w) = c_adj;
    }
    return la;
}

}  // namespace blocklin
