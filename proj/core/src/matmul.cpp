#include "blocklin/matmul.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "blocklin/kernels_basic.hpp"
#include "kernel_util.hpp"

namespace blocklin {

using detail::ceil_div;
using detail::load;
using detail::view_arg;
using detail::view_code;

namespace {

constexpr auto In = ArgKind::In;
constexpr auto Out = ArgKind::Out;
constexpr auto S = ArgKind::Scalar;

// Range [start, end) of the inner index l for which A(i,l) * B(l,j) can be
// nonzero given the operand views.
struct InnerRange {
    std::size_t start;
    std::size_t end;
};

InnerRange inner_range(ViewTag va, ViewTag vb, std::size_t i, std::size_t j, std::size_t k) {
    std::size_t start = 0, end = k;
    if (va == ViewTag::Lower || va == ViewTag::Diagonal) {
        end = std::min(end, i + 1);
    }
    if (va == ViewTag::Upper || va == ViewTag::Diagonal) {
        start = std::max(start, i);
    }
    if (vb == ViewTag::Lower || vb == ViewTag::Diagonal) {
        start = std::max(start, j);
    }
    if (vb == ViewTag::Upper || vb == ViewTag::Diagonal) {
        end = std::min(end, j + 1);
    }
    return {start, end};
}

// args: C, A, B, n, k, m, viewA, viewB, wpt, tile
//
// Dimension 0 indexes output rows, dimension 1 groups of wpt output columns.
// A group covers a tile x tile block of C. Tiles of A and B are staged in
// local arrays, then every item adds its wpt partial products. The inner
// index runs in ascending order for every element.
const Kernel gemm_kernel(
    "gemm", {Out, In, In, S, S, S, S, S, S, S}, GroupBody([](const WorkGroup& g, const KernelArgs& a) {
        const std::size_t k = a.size(4), m = a.size(5), wpt = a.size(8), tile = a.size(9);
        const ViewTag va = view_arg(a, 6), vb = view_arg(a, 7);
        const auto A = a.in(1);
        const auto B = a.in(2);
        auto C = a.out(0);

        const std::size_t row0 = g.global_offset(0);
        const std::size_t col0 = g.global_offset(1) * wpt;
        const std::size_t nrows = g.active(0);
        const std::size_t ncols = std::min(tile, m - std::min(m, col0));
        if (nrows == 0 || ncols == 0) {
            return;
        }

        // k-span touched by any element of this block
        std::size_t kmin = k, kmax = 0;
        for (std::size_t r = 0; r < nrows; ++r) {
            for (std::size_t c = 0; c < ncols; ++c) {
                const auto rg = inner_range(va, vb, row0 + r, col0 + c, k);
                if (rg.start < rg.end) {
                    kmin = std::min(kmin, rg.start);
                    kmax = std::max(kmax, rg.end);
                }
            }
        }

        std::vector<double> acc(tile * tile, 0.0);
        std::vector<double> a_tile(tile * tile), b_tile(tile * tile);

        for (std::size_t k0 = kmin - kmin % tile; k0 < kmax; k0 += tile) {
            const std::size_t kw = std::min(tile, k - k0);
            // cooperative load; out-of-range entries read as zero
            for (std::size_t r = 0; r < nrows; ++r) {
                for (std::size_t c = 0; c < kw; ++c) {
                    a_tile[r * tile + c] = load(A, k, row0 + r, k0 + c, va);
                }
            }
            for (std::size_t r = 0; r < kw; ++r) {
                for (std::size_t c = 0; c < ncols; ++c) {
                    b_tile[r * tile + c] = load(B, m, k0 + r, col0 + c, vb);
                }
            }
            g.for_each_item([&](const WorkItem& it) {
                const std::size_t r = it.local[0];
                for (std::size_t w = 0; w < wpt; ++w) {
                    const std::size_t c = it.local[1] * wpt + w;
                    if (c >= ncols) {
                        break;
                    }
                    const auto rg = inner_range(va, vb, row0 + r, col0 + c, k);
                    const std::size_t lo = std::max(rg.start, k0), hi = std::min(rg.end, k0 + kw);
                    double s = acc[r * tile + c];
                    for (std::size_t l = lo; l < hi; ++l) {
                        s += a_tile[r * tile + (l - k0)] * b_tile[(l - k0) * tile + c];
                    }
                    acc[r * tile + c] = s;
                }
            });
        }

        g.for_each_item([&](const WorkItem& it) {
            const std::size_t r = it.local[0];
            for (std::size_t w = 0; w < wpt; ++w) {
                const std::size_t c = it.local[1] * wpt + w;
                if (c >= ncols) {
                    break;
                }
                C[(row0 + r) * m + col0 + c] = acc[r * tile + c];
            }
        });
    }));

// args: Cs, A, B, n, k, m, viewA, viewB, s, wpt
// Item (i, jw, p) writes partial p of C(i, jw*wpt .. jw*wpt+wpt-1).
const Kernel gemm_split_kernel(
    "gemm_split", {Out, In, In, S, S, S, S, S, S, S}, ItemBody([](const WorkItem& it, const KernelArgs& a) {
        const std::size_t n = a.size(3), k = a.size(4), m = a.size(5), s = a.size(8), wpt = a.size(9);
        const ViewTag va = view_arg(a, 6), vb = view_arg(a, 7);
        const std::size_t i = it.global[0], p = it.global[2];
        const std::size_t chunk = ceil_div(k, s);
        const auto A = a.in(1);
        const auto B = a.in(2);
        auto Cs = a.out(0);
        for (std::size_t w = 0; w < wpt; ++w) {
            const std::size_t j = it.global[1] * wpt + w;
            if (j >= m) {
                break;
            }
            const auto rg = inner_range(va, vb, i, j, k);
            const std::size_t lo = std::max(rg.start, p * chunk);
            const std::size_t hi = std::min(rg.end, std::min(k, (p + 1) * chunk));
            double acc = 0.0;
            for (std::size_t l = lo; l < hi; ++l) {
                acc += load(A, k, i, l, va) * load(B, m, l, j, vb);
            }
            Cs[p * n * m + i * m + j] = acc;
        }
    }));

// args: C, Cs, n*m, s
const Kernel add_batch_kernel("add_batch", {Out, In, S, S}, ItemBody([](const WorkItem& it, const KernelArgs& a) {
                                  const std::size_t e = it.global[0], nm = a.size(2), s = a.size(3);
                                  const auto Cs = a.in(1);
                                  double acc = Cs[e];
                                  for (std::size_t p = 1; p < s; ++p) {
                                      acc += Cs[p * nm + e];
                                  }
                                  a.out(0)[e] = acc;
                              }));

// args: C, A, n, k, viewA, wpt
const Kernel multiply_transpose_kernel(
    "multiply_transpose", {Out, In, S, S, S, S}, ItemBody([](const WorkItem& it, const KernelArgs& a) {
        const std::size_t n = a.size(2), k = a.size(3), wpt = a.size(5);
        const ViewTag va = view_arg(a, 4);
        const std::size_t i = it.global[0];
        const auto A = a.in(1);
        auto C = a.out(0);
        for (std::size_t w = 0; w < wpt; ++w) {
            const std::size_t j = it.global[1] * wpt + w;
            if (j >= n || j > i) {
                break;
            }
            // A(j, l) is row l of A^T's column j, so A^T carries the transposed view
            const auto rg = inner_range(va, view_transpose(va), i, j, k);
            double acc = 0.0;
            for (std::size_t l = rg.start; l < rg.end; ++l) {
                acc += load(A, k, i, l, va) * load(A, k, j, l, va);
            }
            C[i * n + j] = acc;
            C[j * n + i] = acc;
        }
    }));

// args: R, A, v, n, m, viewA. One group per row.
const Kernel mv_kernel("matrix_vector_multiply", {Out, In, In, S, S, S},
                       GroupBody([](const WorkGroup& g, const KernelArgs& a) {
                           const std::size_t m = a.size(4), wg = g.local_size(0), row = g.group_id(0);
                           const ViewTag va = view_arg(a, 5);
                           const auto A = a.in(1);
                           const auto v = a.in(2);
                           std::vector<double> partial(wg, 0.0);
                           g.for_each_item([&](const WorkItem& it) {
                               double s = 0.0;
                               for (std::size_t l = it.local[0]; l < m; l += wg) {
                                   s += load(A, m, row, l, va) * v[l];
                               }
                               partial[it.local[0]] = s;
                           });
                           a.out(0)[row] = detail::tree_reduce(partial);
                       }));

// args: R, r, A, n, m, viewA. One group per column.
const Kernel rv_kernel("row_vector_matrix_multiply", {Out, In, In, S, S, S},
                       GroupBody([](const WorkGroup& g, const KernelArgs& a) {
                           const std::size_t n = a.size(3), m = a.size(4), wg = g.local_size(0);
                           const std::size_t col = g.group_id(0);
                           const ViewTag va = view_arg(a, 5);
                           const auto r = a.in(1);
                           const auto A = a.in(2);
                           std::vector<double> partial(wg, 0.0);
                           g.for_each_item([&](const WorkItem& it) {
                               double s = 0.0;
                               for (std::size_t l = it.local[0]; l < n; l += wg) {
                                   s += r[l] * load(A, m, l, col, va);
                               }
                               partial[it.local[0]] = s;
                           });
                           a.out(0)[col] = detail::tree_reduce(partial);
                       }));

void require_inner(const DeviceMatrix& a, const DeviceMatrix& b, const char* what) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument(std::string(what) + ": inner dimensions differ (" + std::to_string(a.rows()) + "x"
                                    + std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x"
                                    + std::to_string(b.cols()) + ")");
    }
}

}  // namespace

void GemmConfig::validate() const {
    if (wpt == 0 || tile == 0 || offload_min_nm == 0 || offload_min_k == 0 || wg_vec == 0) {
        throw std::invalid_argument("GemmConfig: wpt, tile, offload thresholds and wg_vec must be positive");
    }
    if (tile % wpt != 0) {
        throw std::invalid_argument("GemmConfig: wpt=" + std::to_string(wpt) + " does not divide tile="
                                    + std::to_string(tile));
    }
}

DeviceMatrix gemm(const DeviceMatrix& a, const DeviceMatrix& b, const GemmConfig& cfg) {
    cfg.validate();
    require_inner(a, b, "gemm");
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    DeviceMatrix c(n, m, view_product(a.view(), b.view()));
    gemm_kernel(NDRange(n, ceil_div(m, cfg.wpt)), NDRange(cfg.tile, cfg.tile / cfg.wpt), c, a, b, n, k, m,
                view_code(a.view()), view_code(b.view()), cfg.wpt, cfg.tile);
    return c;
}

std::size_t auto_split(std::size_t n, std::size_t m, std::size_t k) {
    return std::clamp<std::size_t>(k / std::max<std::size_t>(n * m, 1), 1, 16);
}

DeviceMatrix gemm_big_k(const DeviceMatrix& a, const DeviceMatrix& b, const GemmConfig& cfg) {
    cfg.validate();
    require_inner(a, b, "gemm_big_k");
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    const std::size_t s = cfg.split_s != 0 ? cfg.split_s : auto_split(n, m, k);
    DeviceMatrix c(n, m, view_product(a.view(), b.view()));
    DeviceBuffer partials = alloc_buffer(s * n * m);
    const std::size_t edge = detail::kTile2d;
    gemm_split_kernel(NDRange(n, ceil_div(m, cfg.wpt), s), NDRange(edge, edge, 1), partials, a, b, n, k, m,
                      view_code(a.view()), view_code(b.view()), s, cfg.wpt);
    add_batch_kernel(NDRange(n * m), NDRange(kBasicGroupSize), c, partials, n * m, s);
    return c;
}

DeviceMatrix multiply_transpose(const DeviceMatrix& a, const GemmConfig& cfg) {
    cfg.validate();
    const std::size_t n = a.rows(), k = a.cols();
    DeviceMatrix c(n, n);
    const std::size_t edge = detail::kTile2d;
    multiply_transpose_kernel(NDRange(n, ceil_div(n, cfg.wpt)), NDRange(edge, edge), c, a, n, k,
                              view_code(a.view()), cfg.wpt);
    return c;
}

DeviceMatrix mv_multiply(const DeviceMatrix& a, const DeviceMatrix& v, const GemmConfig& cfg) {
    cfg.validate();
    require_inner(a, v, "mv_multiply");
    if (v.cols() != 1) {
        throw std::invalid_argument("mv_multiply: right operand must be a column vector");
    }
    DeviceMatrix r(a.rows(), 1);
    mv_kernel(NDRange(a.rows() * cfg.wg_vec), NDRange(cfg.wg_vec), r, a, v, a.rows(), a.cols(),
              view_code(a.view()));
    return r;
}

DeviceMatrix rv_multiply(const DeviceMatrix& r, const DeviceMatrix& a, const GemmConfig& cfg) {
    cfg.validate();
    require_inner(r, a, "rv_multiply");
    if (r.rows() != 1) {
        throw std::invalid_argument("rv_multiply: left operand must be a row vector");
    }
    DeviceMatrix out(1, a.cols());
    rv_kernel(NDRange(a.cols() * cfg.wg_vec), NDRange(cfg.wg_vec), out, r, a, a.rows(), a.cols(),
              view_code(a.view()));
    return out;
}

DeviceMatrix multiply(const DeviceMatrix& a, const DeviceMatrix& b, const GemmConfig& cfg) {
    require_inner(a, b, "multiply");
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    if (m == 1 && n > 1) {
        return mv_multiply(a, b, cfg);
    }
    if (n == 1 && m > 1) {
        return rv_multiply(a, b, cfg);
    }
    const std::size_t s = cfg.split_s != 0 ? cfg.split_s : auto_split(n, m, k);
    if (s > 1) {
        return gemm_big_k(a, b, cfg);
    }
    return gemm(a, b, cfg);
}

DeviceMatrix operator*(const DeviceMatrix& a, const DeviceMatrix& b) {
    return multiply(a, b);
}

bool should_offload_gemm(std::size_t n, std::size_t m, std::size_t k, const GemmConfig& cfg) {
    return n * m > cfg.offload_min_nm && k > cfg.offload_min_k;
}

HostMatrix multiply(const HostMatrix& a, const HostMatrix& b, const GemmConfig& cfg) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("multiply: inner dimensions differ");
    }
    const auto n = static_cast<std::size_t>(a.rows()), k = static_cast<std::size_t>(a.cols());
    const auto m = static_cast<std::size_t>(b.cols());
    if (!should_offload_gemm(n, m, k, cfg)) {
        return a * b;
    }
    return from_device(multiply(to_device(a), to_device(b), cfg));
}

}  // namespace blocklin
