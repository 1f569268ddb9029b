#include "blocklin/kernels_basic.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "kernel_util.hpp"

namespace blocklin {

using detail::group2d;
using detail::load;
using detail::view_arg;
using detail::view_code;

namespace {

constexpr auto In = ArgKind::In;
constexpr auto Out = ArgKind::Out;
constexpr auto InOut = ArgKind::InOut;
constexpr auto S = ArgKind::Scalar;

// C(i,j) = A(i,j) + B(i,j)
const Kernel add_kernel("add", {Out, In, In, S, S, S, S}, ItemBody([](const WorkItem& it, const KernelArgs& a) {
                            const std::size_t i = it.global[0], j = it.global[1], cols = a.size(4);
                            a.out(0)[i * cols + j] = load(a.in(1), cols, i, j, view_arg(a, 5))
                                                     + load(a.in(2), cols, i, j, view_arg(a, 6));
                        }));

const Kernel subtract_kernel("subtract", {Out, In, In, S, S, S, S},
                             ItemBody([](const WorkItem& it, const KernelArgs& a) {
                                 const std::size_t i = it.global[0], j = it.global[1], cols = a.size(4);
                                 a.out(0)[i * cols + j] = load(a.in(1), cols, i, j, view_arg(a, 5))
                                                          - load(a.in(2), cols, i, j, view_arg(a, 6));
                             }));

const Kernel accumulate_kernel("accumulate", {InOut, In, S, S, S, S},
                               ItemBody([](const WorkItem& it, const KernelArgs& a) {
                                   const std::size_t i = it.global[0], j = it.global[1], cols = a.size(3);
                                   a.out(0)[i * cols + j] += a.real(5) * load(a.in(1), cols, i, j, view_arg(a, 4));
                               }));

const Kernel scalar_mul_kernel("scalar_mul", {Out, In, S, S, S, S},
                               ItemBody([](const WorkItem& it, const KernelArgs& a) {
                                   const std::size_t i = it.global[0], j = it.global[1], cols = a.size(3);
                                   a.out(0)[i * cols + j] = a.real(5) * load(a.in(1), cols, i, j, view_arg(a, 4));
                               }));

const Kernel scalar_mul_diagonal_kernel("scalar_mul_diagonal", {InOut, S, S, S},
                                        ItemBody([](const WorkItem& it, const KernelArgs& a) {
                                            const std::size_t i = it.global[0], cols = a.size(2);
                                            a.out(0)[i * cols + i] *= a.real(3);
                                        }));

const Kernel copy_kernel("copy", {Out, In, S, S, S}, ItemBody([](const WorkItem& it, const KernelArgs& a) {
                             const std::size_t i = it.global[0], j = it.global[1], cols = a.size(3);
                             a.out(0)[i * cols + j] = load(a.in(1), cols, i, j, view_arg(a, 4));
                         }));

// B(j,i) = A(i,j)
const Kernel transpose_kernel("transpose", {Out, In, S, S, S}, ItemBody([](const WorkItem& it, const KernelArgs& a) {
                                  const std::size_t i = it.global[0], j = it.global[1];
                                  const std::size_t rows = a.size(2), cols = a.size(3);
                                  a.out(0)[j * rows + i] = load(a.in(1), cols, i, j, view_arg(a, 4));
                              }));

// Threads on one side of the diagonal copy across it; the others do nothing.
const Kernel triangular_transpose_kernel(
    "triangular_transpose", {InOut, S, S}, ItemBody([](const WorkItem& it, const KernelArgs& a) {
        const std::size_t i = it.global[0], j = it.global[1], n = a.size(1);
        const auto dir = static_cast<TriangularMap>(a.integer(2));
        auto m = a.out(0);
        if (dir == TriangularMap::LowerToUpper && i > j) {
            m[j * n + i] = m[i * n + j];
        } else if (dir == TriangularMap::UpperToLower && i < j) {
            m[j * n + i] = m[i * n + j];
        }
    }));

const Kernel zeros_kernel("zeros", {Out, S, S, S, S}, ItemBody([](const WorkItem& it, const KernelArgs& a) {
                              const std::size_t i = it.global[0], j = it.global[1], cols = a.size(1);
                              const ViewTag region = view_arg(a, 3);
                              const bool include_diagonal = a.integer(4) != 0;
                              if (view_contains(region, i, j) && (include_diagonal || i != j)) {
                                  a.out(0)[i * cols + j] = 0.0;
                              }
                          }));

const Kernel identity_kernel("identity", {Out, S}, ItemBody([](const WorkItem& it, const KernelArgs& a) {
                                 const std::size_t i = it.global[0], j = it.global[1], n = a.size(1);
                                 a.out(0)[i * n + j] = i == j ? 1.0 : 0.0;
                             }));

// Thread (b, i, j): element (i, j) of identity b.
const Kernel batch_identity_kernel("batch_identity", {Out, S}, ItemBody([](const WorkItem& it, const KernelArgs& a) {
                                       const std::size_t b = it.global[0], i = it.global[1], j = it.global[2];
                                       const std::size_t n = a.size(1);
                                       a.out(0)[b * n * n + i * n + j] = i == j ? 1.0 : 0.0;
                                   }));

// args: dst, src, src_cols, dst_cols, src_i, src_j, dst_i, dst_j, region, src_view
const Kernel sub_block_kernel("sub_block", {Out, In, S, S, S, S, S, S, S, S},
                              ItemBody([](const WorkItem& it, const KernelArgs& a) {
                                  const std::size_t si = a.size(4) + it.global[0];
                                  const std::size_t sj = a.size(5) + it.global[1];
                                  if (!view_contains(view_arg(a, 8), si, sj)) {
                                      return;
                                  }
                                  const std::size_t di = a.size(6) + it.global[0];
                                  const std::size_t dj = a.size(7) + it.global[1];
                                  a.out(0)[di * a.size(3) + dj] = load(a.in(1), a.size(2), si, sj, view_arg(a, 9));
                              }));

const Kernel check_nan_kernel("check_nan", {Out, In, S, S}, ItemBody([](const WorkItem& it, const KernelArgs& a) {
                                  const std::size_t i = it.global[0], j = it.global[1], cols = a.size(3);
                                  if (std::isnan(a.in(1)[i * cols + j])) {
                                      a.out_i32(0)[0] = 1;
                                  }
                              }));

// The flag is set to 1 before launch; threads only ever reset it.
const Kernel check_symmetric_kernel("check_symmetric", {Out, In, S, S, S},
                                    ItemBody([](const WorkItem& it, const KernelArgs& a) {
                                        const std::size_t i = it.global[0], j = it.global[1], n = a.size(2);
                                        const ViewTag v = view_arg(a, 4);
                                        const double diff = load(a.in(1), n, i, j, v) - load(a.in(1), n, j, i, v);
                                        if (!(std::abs(diff) <= a.real(3))) {
                                            a.out_i32(0)[0] = 0;
                                        }
                                    }));

const Kernel check_diagonal_zeros_kernel("check_diagonal_zeros", {Out, In, S},
                                         ItemBody([](const WorkItem& it, const KernelArgs& a) {
                                             const std::size_t i = it.global[0], cols = a.size(2);
                                             if (a.in(1)[i * cols + i] == 0.0) {
                                                 a.out_i32(0)[0] = 1;
                                             }
                                         }));

std::size_t packed_index(ViewTag view, std::size_t n, std::size_t i, std::size_t j) {
    if (view == ViewTag::Lower) {
        return i * (i + 1) / 2 + j;
    }
    // row i starts after sum_{r<i} (n - r) elements
    return i * n - i * (i - 1) / 2 + (j - i);
}

const Kernel pack_kernel("pack", {Out, In, S, S}, ItemBody([](const WorkItem& it, const KernelArgs& a) {
                             const std::size_t i = it.global[0], j = it.global[1], n = a.size(2);
                             const ViewTag v = view_arg(a, 3);
                             if (view_contains(v, i, j)) {
                                 a.out(0)[packed_index(v, n, i, j)] = a.in(1)[i * n + j];
                             }
                         }));

const Kernel unpack_kernel("unpack", {Out, In, S, S}, ItemBody([](const WorkItem& it, const KernelArgs& a) {
                               const std::size_t i = it.global[0], j = it.global[1], n = a.size(2);
                               const ViewTag v = view_arg(a, 3);
                               a.out(0)[i * n + j] = view_contains(v, i, j) ? a.in(1)[packed_index(v, n, i, j)] : 0.0;
                           }));

void require_same_shape(const DeviceMatrix& a, const DeviceMatrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x"
                                    + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x"
                                    + std::to_string(b.cols()) + ")");
    }
}

void require_square(const DeviceMatrix& a, const char* what) {
    if (!a.is_square()) {
        throw std::invalid_argument(std::string(what) + ": matrix must be square, got " + std::to_string(a.rows())
                                    + "x" + std::to_string(a.cols()));
    }
}

void require_triangular(ViewTag v, const char* what) {
    if (v != ViewTag::Lower && v != ViewTag::Upper) {
        throw std::invalid_argument(std::string(what) + ": view must be Lower or Upper");
    }
}

}  // namespace

DeviceMatrix elementwise(ElementwiseOp op, const DeviceMatrix& a, const DeviceMatrix& b) {
    require_same_shape(a, b, op == ElementwiseOp::Add ? "add" : "subtract");
    DeviceMatrix c(a.rows(), a.cols(), view_union(a.view(), b.view()));
    const Kernel& k = op == ElementwiseOp::Add ? add_kernel : subtract_kernel;
    k(NDRange(a.rows(), a.cols()), group2d(), c, a, b, a.rows(), a.cols(), view_code(a.view()), view_code(b.view()));
    return c;
}

DeviceMatrix add(const DeviceMatrix& a, const DeviceMatrix& b) {
    return elementwise(ElementwiseOp::Add, a, b);
}

DeviceMatrix subtract(const DeviceMatrix& a, const DeviceMatrix& b) {
    return elementwise(ElementwiseOp::Subtract, a, b);
}

DeviceMatrix operator+(const DeviceMatrix& a, const DeviceMatrix& b) {
    return add(a, b);
}

DeviceMatrix operator-(const DeviceMatrix& a, const DeviceMatrix& b) {
    return subtract(a, b);
}

void accumulate(DeviceMatrix& target, const DeviceMatrix& x, double scale) {
    require_same_shape(target, x, "accumulate");
    accumulate_kernel(NDRange(x.rows(), x.cols()), group2d(), target, x, x.rows(), x.cols(), view_code(x.view()),
                      scale);
    target.set_view(view_union(target.view(), x.view()));
}

DeviceMatrix scalar_multiply(const DeviceMatrix& a, double s, bool diagonal_only) {
    if (!diagonal_only) {
        DeviceMatrix b(a.rows(), a.cols(), a.view());
        scalar_mul_kernel(NDRange(a.rows(), a.cols()), group2d(), b, a, a.rows(), a.cols(), view_code(a.view()), s);
        return b;
    }
    DeviceMatrix b = copy(a);
    const std::size_t d = std::min(a.rows(), a.cols());
    scalar_mul_diagonal_kernel(NDRange(d), NDRange(kBasicGroupSize), b, a.rows(), a.cols(), s);
    return b;
}

DeviceMatrix transpose(const DeviceMatrix& a) {
    DeviceMatrix b(a.cols(), a.rows(), view_transpose(a.view()));
    transpose_kernel(NDRange(a.rows(), a.cols()), group2d(), b, a, a.rows(), a.cols(), view_code(a.view()));
    return b;
}

void triangular_transpose(DeviceMatrix& a, TriangularMap dir) {
    require_square(a, "triangular_transpose");
    // Materialize the excluded triangle as zeros first so the source side is
    // well defined regardless of what the buffer held.
    if (a.view() == ViewTag::Lower) {
        set_zeros(a, ViewTag::Upper, false);
    } else if (a.view() == ViewTag::Upper) {
        set_zeros(a, ViewTag::Lower, false);
    }
    triangular_transpose_kernel(NDRange(a.rows(), a.cols()), group2d(), a, a.rows(), static_cast<std::int64_t>(dir));
    a.set_view(ViewTag::Entire);
}

DeviceMatrix zeros(std::size_t rows, std::size_t cols) {
    DeviceMatrix m(rows, cols);
    set_zeros(m);
    return m;
}

void set_zeros(DeviceMatrix& a, ViewTag region, bool include_diagonal) {
    zeros_kernel(NDRange(a.rows(), a.cols()), group2d(), a, a.cols(), a.rows(), view_code(region),
                 static_cast<std::int64_t>(include_diagonal));
    if (a.view() == ViewTag::Entire && !include_diagonal) {
        if (region == ViewTag::Upper) {
            a.set_view(ViewTag::Lower);
        } else if (region == ViewTag::Lower) {
            a.set_view(ViewTag::Upper);
        }
    }
}

DeviceMatrix identity(std::size_t n) {
    DeviceMatrix m(n, n);
    identity_kernel(NDRange(n, n), group2d(), m, n);
    return m;
}

DeviceBuffer batch_identity(std::size_t count, std::size_t n) {
    DeviceBuffer b = alloc_buffer(count * n * n);
    batch_identity_kernel(NDRange(count, n, n), NDRange(1, detail::kTile2d, detail::kTile2d), b, n);
    return b;
}

void sub_block(const DeviceMatrix& src, DeviceMatrix& dst, std::size_t src_i, std::size_t src_j, std::size_t dst_i,
               std::size_t dst_j, std::size_t rows, std::size_t cols, ViewTag view) {
    if (src_i + rows > src.rows() || src_j + cols > src.cols()) {
        throw std::out_of_range("sub_block: source block exceeds the " + std::to_string(src.rows()) + "x"
                                + std::to_string(src.cols()) + " source");
    }
    if (dst_i + rows > dst.rows() || dst_j + cols > dst.cols()) {
        throw std::out_of_range("sub_block: destination block exceeds the " + std::to_string(dst.rows()) + "x"
                                + std::to_string(dst.cols()) + " destination");
    }
    if (rows == 0 || cols == 0) {
        return;
    }
    sub_block_kernel(NDRange(rows, cols), group2d(), dst, src, src.cols(), dst.cols(), src_i, src_j, dst_i, dst_j,
                     view_code(view), view_code(src.view()));
}

DeviceMatrix block(const DeviceMatrix& src, std::size_t i, std::size_t j, std::size_t rows, std::size_t cols) {
    DeviceMatrix out(rows, cols);
    sub_block(src, out, i, j, 0, 0, rows, cols);
    return out;
}

DeviceMatrix copy(const DeviceMatrix& a) {
    DeviceMatrix b(a.rows(), a.cols(), a.view());
    copy_kernel(NDRange(a.rows(), a.cols()), group2d(), b, a, a.rows(), a.cols(), view_code(a.view()));
    return b;
}

bool check(CheckKind kind, const DeviceMatrix& a, double tol) {
    DeviceBuffer flag = alloc_buffer(1, ElementType::I32);
    switch (kind) {
        case CheckKind::Nan:
            check_nan_kernel(NDRange(a.rows(), a.cols()), group2d(), flag, a, a.rows(), a.cols());
            return flag.read_i32()[0] != 0;
        case CheckKind::Symmetric: {
            require_square(a, "check(Symmetric)");
            const std::int32_t preset = 1;
            flag.write(std::span<const std::int32_t>(&preset, 1));
            check_symmetric_kernel(NDRange(a.rows(), a.cols()), group2d(), flag, a, a.rows(), tol,
                                   view_code(a.view()));
            return flag.read_i32()[0] != 0;
        }
        case CheckKind::DiagonalZeros:
            require_square(a, "check(DiagonalZeros)");
            check_diagonal_zeros_kernel(NDRange(a.rows()), NDRange(kBasicGroupSize), flag, a, a.cols());
            return flag.read_i32()[0] != 0;
    }
    return false;
}

DeviceMatrix unpack(const DeviceBuffer& packed, std::size_t n, ViewTag view) {
    require_triangular(view, "unpack");
    if (packed.size() != packed_size(n)) {
        throw std::invalid_argument("unpack: packed length " + std::to_string(packed.size()) + " does not match n="
                                    + std::to_string(n) + " (expected " + std::to_string(packed_size(n)) + ")");
    }
    DeviceMatrix m(n, n, view);
    unpack_kernel(NDRange(n, n), group2d(), m, packed, n, view_code(view));
    return m;
}

DeviceBuffer pack(const DeviceMatrix& a) {
    require_square(a, "pack");
    require_triangular(a.view(), "pack");
    DeviceBuffer packed = alloc_buffer(packed_size(a.rows()));
    pack_kernel(NDRange(a.rows(), a.cols()), group2d(), packed, a, a.rows(), view_code(a.view()));
    return packed;
}

}  // namespace blocklin
