#pragma once

#include <cstddef>

#include "blocklin/device_matrix.hpp"

namespace blocklin {

/// Work-group edge used by the elementwise kernels in this header.
inline constexpr std::size_t kBasicGroupSize = 64;

enum class ElementwiseOp : std::uint8_t { Add, Subtract };
enum class TriangularMap : std::uint8_t { LowerToUpper, UpperToLower };
enum class CheckKind : std::uint8_t { Nan, Symmetric, DiagonalZeros };

/// C = A op B on an m x n grid. The result view is view_union of the inputs.
DeviceMatrix elementwise(ElementwiseOp op, const DeviceMatrix& a, const DeviceMatrix& b);
DeviceMatrix add(const DeviceMatrix& a, const DeviceMatrix& b);
DeviceMatrix subtract(const DeviceMatrix& a, const DeviceMatrix& b);
DeviceMatrix operator+(const DeviceMatrix& a, const DeviceMatrix& b);
DeviceMatrix operator-(const DeviceMatrix& a, const DeviceMatrix& b);

/// target += scale * x, in place. Used for adjoint accumulation.
void accumulate(DeviceMatrix& target, const DeviceMatrix& x, double scale = 1.0);

/// Full variant scales every element; the diagonal variant copies A and
/// scales only min(m, n) diagonal elements.
DeviceMatrix scalar_multiply(const DeviceMatrix& a, double s, bool diagonal_only = false);

DeviceMatrix transpose(const DeviceMatrix& a);

/// Mirror one triangle onto the other, in place. The diagonal is untouched.
void triangular_transpose(DeviceMatrix& a, TriangularMap dir);

/// Fresh m x n zero matrix.
DeviceMatrix zeros(std::size_t rows, std::size_t cols);

/// Zero the region selected by `region` in place. With include_diagonal
/// false, Lower and Upper select the strict triangles.
void set_zeros(DeviceMatrix& a, ViewTag region = ViewTag::Entire, bool include_diagonal = true);

DeviceMatrix identity(std::size_t n);

/// `count` contiguous row-major n x n identities.
DeviceBuffer batch_identity(std::size_t count, std::size_t n);

/// Copy a rows x cols block. With a triangular view, only source elements
/// inside that view (in source coordinates) are copied.
void sub_block(const DeviceMatrix& src, DeviceMatrix& dst, std::size_t src_i, std::size_t src_j,
               std::size_t dst_i, std::size_t dst_j, std::size_t rows, std::size_t cols,
               ViewTag view = ViewTag::Entire);

/// New rows x cols matrix holding the block of `src` at (i, j).
DeviceMatrix block(const DeviceMatrix& src, std::size_t i, std::size_t j, std::size_t rows, std::size_t cols);

DeviceMatrix copy(const DeviceMatrix& a);

/// Nan and DiagonalZeros return true when the condition is found. Symmetric
/// returns true when max |A(i,j) - A(j,i)| <= tol.
bool check(CheckKind kind, const DeviceMatrix& a, double tol = 0.0);

DeviceMatrix unpack(const DeviceBuffer& packed, std::size_t n, ViewTag view);
DeviceBuffer pack(const DeviceMatrix& a);

}  // namespace blocklin
