#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "blocklin/runtime.hpp"

namespace blocklin {

using HostMatrix = Eigen::MatrixXd;

/// Which part of a matrix is semantically meaningful. Elements outside the
/// view are treated as zero by every kernel that reads the matrix.
enum class ViewTag : std::uint8_t { Entire, Lower, Upper, Diagonal };

const char* to_string(ViewTag v);

constexpr bool view_contains(ViewTag v, std::size_t i, std::size_t j) {
    switch (v) {
        case ViewTag::Entire:
            return true;
        case ViewTag::Lower:
            return j <= i;
        case ViewTag::Upper:
            return i <= j;
        case ViewTag::Diagonal:
            return i == j;
    }
    return true;
}

/// Smallest view covering both regions (result view of a sum).
ViewTag view_union(ViewTag a, ViewTag b);
/// Result view of a product of two matrices with the given views.
ViewTag view_product(ViewTag a, ViewTag b);
ViewTag view_transpose(ViewTag v);

/// A rows x cols row-major matrix in device memory.
///
/// Handles are cheap to copy and share the underlying buffer, so the read and
/// write event stacks travel with the data. Use copy() from kernels_basic for
/// an independent matrix.
class DeviceMatrix {
  public:
    DeviceMatrix() : DeviceMatrix(0, 0) {}
    DeviceMatrix(std::size_t rows, std::size_t cols, ViewTag view = ViewTag::Entire);

    std::size_t rows() const {
        return rows_;
    }
    std::size_t cols() const {
        return cols_;
    }
    std::size_t size() const {
        return rows_ * cols_;
    }
    bool empty() const {
        return size() == 0;
    }
    bool is_square() const {
        return rows_ == cols_;
    }

    ViewTag view() const {
        return view_;
    }
    void set_view(ViewTag v) {
        view_ = v;
    }

    const DeviceBuffer& buffer() const {
        return buf_;
    }

    EventList read_events() const {
        return buf_.read_events();
    }
    EventList write_events() const {
        return buf_.write_events();
    }

    /// Block until every pending kernel touching this matrix has completed.
    void wait() const;

  private:
    std::size_t rows_;
    std::size_t cols_;
    ViewTag view_;
    DeviceBuffer buf_;
};

inline KernelArg to_kernel_arg(const DeviceMatrix& m, ArgKind kind) {
    return KernelArg {m.buffer(), kind};
}

DeviceMatrix to_device(const HostMatrix& host, ViewTag view = ViewTag::Entire);
DeviceMatrix to_device(std::span<const double> row_major, std::size_t rows, std::size_t cols,
                       ViewTag view = ViewTag::Entire);
/// Column vector.
DeviceMatrix to_device(const std::vector<double>& v);

/// Blocking copy back to the host. Elements outside the view come back as 0.
HostMatrix from_device(const DeviceMatrix& m);

/// Number of elements in the packed form of an n x n triangular matrix.
constexpr std::size_t packed_size(std::size_t n) {
    return n * (n + 1) / 2;
}

/// Transfer only the triangle named by `view` (Lower or Upper) and expand it
/// on the device. Packing is row by row: for Lower, row i contributes
/// A(i,0..i); for Upper, row i contributes A(i,i..n-1).
DeviceMatrix packed_copy_to_device(std::span<const double> packed, std::size_t n, ViewTag view);
std::vector<double> packed_copy_from_device(const DeviceMatrix& m);

/// Host-side packing with the same convention, for tests and callers that
/// hold full matrices.
std::vector<double> pack_host(const HostMatrix& m, ViewTag view);

/// Value and adjoint pair of a matrix-valued autodiff variable.
struct VarMatrix {
    DeviceMatrix val;
    DeviceMatrix adj;

    std::size_t rows() const {
        return val.rows();
    }
    std::size_t cols() const {
        return val.cols();
    }
};

/// Pairs `val` with a zero adjoint of the same shape.
VarMatrix make_var(DeviceMatrix val);

}  // namespace blocklin
