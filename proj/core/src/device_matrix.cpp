#include "blocklin/device_matrix.hpp"

#include <stdexcept>
#include <string>

#include "blocklin/kernels_basic.hpp"

namespace blocklin {

const char* to_string(ViewTag v) {
    switch (v) {
        case ViewTag::Entire:
            return "Entire";
        case ViewTag::Lower:
            return "Lower";
        case ViewTag::Upper:
            return "Upper";
        case ViewTag::Diagonal:
            return "Diagonal";
    }
    return "?";
}

ViewTag view_union(ViewTag a, ViewTag b) {
    if (a == b) {
        return a;
    }
    if (a == ViewTag::Diagonal) {
        return b;
    }
    if (b == ViewTag::Diagonal) {
        return a;
    }
    return ViewTag::Entire;
}

ViewTag view_product(ViewTag a, ViewTag b) {
    // Diagonal acts like the identity pattern: it preserves the other side.
    if (a == ViewTag::Diagonal) {
        return b;
    }
    if (b == ViewTag::Diagonal) {
        return a;
    }
    if (a == b && a != ViewTag::Entire) {
        return a;
    }
    return ViewTag::Entire;
}

ViewTag view_transpose(ViewTag v) {
    switch (v) {
        case ViewTag::Lower:
            return ViewTag::Upper;
        case ViewTag::Upper:
            return ViewTag::Lower;
        default:
            return v;
    }
}

DeviceMatrix::DeviceMatrix(std::size_t rows, std::size_t cols, ViewTag view)
    : rows_(rows), cols_(cols), view_(view), buf_(alloc_buffer(rows * cols)) {}

void DeviceMatrix::wait() const {
    wait_for(buf_.read_events());
    wait_for(buf_.write_events());
}

DeviceMatrix to_device(std::span<const double> row_major, std::size_t rows, std::size_t cols, ViewTag view) {
    if (row_major.size() != rows * cols) {
        throw std::invalid_argument("to_device: " + std::to_string(row_major.size()) + " elements for a "
                                    + std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
    }
    DeviceMatrix m(rows, cols, view);
    DeviceBuffer b = m.buffer();
    b.write(row_major);
    return m;
}

DeviceMatrix to_device(const HostMatrix& host, ViewTag view) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = host;
    return to_device(std::span<const double>(rm.data(), static_cast<std::size_t>(rm.size())),
                     static_cast<std::size_t>(host.rows()), static_cast<std::size_t>(host.cols()), view);
}

DeviceMatrix to_device(const std::vector<double>& v) {
    return to_device(std::span<const double>(v), v.size(), 1);
}

HostMatrix from_device(const DeviceMatrix& m) {
    const std::vector<double> data = m.buffer().read_f64();
    HostMatrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(i, j) = view_contains(m.view(), i, j) ? data[i * m.cols() + j] : 0.0;
        }
    }
    return out;
}

DeviceMatrix packed_copy_to_device(std::span<const double> packed, std::size_t n, ViewTag view) {
    if (view != ViewTag::Lower && view != ViewTag::Upper) {
        throw std::invalid_argument("packed_copy_to_device: view must be Lower or Upper");
    }
    if (packed.size() != packed_size(n)) {
        throw std::invalid_argument("packed_copy_to_device: got " + std::to_string(packed.size())
                                    + " elements, an order-" + std::to_string(n) + " triangle needs "
                                    + std::to_string(packed_size(n)));
    }
    DeviceBuffer staging = alloc_buffer(packed.size());
    staging.write(packed);
    return unpack(staging, n, view);
}

std::vector<double> packed_copy_from_device(const DeviceMatrix& m) {
    if (m.view() != ViewTag::Lower && m.view() != ViewTag::Upper) {
        throw std::invalid_argument(std::string("packed_copy_from_device: view must be Lower or Upper, got ")
                                    + to_string(m.view()));
    }
    return pack(m).read_f64();
}

std::vector<double> pack_host(const HostMatrix& m, ViewTag view) {
    if (m.rows() != m.cols()) {
        throw std::invalid_argument("pack_host: matrix must be square");
    }
    const auto n = static_cast<std::size_t>(m.rows());
    std::vector<double> out;
    out.reserve(packed_size(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (view == ViewTag::Lower) {
            for (std::size_t j = 0; j <= i; ++j) {
                out.push_back(m(i, j));
            }
        } else if (view == ViewTag::Upper) {
            for (std::size_t j = i; j < n; ++j) {
                out.push_back(m(i, j));
            }
        } else {
            throw std::invalid_argument("pack_host: view must be Lower or Upper");
        }
    }
    return out;
}

VarMatrix make_var(DeviceMatrix val) {
    DeviceMatrix adj(val.rows(), val.cols());
    return VarMatrix {std::move(val), std::move(adj)};
}

}  // namespace blocklin
