#include <gtest/gtest.h>

#include <numeric>

#include "blocklin/device_matrix.hpp"
#include "blocklin/kernels_basic.hpp"
#include "oracles.hpp"

using namespace blocklin;

namespace {

DeviceOptions profiling_on() {
    DeviceOptions o = Device::instance().options();
    o.profiling = true;
    return o;
}

std::size_t bytes_to_device() {
    std::size_t b = 0;
    for (const auto& t : Device::instance().transfers()) {
        if (t.direction == TransferDirection::ToDevice) {
            b += t.bytes;
        }
    }
    return b;
}

std::size_t bytes_from_device() {
    std::size_t b = 0;
    for (const auto& t : Device::instance().transfers()) {
        if (t.direction == TransferDirection::FromDevice) {
            b += t.bytes;
        }
    }
    return b;
}

}  // namespace

TEST(DeviceMatrix, RowMajorLayout) {
    HostMatrix h(2, 2);
    h << 1, 2, 3, 4;
    const DeviceMatrix d = to_device(h);
    EXPECT_EQ(d.rows(), 2u);
    EXPECT_EQ(d.cols(), 2u);
    EXPECT_EQ(d.buffer().read_f64(), (std::vector<double> {1, 2, 3, 4}));
}

TEST(DeviceMatrix, EmptyMatrix) {
    const DeviceMatrix d = to_device(HostMatrix(0, 0));
    EXPECT_TRUE(d.empty());
    EXPECT_EQ(d.buffer().size(), 0u);
    EXPECT_EQ(from_device(d).size(), 0);
}

TEST(DeviceMatrix, RoundTrip) {
    auto g = oracle::rng(1);
    const HostMatrix m = oracle::random_matrix(7, 5, g);
    EXPECT_EQ(from_device(to_device(m)), m);
    const HostMatrix col = oracle::random_matrix(9, 1, g);
    std::vector<double> v(col.data(), col.data() + col.size());
    EXPECT_EQ(from_device(to_device(v)), col);
}

TEST(DeviceMatrix, ViewMasksHostCopy) {
    HostMatrix h(3, 3);
    h << 1, 99, 99, 2, 3, 99, 4, 5, 6;
    const HostMatrix lower = from_device(to_device(h, ViewTag::Lower));
    HostMatrix want(3, 3);
    want << 1, 0, 0, 2, 3, 0, 4, 5, 6;
    EXPECT_EQ(lower, want);
    const HostMatrix diag = from_device(to_device(h, ViewTag::Diagonal));
    EXPECT_EQ(diag, HostMatrix(h.diagonal().asDiagonal()));
    const HostMatrix upper = from_device(to_device(h, ViewTag::Upper));
    EXPECT_EQ(upper, HostMatrix(h.triangularView<Eigen::Upper>()));
}

TEST(DeviceMatrix, FromDeviceSeesPendingKernel) {
    HostMatrix h = HostMatrix::Ones(40, 40);
    DeviceMatrix d = to_device(h);
    DeviceMatrix e = scalar_multiply(d, 3.0);
    EXPECT_EQ(from_device(e), HostMatrix::Constant(40, 40, 3.0));
}

TEST(DeviceMatrix, PackedLowerExample) {
    const std::vector<double> p {1, 2, 3, 4, 5, 6};
    HostMatrix want(3, 3);
    want << 1, 0, 0, 2, 3, 0, 4, 5, 6;
    const DeviceMatrix d = packed_copy_to_device(p, 3, ViewTag::Lower);
    EXPECT_EQ(d.view(), ViewTag::Lower);
    EXPECT_EQ(from_device(d), want);
    EXPECT_EQ(packed_copy_from_device(d), p);
}

TEST(DeviceMatrix, PackedUpperConvention) {
    const std::vector<double> p {1, 2, 3, 4, 5, 6};
    HostMatrix want(3, 3);
    want << 1, 2, 3, 0, 4, 5, 0, 0, 6;
    EXPECT_EQ(from_device(packed_copy_to_device(p, 3, ViewTag::Upper)), want);
}

TEST(DeviceMatrix, PackedSingleElement) {
    const std::vector<double> p {2.5};
    EXPECT_EQ(from_device(packed_copy_to_device(p, 1, ViewTag::Lower))(0, 0), 2.5);
}

TEST(DeviceMatrix, PackFromDeviceExamples) {
    HostMatrix l(2, 2);
    l << 1, 0, 2, 3;
    EXPECT_EQ(packed_copy_from_device(to_device(l, ViewTag::Lower)), (std::vector<double> {1, 2, 3}));
    const HostMatrix i3 = HostMatrix::Identity(3, 3);
    EXPECT_EQ(packed_copy_from_device(to_device(i3, ViewTag::Lower)), (std::vector<double> {1, 0, 1, 0, 0, 1}));
    EXPECT_EQ(pack_host(l, ViewTag::Lower), (std::vector<double> {1, 2, 3}));
}

TEST(DeviceMatrix, PackedRoundTripsRandom) {
    auto g = oracle::rng(3);
    for (std::size_t n : {1, 2, 10, 33}) {
        for (ViewTag v : {ViewTag::Lower, ViewTag::Upper}) {
            const HostMatrix r = oracle::random_matrix(static_cast<Eigen::Index>(packed_size(n)), 1, g);
            const std::vector<double> p(r.data(), r.data() + r.size());
            EXPECT_EQ(packed_copy_from_device(packed_copy_to_device(p, n, v)), p);
        }
    }
}

TEST(DeviceMatrix, PackedTransferMovesOnlyTheTriangle) {
    ScopedDeviceOptions guard(profiling_on());
    for (std::size_t n : {1, 7, 64}) {
        const std::vector<double> p(packed_size(n), 1.5);
        Device::instance().clear_records();
        const DeviceMatrix d = packed_copy_to_device(p, n, ViewTag::Lower);
        d.wait();
        EXPECT_EQ(bytes_to_device(), n * (n + 1) / 2 * sizeof(double));
        Device::instance().clear_records();
        const auto back = packed_copy_from_device(d);
        EXPECT_EQ(back.size(), n * (n + 1) / 2);
        EXPECT_EQ(bytes_from_device(), n * (n + 1) / 2 * sizeof(double));
    }
}

TEST(DeviceMatrix, PackedRejectsBadInput) {
    const std::vector<double> p(5, 1.0);
    EXPECT_THROW(packed_copy_to_device(p, 3, ViewTag::Lower), std::invalid_argument);
    const std::vector<double> q(6, 1.0);
    EXPECT_THROW(packed_copy_to_device(q, 3, ViewTag::Entire), std::invalid_argument);
    EXPECT_THROW(packed_copy_from_device(zeros(3, 3)), std::invalid_argument);
}

TEST(DeviceMatrix, ViewAlgebra) {
    EXPECT_EQ(view_union(ViewTag::Lower, ViewTag::Lower), ViewTag::Lower);
    EXPECT_EQ(view_union(ViewTag::Lower, ViewTag::Upper), ViewTag::Entire);
    EXPECT_EQ(view_union(ViewTag::Diagonal, ViewTag::Upper), ViewTag::Upper);
    EXPECT_EQ(view_product(ViewTag::Lower, ViewTag::Lower), ViewTag::Lower);
    EXPECT_EQ(view_product(ViewTag::Lower, ViewTag::Upper), ViewTag::Entire);
    EXPECT_EQ(view_transpose(ViewTag::Lower), ViewTag::Upper);
    EXPECT_EQ(view_transpose(ViewTag::Entire), ViewTag::Entire);
}

TEST(DeviceMatrix, HandlesShareStorage) {
    DeviceMatrix a = to_device(HostMatrix::Ones(3, 3));
    DeviceMatrix b = a;
    set_zeros(b);
    EXPECT_EQ(from_device(a), HostMatrix::Zero(3, 3));
    const DeviceMatrix c = copy(a);
    EXPECT_FALSE(c.buffer() == a.buffer());
}
