#include <gtest/gtest.h>

#include "blocklin/kernels_basic.hpp"
#include "blocklin/matmul.hpp"
#include "oracles.hpp"

using namespace blocklin;

TEST(Matmul, SmallExample) {
    HostMatrix a(2, 2), b(2, 2), c(2, 2);
    a << 1, 2, 3, 4;
    b << 5, 6, 7, 8;
    c << 19, 22, 43, 50;
    EXPECT_EQ(from_device(gemm(to_device(a), to_device(b))), c);
    EXPECT_EQ(from_device(to_device(a) * to_device(b)), c);
}

TEST(Matmul, IdentityIsNeutral) {
    auto g = oracle::rng(2);
    const HostMatrix a = oracle::random_matrix(9, 9, g);
    EXPECT_EQ(from_device(gemm(to_device(a), identity(9))), a);
    EXPECT_EQ(from_device(gemm(identity(9), to_device(a))), a);
}

TEST(Matmul, TriangularViewMasksGarbage) {
    auto g = oracle::rng(4);
    const HostMatrix a = oracle::random_matrix(11, 11, g);
    const HostMatrix b = oracle::random_matrix(11, 6, g);
    const HostMatrix masked = a.triangularView<Eigen::Lower>();
    const HostMatrix c = from_device(gemm(to_device(a, ViewTag::Lower), to_device(b)));
    EXPECT_LE(oracle::normwise_rel(c, oracle::gemm(masked, b)), 1e-13);

    const HostMatrix up = a.triangularView<Eigen::Upper>();
    const HostMatrix d = from_device(gemm(to_device(b.transpose()), to_device(a, ViewTag::Upper)));
    EXPECT_LE(oracle::normwise_rel(d, oracle::gemm(b.transpose(), up)), 1e-13);

    // lower times lower stays lower
    const DeviceMatrix ll = gemm(to_device(a, ViewTag::Lower), to_device(a, ViewTag::Lower));
    EXPECT_EQ(ll.view(), ViewTag::Lower);
    EXPECT_LE(oracle::normwise_rel(from_device(ll), oracle::gemm(masked, masked)), 1e-13);
}

TEST(Matmul, GemmMatchesOracleOnOddShapes) {
    auto g = oracle::rng(6);
    for (GemmConfig cfg : {GemmConfig {}, GemmConfig {1, 1}, GemmConfig {2, 8}, GemmConfig {4, 16}}) {
        for (auto [n, m] : oracle::odd_shapes()) {
            for (Eigen::Index k : {0, 1, 3, 20}) {
                const HostMatrix a = oracle::random_matrix(n, k, g);
                const HostMatrix b = oracle::random_matrix(k, m, g);
                const HostMatrix c = from_device(gemm(to_device(a), to_device(b), cfg));
                const HostMatrix want = oracle::gemm(a, b);
                ASSERT_EQ(c.rows(), n);
                ASSERT_EQ(c.cols(), m);
                // same accumulation order as the triple loop
                EXPECT_LE(oracle::normwise_rel(c, want), 1e-13) << n << "x" << k << "x" << m;
            }
        }
    }
}

TEST(Matmul, GemmRejectsMismatch) {
    EXPECT_THROW(gemm(zeros(2, 3), zeros(2, 3)), std::invalid_argument);
    GemmConfig bad;
    bad.wpt = 3;
    EXPECT_THROW(gemm(zeros(2, 2), zeros(2, 2), bad), std::invalid_argument);
}

TEST(Matmul, BigKMatchesGemm) {
    auto g = oracle::rng(8);
    const HostMatrix a = oracle::random_matrix(2, 2000, g);
    const HostMatrix b = oracle::random_matrix(2000, 2, g);
    GemmConfig cfg;
    cfg.split_s = 8;
    const HostMatrix big = from_device(gemm_big_k(to_device(a), to_device(b), cfg));
    const HostMatrix ref = from_device(gemm(to_device(a), to_device(b)));
    EXPECT_LE(oracle::max_rel_elementwise(big, ref), 1e-12);
}

TEST(Matmul, BigKSingleSplitIsBitIdentical) {
    auto g = oracle::rng(10);
    const HostMatrix a = oracle::random_matrix(5, 300, g);
    const HostMatrix b = oracle::random_matrix(300, 4, g);
    GemmConfig cfg;
    cfg.split_s = 1;
    EXPECT_EQ(from_device(gemm_big_k(to_device(a), to_device(b), cfg)), from_device(gemm(to_device(a), to_device(b))));
}

TEST(Matmul, BigKIntegerSum) {
    GemmConfig cfg;
    cfg.split_s = 7;
    const DeviceMatrix c = gemm_big_k(to_device(HostMatrix::Ones(1, 1000)), to_device(HostMatrix::Ones(1000, 1)), cfg);
    EXPECT_EQ(from_device(c)(0, 0), 1000.0);
}

TEST(Matmul, BigKOddShapes) {
    auto g = oracle::rng(14);
    for (std::size_t s : {1, 2, 3, 16}) {
        GemmConfig cfg;
        cfg.split_s = s;
        for (auto [n, m] : oracle::odd_shapes()) {
            const HostMatrix a = oracle::random_matrix(n, 37, g);
            const HostMatrix b = oracle::random_matrix(37, m, g);
            const HostMatrix c = from_device(gemm_big_k(to_device(a), to_device(b), cfg));
            EXPECT_LE(oracle::normwise_rel(c, oracle::gemm(a, b)), 1e-12);
        }
    }
}

TEST(Matmul, AutoSplit) {
    EXPECT_EQ(auto_split(64, 64, 4096), 1u);
    EXPECT_EQ(auto_split(2, 2, 2000), 16u);
    EXPECT_EQ(auto_split(2, 2, 20), 5u);
    EXPECT_EQ(auto_split(0, 0, 0), 1u);
}

TEST(Matmul, MultiplyTransposeExample) {
    HostMatrix a(2, 2), want(2, 2);
    a << 1, 2, 3, 4;
    want << 5, 11, 11, 25;
    const DeviceMatrix c = multiply_transpose(to_device(a));
    EXPECT_EQ(from_device(c), want);
    EXPECT_TRUE(check(CheckKind::Symmetric, c, 0.0));
    EXPECT_EQ(from_device(multiply_transpose(identity(5))), HostMatrix::Identity(5, 5));
}

TEST(Matmul, MultiplyTransposeOddShapes) {
    auto g = oracle::rng(16);
    for (auto [n, k] : oracle::odd_shapes()) {
        const HostMatrix a = oracle::random_matrix(n, k, g);
        const DeviceMatrix c = multiply_transpose(to_device(a));
        EXPECT_LE(oracle::normwise_rel(from_device(c), oracle::gemm(a, a.transpose())), 1e-13);
        EXPECT_TRUE(check(CheckKind::Symmetric, c, 0.0));
    }
}

TEST(Matmul, VectorProductsExamples) {
    HostMatrix a(2, 2);
    a << 1, 2, 3, 4;
    HostMatrix v(2, 1), r(1, 2);
    v << 1, 1;
    r << 1, 1;
    HostMatrix mv(2, 1), rv(1, 2);
    mv << 3, 7;
    rv << 4, 6;
    EXPECT_EQ(from_device(mv_multiply(to_device(a), to_device(v))), mv);
    EXPECT_EQ(from_device(rv_multiply(to_device(r), to_device(a))), rv);
}

TEST(Matmul, BasisVectorPicksColumn) {
    auto g = oracle::rng(18);
    const HostMatrix a = oracle::random_matrix(13, 7, g);
    for (Eigen::Index j = 0; j < 7; ++j) {
        const HostMatrix e = HostMatrix::Identity(7, 7).col(j);
        EXPECT_EQ(from_device(mv_multiply(to_device(a), to_device(e))), a.col(j));
    }
}

TEST(Matmul, VectorProductsOddShapes) {
    auto g = oracle::rng(20);
    for (std::size_t wg : {1, 3, 64}) {
        GemmConfig cfg;
        cfg.wg_vec = wg;
        for (auto [n, k] : oracle::odd_shapes()) {
            const HostMatrix a = oracle::random_matrix(n, k, g);
            const HostMatrix v = oracle::random_matrix(k, 1, g);
            const HostMatrix r = oracle::random_matrix(1, n, g);
            EXPECT_LE(oracle::normwise_rel(from_device(mv_multiply(to_device(a), to_device(v), cfg)), oracle::gemm(a, v)),
                      1e-13);
            EXPECT_LE(oracle::normwise_rel(from_device(rv_multiply(to_device(r), to_device(a), cfg)), oracle::gemm(r, a)),
                      1e-13);
        }
    }
}

TEST(Matmul, DispatcherAgreesWithOracle) {
    auto g = oracle::rng(22);
    const std::vector<std::array<Eigen::Index, 3>> shapes {{1, 30, 1}, {1, 30, 9}, {9, 30, 1}, {4, 4000, 3}, {20, 17, 19}};
    for (auto [n, k, m] : shapes) {
        const HostMatrix a = oracle::random_matrix(n, k, g);
        const HostMatrix b = oracle::random_matrix(k, m, g);
        EXPECT_LE(oracle::normwise_rel(from_device(multiply(to_device(a), to_device(b))), oracle::gemm(a, b)), 1e-12);
        EXPECT_LE(oracle::normwise_rel(multiply(a, b), oracle::gemm(a, b)), 1e-12);
    }
}

TEST(Matmul, OffloadPredicate) {
    EXPECT_TRUE(should_offload_gemm(600, 600, 200));
    EXPECT_FALSE(should_offload_gemm(100, 100, 1000));
    EXPECT_FALSE(should_offload_gemm(500, 500, 100));
    EXPECT_FALSE(should_offload_gemm(500, 500, 101));
    EXPECT_TRUE(should_offload_gemm(501, 500, 101));
}
