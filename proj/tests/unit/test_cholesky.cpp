#include <gtest/gtest.h>

#include <cmath>

#include "blocklin/cholesky.hpp"
#include "blocklin/kernels_basic.hpp"
#include "oracles.hpp"

using namespace blocklin;

namespace {

double reconstruction_error(const HostMatrix& l, const HostMatrix& a) {
    return (oracle::gemm(l, l.transpose()) - a).cwiseAbs().maxCoeff() / a.cwiseAbs().maxCoeff();
}

CholeskyConfig blocked(std::size_t partition, std::size_t min_l11, std::size_t grad_block = 128) {
    CholeskyConfig c;
    c.partition = partition;
    c.min_l11 = min_l11;
    c.grad_block = grad_block;
    c.tri.diag_block = 8;
    return c;
}

}  // namespace

TEST(Cholesky, SmallExamples) {
    HostMatrix a(2, 2), l(2, 2);
    a << 4, 2, 2, 5;
    l << 2, 0, 1, 2;
    EXPECT_EQ(from_device(cholesky_small(to_device(a))), l);
    EXPECT_EQ(from_device(cholesky_small(to_device(HostMatrix::Constant(1, 1, 9.0))))(0, 0), 3.0);
    EXPECT_EQ(from_device(cholesky_small(identity(8))), HostMatrix::Identity(8, 8));
    EXPECT_EQ(cholesky_small(to_device(a)).view(), ViewTag::Lower);
}

TEST(Cholesky, SmallMatchesBanachiewicz) {
    auto g = oracle::rng(1);
    for (Eigen::Index n : {1, 2, 7, 33, 64}) {
        const HostMatrix a = oracle::random_spd(n, g);
        EXPECT_LE(oracle::max_rel_elementwise(from_device(cholesky_small(to_device(a))), oracle::cholesky(a)), 1e-12);
    }
}

TEST(Cholesky, ToeplitzExample) {
    const HostMatrix a = oracle::toeplitz(3);
    HostMatrix want(3, 3);
    want << 9, 2, 1, 2, 9, 2, 1, 2, 9;
    ASSERT_EQ(a, want);
    const HostMatrix l = from_device(cholesky_decompose(to_device(a)));
    EXPECT_LE((oracle::gemm(l, l.transpose()) - a).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Cholesky, DiagonalInput) {
    const HostMatrix a = HostMatrix(Eigen::Vector3d(4, 9, 16).asDiagonal());
    EXPECT_EQ(from_device(cholesky_decompose(to_device(a))), HostMatrix(Eigen::Vector3d(2, 3, 4).asDiagonal()));
}

TEST(Cholesky, RandomSpdReconstruction) {
    auto g = oracle::rng(2);
    const HostMatrix a = oracle::random_spd(300, g);
    const HostMatrix l = from_device(cholesky_decompose(to_device(a)));
    EXPECT_LE(reconstruction_error(l, a), 1e-10);
    EXPECT_EQ(HostMatrix(l.triangularView<Eigen::StrictlyUpper>()), HostMatrix::Zero(300, 300));
}

TEST(Cholesky, ReadsOnlyLowerTriangle) {
    auto g = oracle::rng(3);
    HostMatrix a = oracle::random_spd(90, g);
    const HostMatrix clean = from_device(cholesky_decompose(to_device(a), blocked(2, 16)));
    a.triangularView<Eigen::StrictlyUpper>().setConstant(-5.0);
    EXPECT_EQ(from_device(cholesky_decompose(to_device(a), blocked(2, 16))), clean);
}

TEST(Cholesky, BlockedAgreesWithOracleAndAcrossBlockings) {
    auto g = oracle::rng(4);
    for (Eigen::Index n : {1, 5, 17, 64, 65, 150}) {
        const HostMatrix a = oracle::random_spd(n, g);
        const HostMatrix want = oracle::cholesky(a);
        for (std::size_t p : {2, 3, 4}) {
            for (std::size_t m : {1, 4, 64}) {
                const HostMatrix l = from_device(cholesky_decompose(to_device(a), blocked(p, m)));
                EXPECT_LE(oracle::max_rel_elementwise(l, want), 1e-9) << "n=" << n << " p=" << p << " m=" << m;
            }
        }
    }
}

TEST(Cholesky, NotPositiveDefiniteReportsIndex) {
    HostMatrix a = HostMatrix::Identity(6, 6);
    a(4, 4) = -1.0;
    try {
        cholesky_decompose(to_device(a), blocked(2, 2));
        FAIL() << "expected NotPositiveDefinite";
    } catch (const NotPositiveDefinite& e) {
        EXPECT_EQ(e.index(), 4u);
    }
    try {
        cholesky_small(to_device(a));
        FAIL() << "expected NotPositiveDefinite";
    } catch (const NotPositiveDefinite& e) {
        EXPECT_EQ(e.index(), 4u);
    }
    EXPECT_THROW(cholesky_decompose(a), std::domain_error);
    EXPECT_THROW(cholesky_decompose(zeros(2, 3)), std::invalid_argument);
}

TEST(Cholesky, HostEntry) {
    auto g = oracle::rng(5);
    const HostMatrix a = oracle::random_spd(40, g);
    EXPECT_LE(oracle::max_rel_elementwise(cholesky_decompose(a), oracle::cholesky(a)), 1e-12);
    CholeskyConfig dev;
    dev.offload_min_n = 0;
    dev.min_l11 = 8;
    EXPECT_LE(oracle::max_rel_elementwise(cholesky_decompose(a, dev), oracle::cholesky(a)), 1e-10);
}

TEST(Cholesky, GradientScalarCase) {
    const HostMatrix g = from_device(cholesky_gradient(to_device(HostMatrix::Constant(1, 1, 2.0), ViewTag::Lower),
                                                       to_device(HostMatrix::Constant(1, 1, 1.0))));
    EXPECT_DOUBLE_EQ(g(0, 0), 0.25);
}

TEST(Cholesky, GradientOfZeroAdjointIsZero) {
    auto gen = oracle::rng(6);
    const HostMatrix l = oracle::cholesky(oracle::random_spd(20, gen));
    EXPECT_EQ(from_device(cholesky_gradient(to_device(l, ViewTag::Lower), zeros(20, 20))), HostMatrix::Zero(20, 20));
}

TEST(Cholesky, GradientMatchesReverseOracle) {
    auto gen = oracle::rng(7);
    for (Eigen::Index n : {1, 2, 9, 40, 130}) {
        const HostMatrix l = oracle::cholesky(oracle::random_spd(n, gen));
        HostMatrix l_adj = oracle::random_matrix(n, n, gen);
        l_adj = l_adj.triangularView<Eigen::Lower>();
        const HostMatrix want = oracle::cholesky_reverse(l, l_adj);
        for (std::size_t b : {1, 7, 32, 128}) {
            const HostMatrix got = from_device(
                cholesky_gradient(to_device(l, ViewTag::Lower), to_device(l_adj), blocked(4, 64, b)));
            EXPECT_LE(oracle::normwise_rel(got, want), 1e-10) << "n=" << n << " block=" << b;
            EXPECT_LE(oracle::normwise_rel(cholesky_gradient(l, l_adj, blocked(4, 64, b)), want), 1e-10);
        }
    }
}

TEST(Cholesky, GradientInvariantUnderGradBlock) {
    auto gen = oracle::rng(17);
    for (Eigen::Index n : {5, 33, 64}) {
        const HostMatrix l = oracle::cholesky(oracle::random_spd(n, gen));
        const HostMatrix l_adj = oracle::random_matrix(n, n, gen).triangularView<Eigen::Lower>();
        std::vector<HostMatrix> got;
        for (std::size_t b : {1, 8, 128}) {
            got.push_back(from_device(cholesky_gradient(to_device(l, ViewTag::Lower), to_device(l_adj), blocked(4, 64, b))));
        }
        EXPECT_LE(oracle::max_rel_elementwise(got[0], got[1]), 1e-9) << n;
        EXPECT_LE(oracle::max_rel_elementwise(got[0], got[2]), 1e-9) << n;
        EXPECT_LE(oracle::max_rel_elementwise(got[1], got[2]), 1e-9) << n;
    }
}

TEST(Cholesky, GradientMatchesFiniteDifferences) {
    auto gen = oracle::rng(8);
    const Eigen::Index n = 40;
    const HostMatrix a = oracle::random_spd(n, gen);
    const HostMatrix w = oracle::random_matrix(n, n, gen);
    const HostMatrix l = oracle::cholesky(a);
    const HostMatrix got = from_device(
        cholesky_gradient(to_device(l, ViewTag::Lower), to_device(HostMatrix(w.triangularView<Eigen::Lower>())),
                          blocked(4, 64, 16)));
    const HostMatrix fd = oracle::central_diff(
        [&](const HostMatrix& p) { return oracle::cholesky(p).cwiseProduct(w).sum(); }, a,
        1e-6 * a.cwiseAbs().maxCoeff());
    EXPECT_TRUE(oracle::all_close(got, fd, 1e-6, 1e-8));
}

TEST(Cholesky, PackedGradient) {
    auto gen = oracle::rng(9);
    const HostMatrix l = oracle::cholesky(oracle::random_spd(15, gen));
    HostMatrix l_adj = oracle::random_matrix(15, 15, gen);
    l_adj = l_adj.triangularView<Eigen::Lower>();
    const std::vector<double> out = cholesky_gradient(pack_host(l, ViewTag::Lower), pack_host(l_adj, ViewTag::Lower), 15);
    const std::vector<double> want = pack_host(oracle::cholesky_reverse(l, l_adj), ViewTag::Lower);
    ASSERT_EQ(out.size(), packed_size(15));
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_NEAR(out[i], want[i], 1e-10 * (1.0 + std::abs(want[i])));
    }
}

TEST(Cholesky, ConfigValidation) {
    CholeskyConfig c;
    c.partition = 1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    CholeskyConfig d;
    d.grad_block = 0;
    EXPECT_THROW(d.validate(), std::invalid_argument);
}
