#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "blocklin/glm.hpp"
#include "glm_reference.hpp"

using namespace blocklin;
using oracle::GlmProblem;

namespace {

GlmNeedGrad all_grads(GlmFamily f) {
    const bool has_aux = f == GlmFamily::NormalIdentity || f == GlmFamily::NegBinomialLog || f == GlmFamily::OrdinalLogit;
    return GlmNeedGrad {true, true, has_aux, true};
}

double lp_of(const GlmProblem& p) {
    return glm_lpdf(p.spec()).lp;
}

std::size_t aux_len(const GlmProblem& p) {
    if (p.family == GlmFamily::NormalIdentity) {
        return p.sigma.size();
    }
    return p.family == GlmFamily::OrdinalLogit ? p.cutpoints.size() : 1;
}

// central differences of the library lp with respect to a vector parameter
template<typename Setter>
std::vector<double> fd_vector(const GlmProblem& base, std::size_t len, Setter set, double h) {
    std::vector<double> out(len);
    for (std::size_t q = 0; q < len; ++q) {
        GlmProblem up = base, down = base;
        set(up, q, h);
        set(down, q, -h);
        out[q] = (lp_of(up) - lp_of(down)) / (2.0 * h);
    }
    return out;
}

bool close(const std::vector<double>& a, const std::vector<double>& b, double rtol, double atol) {
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::abs(a[i] - b[i]);
        if (!(d <= rtol * std::abs(b[i]) || d <= atol)) {
            return false;
        }
    }
    return true;
}

void check_gradients(const GlmProblem& p, double h) {
    const GlmResult r = glm_lpdf(p.spec(all_grads(p.family)));
    ASSERT_TRUE(r.grad_alpha && r.grad_beta && r.grad_x);

    const auto ga = fd_vector(p, p.alpha.size(), [](GlmProblem& q, std::size_t i, double d) { q.alpha[i] += d; }, h);
    EXPECT_TRUE(close(*r.grad_alpha, ga, 1e-6, 1e-8)) << to_string(p.family) << " alpha";

    const oracle::Matrix gb = oracle::central_diff(
        [&](const oracle::Matrix& b) {
            GlmProblem q = p;
            q.beta = b;
            return lp_of(q);
        },
        p.beta, h);
    EXPECT_TRUE(oracle::all_close(*r.grad_beta, gb, 1e-6, 1e-8)) << to_string(p.family) << " beta";

    const oracle::Matrix gx = oracle::central_diff(
        [&](const oracle::Matrix& x) {
            GlmProblem q = p;
            q.x = x;
            return lp_of(q);
        },
        p.x, h);
    EXPECT_TRUE(oracle::all_close(*r.grad_x, gx, 1e-6, 1e-8)) << to_string(p.family) << " x";

    if (all_grads(p.family).aux) {
        ASSERT_TRUE(r.grad_aux);
        const auto gaux = fd_vector(
            p, aux_len(p),
            [](GlmProblem& q, std::size_t i, double d) {
                if (q.family == GlmFamily::NormalIdentity) {
                    q.sigma[i] += d;
                } else if (q.family == GlmFamily::OrdinalLogit) {
                    q.cutpoints[i] += d;
                } else {
                    q.phi += d;
                }
            },
            h);
        EXPECT_TRUE(close(*r.grad_aux, gaux, 1e-6, 1e-8)) << to_string(p.family) << " aux";
    } else {
        EXPECT_FALSE(r.grad_aux);
    }
}

}  // namespace

TEST(Glm, BernoulliExample) {
    GlmSpec s;
    s.family = GlmFamily::BernoulliLogit;
    s.x = to_device(HostMatrix::Zero(1, 1));
    s.beta = HostMatrix::Constant(1, 1, 5.0);
    s.y_int = {1};
    s.need.alpha = true;
    const GlmResult r = glm_lpdf(s);
    EXPECT_NEAR(r.lp, std::log(0.5), 1e-15);
    ASSERT_TRUE(r.grad_alpha);
    EXPECT_DOUBLE_EQ((*r.grad_alpha)[0], 0.5);
    EXPECT_FALSE(r.grad_beta);
}

TEST(Glm, PoissonExample) {
    GlmSpec s;
    s.family = GlmFamily::PoissonLog;
    s.x = to_device(HostMatrix::Zero(1, 1));
    s.beta = HostMatrix::Zero(1, 1);
    s.y_int = {0};
    EXPECT_DOUBLE_EQ(glm_lpdf(s).lp, -1.0);
}

TEST(Glm, NormalExample) {
    GlmSpec s;
    s.family = GlmFamily::NormalIdentity;
    s.x = to_device(HostMatrix::Zero(1, 1));
    s.beta = HostMatrix::Zero(1, 1);
    s.y_real = {0.0};
    EXPECT_NEAR(glm_lpdf(s).lp, -0.5 * std::log(2.0 * std::numbers::pi), 1e-15);
    EXPECT_NEAR(glm_lpdf(s).lp, -0.9189385, 1e-7);
}

TEST(Glm, MatchesScalarReference) {
    for (GlmFamily f : oracle::all_families()) {
        for (Eigen::Index n : {1, 64, 100, 200, 257}) {
            const GlmProblem p = oracle::random_glm(f, n, 7, 1000 + static_cast<std::uint64_t>(n));
            const double ref = oracle::glm_reference_lp(p);
            const double lp = glm_lpdf(p.spec()).lp;
            EXPECT_LE(std::abs(lp - ref), 1e-10 * std::abs(ref)) << to_string(f) << " n=" << n;
        }
    }
}

TEST(Glm, VectorParametersMatchReference) {
    for (GlmFamily f : oracle::all_families()) {
        const GlmProblem p = oracle::random_glm(f, 90, 3, 55, true);
        const double ref = oracle::glm_reference_lp(p);
        EXPECT_LE(std::abs(lp_of(p) - ref), 1e-10 * std::abs(ref)) << to_string(f);
    }
}

TEST(Glm, ScalarAndVectorParametersAgree) {
    for (GlmFamily f : oracle::all_families()) {
        if (f == GlmFamily::CategoricalLogit) {
            continue;
        }
        GlmProblem s = oracle::random_glm(f, 77, 4, 9);
        GlmProblem v = s;
        v.alpha.assign(77, s.alpha[0]);
        if (f == GlmFamily::NormalIdentity) {
            v.sigma.assign(77, s.sigma[0]);
        }
        const GlmResult rs = glm_lpdf(s.spec(all_grads(f)));
        const GlmResult rv = glm_lpdf(v.spec(all_grads(f)));
        EXPECT_LE(std::abs(rs.lp - rv.lp), 1e-12 * std::abs(rs.lp)) << to_string(f);
        double ga = 0.0;
        for (double x : *rv.grad_alpha) {
            ga += x;
        }
        EXPECT_NEAR((*rs.grad_alpha)[0], ga, 1e-12 * (1.0 + std::abs(ga)));
        EXPECT_LE(oracle::normwise_rel(*rv.grad_beta, *rs.grad_beta), 1e-12);
        if (f == GlmFamily::NormalIdentity) {
            double gs = 0.0;
            for (double x : *rv.grad_aux) {
                gs += x;
            }
            EXPECT_NEAR((*rs.grad_aux)[0], gs, 1e-12 * (1.0 + std::abs(gs)));
        }
    }
}

TEST(Glm, GradientsMatchFiniteDifferences) {
    for (GlmFamily f : oracle::all_families()) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const GlmProblem p = oracle::random_glm(f, 10 + static_cast<Eigen::Index>(seed), 3, 500 + seed, seed % 2 == 1);
            check_gradients(p, 1e-5);
        }
    }
}

TEST(Glm, WorkGroupSizeDoesNotChangeResult) {
    for (GlmFamily f : oracle::all_families()) {
        const GlmProblem p = oracle::random_glm(f, 150, 5, 21);
        const double ref = glm_lpdf(p.spec()).lp;
        for (std::size_t wg : {1, 7, 32, 256}) {
            GlmConfig cfg;
            cfg.work_group = wg;
            EXPECT_LE(std::abs(glm_lpdf(p.spec(), cfg).lp - ref), 1e-12 * std::abs(ref));
        }
    }
}

TEST(Glm, RejectsBadInput) {
    GlmProblem p = oracle::random_glm(GlmFamily::BernoulliLogit, 5, 2, 1);
    p.y_int[0] = 2;
    EXPECT_THROW(glm_lpdf(p.spec()), std::domain_error);

    GlmProblem q = oracle::random_glm(GlmFamily::OrdinalLogit, 5, 2, 1);
    q.cutpoints = {1.0, 0.5, 2.0};
    EXPECT_THROW(glm_lpdf(q.spec()), std::domain_error);

    GlmProblem r = oracle::random_glm(GlmFamily::NormalIdentity, 5, 2, 1);
    r.sigma = {-1.0};
    EXPECT_THROW(glm_lpdf(r.spec()), std::domain_error);
    r.sigma = {1.0, 2.0};
    EXPECT_THROW(glm_lpdf(r.spec()), std::invalid_argument);

    GlmProblem s = oracle::random_glm(GlmFamily::PoissonLog, 5, 2, 1);
    s.beta = oracle::Matrix::Zero(3, 1);
    EXPECT_THROW(glm_lpdf(s.spec()), std::invalid_argument);
    GlmNeedGrad aux;
    aux.aux = true;
    s.beta = oracle::Matrix::Zero(2, 1);
    EXPECT_THROW(glm_lpdf(s.spec(aux)), std::invalid_argument);
}

TEST(Glm, WorkgroupReduceExamples) {
    const std::vector<double> ones(64, 1.0);
    EXPECT_EQ(workgroup_reduce_sum(ones, 64), std::vector<double> {64.0});

    const std::vector<double> hundred(100, 1.0);
    EXPECT_EQ(workgroup_reduce_sum(hundred, 64), (std::vector<double> {64.0, 36.0}));

    auto g = oracle::rng(3);
    const oracle::Matrix r = oracle::random_matrix(1000, 1, g);
    const std::vector<double> v(r.data(), r.data() + r.size());
    double seq = 0.0;
    for (double x : v) {
        seq += x;
    }
    double total = 0.0;
    for (double x : workgroup_reduce_sum(v, 64)) {
        total += x;
    }
    EXPECT_LE(std::abs(total - seq), 1e-13 * std::abs(seq));
    EXPECT_TRUE(workgroup_reduce_sum(std::vector<double> {}, 8).empty());
}
