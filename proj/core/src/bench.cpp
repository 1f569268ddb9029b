#include "blocklin/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "blocklin/autodiff.hpp"
#include "blocklin/cholesky.hpp"
#include "blocklin/glm.hpp"
#include "blocklin/matmul.hpp"
#include "blocklin/trisolve.hpp"

namespace blocklin {

namespace {

// stream ids, one per generated quantity
enum : std::uint64_t {
    kStreamLogisticX = 1,
    kStreamLogisticY,
    kStreamGpX,
    kStreamGpY,
    kStreamMatrixA,
    kStreamMatrixB,
};

HostMatrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi, std::mt19937_64& rng) {
    boost::random::uniform_real_distribution<double> u(lo, hi);
    HostMatrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            m(i, j) = u(rng);
        }
    }
    return m;
}

template<typename F>
double seconds(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double log1p_exp(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double rel_err_scalar(double a, double b) {
    const double d = std::abs(a - b);
    return d == 0.0 ? 0.0 : d / std::abs(b);
}

// Runs device and reference `repeats` times; the error is taken from the
// last run of each.
template<typename Device, typename Reference, typename Compare>
void measure(BenchReport& r, Device&& device, Reference&& reference, Compare&& compare) {
    std::vector<double> td, tr;
    for (std::size_t rep = 0; rep < r.repeats; ++rep) {
        td.push_back(seconds(device));
        tr.push_back(seconds(reference));
    }
    r.device_time_s = median(td);
    r.reference_time_s = median(tr);
    r.max_rel_err = compare();
}

void bench_cholesky(BenchReport& r, const Config& cfg) {
    const HostMatrix a = generate_toeplitz(r.n);
    HostMatrix l_dev, l_ref;
    measure(
        r, [&] { l_dev = from_device(cholesky_decompose(to_device(a), cfg.chol)); },
        [&] { l_ref = Eigen::LLT<HostMatrix>(a).matrixL(); }, [&] { return normwise_rel_err(l_dev, l_ref); });
}

void bench_cholesky_grad(BenchReport& r, const Config& cfg, std::uint64_t seed) {
    const HostMatrix l = Eigen::LLT<HostMatrix>(generate_toeplitz(r.n)).matrixL();
    auto rng = make_rng(seed, kStreamMatrixA);
    const HostMatrix l_adj = uniform_matrix(r.n, r.n, -1.0, 1.0, rng).triangularView<Eigen::Lower>();
    const std::vector<double> lp = pack_host(l, ViewTag::Lower), lap = pack_host(l_adj, ViewTag::Lower);
    CholeskyConfig host_cfg = cfg.chol;
    host_cfg.offload_min_n = std::numeric_limits<std::size_t>::max();

    std::vector<double> dev_packed;
    HostMatrix ref;
    measure(
        r, [&] { dev_packed = cholesky_gradient(lp, lap, r.n, cfg.chol); },
        [&] { ref = cholesky_gradient(l, l_adj, host_cfg); },
        [&] {
            const HostMatrix dev = from_device(packed_copy_to_device(dev_packed, r.n, ViewTag::Lower));
            return normwise_rel_err(dev, ref);
        });
}

void bench_gemm(BenchReport& r, const Config& cfg, std::uint64_t seed) {
    auto rng_a = make_rng(seed, kStreamMatrixA);
    auto rng_b = make_rng(seed, kStreamMatrixB);
    const HostMatrix a = uniform_matrix(r.n, r.k, -1.0, 1.0, rng_a);
    const HostMatrix b = uniform_matrix(r.k, r.n, -1.0, 1.0, rng_b);
    HostMatrix c_dev, c_ref;
    measure(
        r, [&] { c_dev = from_device(multiply(to_device(a), to_device(b), cfg.gemm)); }, [&] { c_ref = a * b; },
        [&] { return normwise_rel_err(c_dev, c_ref); });
}

void bench_trisolve(BenchReport& r, const Config& cfg, std::uint64_t seed) {
    // unit diagonal, small off-diagonal entries: well conditioned
    const double h = 0.5 / static_cast<double>(r.n);
    auto rng_a = make_rng(seed, kStreamMatrixA);
    auto rng_b = make_rng(seed, kStreamMatrixB);
    HostMatrix a = uniform_matrix(r.n, r.n, -h, h, rng_a).triangularView<Eigen::StrictlyLower>();
    a.diagonal().setOnes();
    const HostMatrix b = uniform_matrix(r.n, r.k, -1.0, 1.0, rng_b);
    TriSolveConfig dev_cfg = cfg.tri;
    dev_cfg.offload_min_n = 0;
    HostMatrix x_dev, x_ref;
    measure(
        r,
        [&] {
            x_dev = from_device(triangular_solve(to_device(a, ViewTag::Lower), to_device(b), dev_cfg, cfg.gemm));
        },
        [&] { x_ref = a.triangularView<Eigen::Lower>().solve(b); }, [&] { return normwise_rel_err(x_dev, x_ref); });
}

void bench_glm_logistic(BenchReport& r, const Config& cfg, std::uint64_t seed) {
    const LogisticData data = generate_logistic_data(r.n, r.k, seed);
    HostMatrix beta = HostMatrix::Zero(r.k, 1);
    beta(0, 0) = 3.0;
    beta(1, 0) = -2.0;
    const double alpha = 1.0;

    GlmSpec spec;
    spec.family = GlmFamily::BernoulliLogit;
    spec.x = to_device(data.x);
    spec.y_int = data.y;
    spec.alpha = {alpha};
    spec.beta = beta;
    spec.need = GlmNeedGrad {true, true, false, false};
    GlmConfig gcfg;
    gcfg.gemm = cfg.gemm;

    GlmResult dev;
    double lp_ref = 0.0, ga_ref = 0.0;
    HostMatrix gb_ref;
    measure(
        r, [&] { dev = glm_lpdf(spec, gcfg); },
        [&] {
            const Eigen::VectorXd eta = (data.x * beta).array() + alpha;
            Eigen::VectorXd g(eta.size());
            lp_ref = 0.0;
            for (Eigen::Index i = 0; i < eta.size(); ++i) {
                const double y = data.y[static_cast<std::size_t>(i)];
                lp_ref += y * eta(i) - log1p_exp(eta(i));
                g(i) = y - 1.0 / (1.0 + std::exp(-eta(i)));
            }
            ga_ref = g.sum();
            gb_ref = data.x.transpose() * g;
        },
        [&] {
            return std::max({rel_err_scalar(dev.lp, lp_ref), rel_err_scalar(dev.grad_alpha->at(0), ga_ref),
                             normwise_rel_err(*dev.grad_beta, gb_ref)});
        });
}

void bench_gp_gradient(BenchReport& r, const Config& cfg, std::uint64_t seed) {
    const GpData data = generate_gp_data(r.n, seed);
    const auto n = static_cast<Eigen::Index>(r.n);
    // squared exponential, unit length scale and magnitude, noise sd 0.1
    HostMatrix k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = data.x[static_cast<std::size_t>(i)] - data.x[static_cast<std::size_t>(j)];
            k(i, j) = std::exp(-0.5 * d * d);
        }
    }
    k.diagonal().array() += 0.01 + 1e-8;
    const Eigen::Map<const Eigen::VectorXd> y(data.y.data(), n);

    HostMatrix g_dev, g_ref;
    measure(
        r,
        [&] {
            // log N(y | 0, K) without the constant
            Tape t;
            VarMatrix kv = t.leaf(to_device(k));
            VarMatrix l = cholesky_decompose(t, kv, cfg.chol);
            VarMatrix z = triangular_solve(t, l, to_device(HostMatrix(y)), cfg.tri, cfg.gemm);
            VarScalar f = add(t, scale(t, dot_self(t, z), -0.5), scale(t, sum_log_diagonal(t, l), -1.0));
            t.grad(f);
            g_dev = from_device(kv.adj);
        },
        [&] {
            const Eigen::LLT<HostMatrix> llt(k);
            const HostMatrix k_inv = llt.solve(HostMatrix::Identity(n, n));
            const Eigen::VectorXd a = llt.solve(y);
            const HostMatrix s = 0.5 * (a * a.transpose() - k_inv);
            // the factorization reads the lower triangle only
            g_ref = HostMatrix(s + s.transpose()).triangularView<Eigen::Lower>();
            g_ref.diagonal() = s.diagonal();
        },
        [&] { return normwise_rel_err(g_dev, g_ref); });
}

}  // namespace

HostMatrix generate_toeplitz(std::size_t n) {
    const auto nn = static_cast<double>(n);
    HostMatrix a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const auto dist = static_cast<double>(i > j ? i - j : j - i);
            a(i, j) = i == j ? nn * nn : nn - dist;
        }
    }
    return a;
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

double logistic_linear_predictor(double x1, double x2) {
    return 3.0 * x1 - 2.0 * x2 + 1.0;
}

LogisticData generate_logistic_data(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) {
        throw std::invalid_argument("generate_logistic_data: k must be at least 2");
    }
    auto rng_x = make_rng(seed, kStreamLogisticX);
    auto rng_y = make_rng(seed, kStreamLogisticY);
    boost::random::normal_distribution<double> normal(0.0, 1.0);
    boost::random::uniform_real_distribution<double> unif(0.0, 1.0);
    LogisticData d;
    d.x.resize(n, k);
    d.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            d.x(i, j) = normal(rng_x);
        }
        const double mu = logistic_linear_predictor(d.x(i, 0), d.x(i, 1));
        d.y[i] = unif(rng_y) < 1.0 / (1.0 + std::exp(-mu)) ? 1 : 0;
    }
    return d;
}

const GpConstants& gp_constants() {
    static const GpConstants c = [] {
        using boost::math::quadrature::gauss_kronrod;
        auto h = [](double x) { return x + x * x - x * x * x + 100.0 * std::sin(2.0 * x); };
        const double mean = gauss_kronrod<double, 61>::integrate(h, -10.0, 10.0, 15, 1e-14) / 20.0;
        const double var =
            gauss_kronrod<double, 61>::integrate([&](double x) { return (h(x) - mean) * (h(x) - mean); }, -10.0,
                                                 10.0, 15, 1e-14)
            / 20.0;
        return GpConstants {mean, 1.0 / std::sqrt(var)};
    }();
    return c;
}

double gp_function(double x) {
    const GpConstants& c = gp_constants();
    return c.beta * (x + x * x - x * x * x + 100.0 * std::sin(2.0 * x) - c.alpha);
}

GpData generate_gp_data(std::size_t n, std::uint64_t seed) {
    auto rng_x = make_rng(seed, kStreamGpX);
    auto rng_y = make_rng(seed, kStreamGpY);
    boost::random::uniform_real_distribution<double> unif(-10.0, 10.0);
    boost::random::normal_distribution<double> noise(0.0, 0.1);
    GpData d;
    d.x.resize(n);
    d.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.x[i] = unif(rng_x);
        d.y[i] = gp_function(d.x[i]) + noise(rng_y);
    }
    return d;
}

const std::vector<std::string>& workload_names() {
    static const std::vector<std::string> names {"cholesky", "cholesky_grad", "gemm", "trisolve", "glm_logistic",
                                                 "gp_gradient"};
    return names;
}

double workload_tolerance(const std::string& w) {
    if (w == "cholesky") {
        return 1e-10;
    }
    if (w == "cholesky_grad") {
        return 1e-8;
    }
    if (w == "gemm") {
        return 1e-12;
    }
    if (w == "trisolve") {
        return 1e-9;
    }
    if (w == "glm_logistic") {
        return 1e-10;
    }
    if (w == "gp_gradient") {
        return 1e-6;
    }
    throw std::invalid_argument("unknown workload '" + w + "'");
}

BenchReport run_bench(const std::string& workload, const BenchOptions& opts, const Config& cfg) {
    BenchReport r;
    r.workload = workload;
    const double documented = workload_tolerance(workload);  // rejects unknown names
    r.tolerance = opts.tolerance.value_or(documented);
    if (opts.n == 0) {
        throw std::invalid_argument("run_bench: n must be positive");
    }
    if (opts.repeats == 0) {
        throw std::invalid_argument("run_bench: repeats must be positive");
    }
    r.n = opts.n;
    r.repeats = opts.repeats;

    if (workload == "cholesky") {
        bench_cholesky(r, cfg);
    } else if (workload == "cholesky_grad") {
        bench_cholesky_grad(r, cfg, opts.seed);
    } else if (workload == "gemm") {
        r.k = opts.k != 0 ? opts.k : opts.n;
        bench_gemm(r, cfg, opts.seed);
    } else if (workload == "trisolve") {
        r.k = opts.k != 0 ? opts.k : 16;
        bench_trisolve(r, cfg, opts.seed);
    } else if (workload == "glm_logistic") {
        r.k = opts.k != 0 ? opts.k : 10;
        bench_glm_logistic(r, cfg, opts.seed);
    } else if (workload == "gp_gradient") {
        bench_gp_gradient(r, cfg, opts.seed);
    }
    return r;
}

std::string csv_header() {
    return "workload,n,k,repeats,device_time_s,reference_time_s,max_rel_err";
}

std::string csv_row(const BenchReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%.9f,%.9f,%.6e", r.workload.c_str(), r.n, r.k, r.repeats,
                  r.device_time_s, r.reference_time_s, r.max_rel_err);
    return buf;
}

void append_csv(const std::string& path, const BenchReport& r) {
    std::error_code ec;
    const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
    std::ofstream out(path, std::ios::app);
    if (!out) {
        throw std::runtime_error("cannot open '" + path + "' for appending");
    }
    if (fresh) {
        out << csv_header() << '\n';
    }
    out << csv_row(r) << '\n';
}

double normwise_rel_err(const HostMatrix& a, const HostMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("normwise_rel_err: shape mismatch");
    }
    if (a.size() == 0) {
        return 0.0;
    }
    const double diff = (a - b).cwiseAbs().maxCoeff();
    const double scale = b.cwiseAbs().maxCoeff();
    if (diff == 0.0) {
        return 0.0;
    }
    return scale == 0.0 ? std::numeric_limits<double>::infinity() : diff / scale;
}

}  // namespace blocklin
