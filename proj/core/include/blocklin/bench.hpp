#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "blocklin/config.hpp"
#include "blocklin/device_matrix.hpp"

namespace blocklin {

/// A[i][j] = n - |i - j| off the diagonal, A[i][i] = n^2.
HostMatrix generate_toeplitz(std::size_t n);

/// 64-bit Mersenne twister seeded from (seed, stream) through seed_seq, so
/// independent streams can be drawn from one user seed. Generators here use
/// Boost.Random distributions, whose output is fixed across platforms.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream);

struct LogisticData {
    HostMatrix x;
    std::vector<std::int32_t> y;
};

/// 3 x1 - 2 x2 + 1, the generating linear predictor of the logistic data.
double logistic_linear_predictor(double x1, double x2);

/// X iid standard normal, mu_i = 3 X(i,0) - 2 X(i,1) + 1 and
/// y_i ~ Bernoulli(1 / (1 + exp(-mu_i))). Requires k >= 2.
LogisticData generate_logistic_data(std::size_t n, std::size_t k, std::uint64_t seed);

/// Offset and scale of the GP test function
/// f(x) = beta (x + x^2 - x^3 + 100 sin 2x - alpha), chosen so that f has
/// mean 0 and variance 1 for x ~ Unif(-10, 10). Computed once by quadrature.
struct GpConstants {
    double alpha;
    double beta;
};
const GpConstants& gp_constants();
double gp_function(double x);

struct GpData {
    std::vector<double> x;
    std::vector<double> y;
};

/// x_i ~ Unif(-10, 10), y_i ~ Normal(f(x_i), 0.1).
GpData generate_gp_data(std::size_t n, std::uint64_t seed);

struct BenchReport {
    std::string workload;
    std::size_t n = 0;
    std::size_t k = 0;
    std::size_t repeats = 1;
    /// Medians over the repeats, in seconds.
    double device_time_s = 0.0;
    double reference_time_s = 0.0;
    /// max |device - reference| / max |reference| over the compared outputs.
    double max_rel_err = 0.0;
    double tolerance = 0.0;

    bool passed() const {
        return max_rel_err <= tolerance;
    }
};

const std::vector<std::string>& workload_names();
/// Throws std::invalid_argument for an unknown workload.
double workload_tolerance(const std::string& workload);

struct BenchOptions {
    std::size_t n = 0;
    /// 0 picks a per-workload default.
    std::size_t k = 0;
    std::size_t repeats = 9;
    std::uint64_t seed = 42;
    std::optional<double> tolerance;
};

/// Runs the device pipeline and the sequential host reference `repeats`
/// times each. Workloads: cholesky, cholesky_grad, gemm, trisolve,
/// glm_logistic, gp_gradient.
BenchReport run_bench(const std::string& workload, const BenchOptions& opts, const Config& cfg = {});

std::string csv_header();
std::string csv_row(const BenchReport& r);
/// Appends one row, writing the header first if the file is new or empty.
void append_csv(const std::string& path, const BenchReport& r);

/// max |a - b| / max |b|, with 0/0 taken as 0.
double normwise_rel_err(const HostMatrix& a, const HostMatrix& b);

}  // namespace blocklin
