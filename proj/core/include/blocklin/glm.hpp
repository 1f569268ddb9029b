#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "blocklin/device_matrix.hpp"
#include "blocklin/matmul.hpp"

namespace blocklin {

enum class GlmFamily : std::uint8_t {
    NormalIdentity,
    BernoulliLogit,
    PoissonLog,
    NegBinomialLog,
    CategoricalLogit,
    OrdinalLogit,
};

const char* to_string(GlmFamily f);

struct GlmNeedGrad {
    bool alpha = false;
    bool beta = false;
    /// sigma (normal), phi (negative binomial) or cutpoints (ordinal).
    bool aux = false;
    bool x = false;
};

/// Inputs of one likelihood evaluation. The linear predictor is
/// eta = X beta + alpha.
///
/// - y_real: responses of NormalIdentity, length n.
/// - y_int: responses of the discrete families, length n. Categorical and
///   ordinal responses are 1-based categories.
/// - alpha: length 1 (shared) or n. CategoricalLogit takes one intercept per
///   category (length c).
/// - beta: k x 1, or k x c for CategoricalLogit (free parameterization, no
///   reference category).
/// - sigma: NormalIdentity standard deviation, length 1 or n.
/// - phi: NegBinomialLog dispersion; the variance is mu + mu^2 / phi.
/// - cutpoints: OrdinalLogit, c - 1 strictly increasing values.
struct GlmSpec {
    GlmFamily family = GlmFamily::NormalIdentity;
    std::vector<double> y_real;
    std::vector<std::int32_t> y_int;
    DeviceMatrix x;
    std::vector<double> alpha {0.0};
    HostMatrix beta;
    std::vector<double> sigma {1.0};
    double phi = 1.0;
    std::vector<double> cutpoints;
    GlmNeedGrad need;

    std::size_t n() const {
        return x.rows();
    }
    std::size_t k() const {
        return x.cols();
    }
    /// Number of categories (1 for the non-categorical families).
    std::size_t categories() const;

    /// Throws std::invalid_argument or std::domain_error on a violated
    /// precondition.
    void validate() const;
};

/// Gradients are set exactly when requested. grad_alpha and grad_aux have
/// the length of the corresponding parameter; grad_beta is shaped like beta
/// and grad_x like X.
struct GlmResult {
    double lp = 0.0;
    std::optional<std::vector<double>> grad_alpha;
    std::optional<HostMatrix> grad_beta;
    std::optional<std::vector<double>> grad_aux;
    std::optional<HostMatrix> grad_x;
};

struct GlmConfig {
    std::size_t work_group = 64;
    GemmConfig gemm {};
};

/// Log-likelihood with all normalizing constants, from one fused kernel per
/// family (one thread per observation, per-group tree reduction, host sum of
/// group partials). Coefficient and design gradients use a follow-up product
/// with the per-observation scores.
GlmResult glm_lpdf(const GlmSpec& spec, const GlmConfig& cfg = {});

/// Per-group sums of `values` with groups of `wg` consecutive elements,
/// reduced in fixed tree order. The last group may be partial.
std::vector<double> workgroup_reduce_sum(std::span<const double> values, std::size_t wg);

}  // namespace blocklin
