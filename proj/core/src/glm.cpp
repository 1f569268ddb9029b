#include "blocklin/glm.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/special_functions/digamma.hpp>

#include "blocklin/kernels_basic.hpp"
#include "kernel_util.hpp"

namespace blocklin {

namespace {

constexpr auto In = ArgKind::In;
constexpr auto Out = ArgKind::Out;
constexpr auto S = ArgKind::Scalar;

// log(1 + e^x) without overflow
double log1p_exp(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// log(1 - e^x) for x < 0
double log1m_exp(double x) {
    return x > -std::numbers::ln2 ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x));
}

double inv_logit(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log of the logistic density, log(sigma(x) (1 - sigma(x)))
double log_inv_logit_deriv(double x) {
    return -log1p_exp(x) - log1p_exp(-x);
}

double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Number of reduced per-group quantities: lp, the summed eta score (or one
// per category), then the scalar auxiliary derivatives.
std::size_t reduced_count(GlmFamily f, std::size_t c) {
    switch (f) {
        case GlmFamily::NormalIdentity:
        case GlmFamily::NegBinomialLog:
            return 3;
        case GlmFamily::BernoulliLogit:
        case GlmFamily::PoissonLog:
            return 2;
        case GlmFamily::CategoricalLogit:
            return 1 + c;
        case GlmFamily::OrdinalLogit:
            return 2 + (c - 1);
    }
    return 1;
}

// args: partials, g, aux_obs, X, beta, y_real, y_int, alpha, aux,
//       n, k, c, alpha_len, aux_len, P
template<GlmFamily F>
void glm_body(const WorkGroup& grp, const KernelArgs& a) {
    const std::size_t n = a.size(9), k = a.size(10), c = a.size(11);
    const std::size_t alpha_len = a.size(12), aux_len = a.size(13), P = a.size(14);
    const std::size_t wg = grp.local_size(0);
    constexpr bool categorical = F == GlmFamily::CategoricalLogit;
    const std::size_t gw = categorical ? c : 1;

    auto partials = a.out(0);
    auto g = a.out(1);
    auto aux_obs = a.out(2);
    const auto X = a.in(3);
    const auto beta = a.in(4);
    const auto y_real = a.in(5);
    const auto y_int = a.in_i32(6);
    const auto alpha = a.in(7);
    const auto aux = a.in(8);

    std::vector<double> red(P * wg, 0.0);
    std::vector<double> eta(gw);

    grp.for_each_item([&](const WorkItem& it) {
        const std::size_t i = it.global[0], lid = it.local[0];
        if (i >= n) {
            return;
        }
        auto put = [&](std::size_t q, double v) { red[q * wg + lid] = v; };

        // one scalar product per linear predictor
        for (std::size_t col = 0; col < gw; ++col) {
            double s = 0.0;
            for (std::size_t l = 0; l < k; ++l) {
                s += X[i * k + l] * beta[l * gw + col];
            }
            if constexpr (categorical) {
                s += alpha[col];
            } else {
                s += alpha[alpha_len == 1 ? 0 : i];
            }
            eta[col] = s;
        }

        if constexpr (F == GlmFamily::NormalIdentity) {
            const double sigma = aux[aux_len == 1 ? 0 : i];
            const double r = y_real[i] - eta[0];
            const double lp = -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sigma) - r * r / (2.0 * sigma * sigma);
            const double d_eta = r / (sigma * sigma);
            const double d_sigma = -1.0 / sigma + r * r / (sigma * sigma * sigma);
            put(0, lp);
            put(1, d_eta);
            put(2, d_sigma);
            g[i] = d_eta;
            if (aux_len != 1) {
                aux_obs[i] = d_sigma;
            }
        } else if constexpr (F == GlmFamily::BernoulliLogit) {
            const double y = y_int[i];
            put(0, y * eta[0] - log1p_exp(eta[0]));
            g[i] = y - inv_logit(eta[0]);
            put(1, g[i]);
        } else if constexpr (F == GlmFamily::PoissonLog) {
            const double y = y_int[i];
            const double mu = std::exp(eta[0]);
            put(0, y * eta[0] - mu - std::lgamma(y + 1.0));
            g[i] = y - mu;
            put(1, g[i]);
        } else if constexpr (F == GlmFamily::NegBinomialLog) {
            const double y = y_int[i];
            const double phi = aux[0];
            const double log_phi = std::log(phi);
            const double log_mu_phi = log_sum_exp(eta[0], log_phi);  // log(mu + phi)
            const double lp = std::lgamma(y + phi) - std::lgamma(y + 1.0) - std::lgamma(phi)
                              + phi * (log_phi - log_mu_phi) + y * (eta[0] - log_mu_phi);
            g[i] = y - (y + phi) * std::exp(eta[0] - log_mu_phi);
            const double d_phi = boost::math::digamma(y + phi) - boost::math::digamma(phi) + (log_phi - log_mu_phi)
                                 + 1.0 - (y + phi) * std::exp(-log_mu_phi);
            put(0, lp);
            put(1, g[i]);
            put(2, d_phi);
        } else if constexpr (categorical) {
            const auto y = static_cast<std::size_t>(y_int[i] - 1);
            double m = eta[0];
            for (std::size_t col = 1; col < c; ++col) {
                m = std::max(m, eta[col]);
            }
            double z = 0.0;
            for (std::size_t col = 0; col < c; ++col) {
                z += std::exp(eta[col] - m);
            }
            const double lse = m + std::log(z);
            put(0, eta[y] - lse);
            for (std::size_t col = 0; col < c; ++col) {
                const double d = (col == y ? 1.0 : 0.0) - std::exp(eta[col] - lse);
                g[i * c + col] = d;
                put(1 + col, d);
            }
        } else {
            // ordinal: P(y) = sigma(eta - cut[y-2]) - sigma(eta - cut[y-1]),
            // with cut[-1] = -inf and cut[c-1] = +inf
            const auto y = static_cast<std::size_t>(y_int[i]);
            double lp = 0.0, d_eta = 0.0;
            if (y == 1) {
                const double b = eta[0] - aux[0];
                lp = -log1p_exp(b);
                d_eta = -inv_logit(b);
                put(2, inv_logit(b));
            } else if (y == c) {
                const double av = eta[0] - aux[c - 2];
                lp = -log1p_exp(-av);
                d_eta = inv_logit(-av);
                put(2 + c - 2, -inv_logit(-av));
            } else {
                const double av = eta[0] - aux[y - 2];
                const double b = eta[0] - aux[y - 1];
                lp = av + log1m_exp(b - av) - log1p_exp(av) - log1p_exp(b);
                d_eta = 1.0 - inv_logit(av) - inv_logit(b);
                put(2 + y - 2, -std::exp(log_inv_logit_deriv(av) - lp));
                put(2 + y - 1, std::exp(log_inv_logit_deriv(b) - lp));
            }
            put(0, lp);
            put(1, d_eta);
            g[i] = d_eta;
        }
    });

    const std::size_t group = grp.group_id(0);
    for (std::size_t q = 0; q < P; ++q) {
        partials[group * P + q] = detail::tree_reduce(std::span<double>(red.data() + q * wg, wg));
    }
}

const std::vector<ArgKind> kGlmSignature {Out, Out, Out, In, In, In, In, In, In, S, S, S, S, S, S};

const Kernel glm_normal("glm_normal_identity", kGlmSignature, GroupBody(glm_body<GlmFamily::NormalIdentity>));
const Kernel glm_bernoulli("glm_bernoulli_logit", kGlmSignature, GroupBody(glm_body<GlmFamily::BernoulliLogit>));
const Kernel glm_poisson("glm_poisson_log", kGlmSignature, GroupBody(glm_body<GlmFamily::PoissonLog>));
const Kernel glm_neg_binomial("glm_neg_binomial_log", kGlmSignature,
                              GroupBody(glm_body<GlmFamily::NegBinomialLog>));
const Kernel glm_categorical("glm_categorical_logit", kGlmSignature,
                             GroupBody(glm_body<GlmFamily::CategoricalLogit>));
const Kernel glm_ordinal("glm_ordinal_logit", kGlmSignature, GroupBody(glm_body<GlmFamily::OrdinalLogit>));

const Kernel& kernel_for(GlmFamily f) {
    switch (f) {
        case GlmFamily::NormalIdentity:
            return glm_normal;
        case GlmFamily::BernoulliLogit:
            return glm_bernoulli;
        case GlmFamily::PoissonLog:
            return glm_poisson;
        case GlmFamily::NegBinomialLog:
            return glm_neg_binomial;
        case GlmFamily::CategoricalLogit:
            return glm_categorical;
        case GlmFamily::OrdinalLogit:
            return glm_ordinal;
    }
    throw std::invalid_argument("glm: unknown family");
}

// args: partials, values, n
const Kernel reduce_kernel("workgroup_reduce_sum", {Out, In, S}, GroupBody([](const WorkGroup& g, const KernelArgs& a) {
                               const std::size_t n = a.size(2), wg = g.local_size(0);
                               const auto v = a.in(1);
                               std::vector<double> red(wg, 0.0);
                               g.for_each_item([&](const WorkItem& it) {
                                   if (it.global[0] < n) {
                                       red[it.local[0]] = v[it.global[0]];
                                   }
                               });
                               a.out(0)[g.group_id(0)] = detail::tree_reduce(red);
                           }));

DeviceBuffer upload(std::span<const double> v) {
    DeviceBuffer b = alloc_buffer(v.size());
    if (!v.empty()) {
        b.write(v);
    }
    return b;
}

}  // namespace

const char* to_string(GlmFamily f) {
    switch (f) {
        case GlmFamily::NormalIdentity:
            return "normal_identity";
        case GlmFamily::BernoulliLogit:
            return "bernoulli_logit";
        case GlmFamily::PoissonLog:
            return "poisson_log";
        case GlmFamily::NegBinomialLog:
            return "neg_binomial_log";
        case GlmFamily::CategoricalLogit:
            return "categorical_logit";
        case GlmFamily::OrdinalLogit:
            return "ordinal_logit";
    }
    return "?";
}

std::size_t GlmSpec::categories() const {
    switch (family) {
        case GlmFamily::CategoricalLogit:
            return static_cast<std::size_t>(beta.cols());
        case GlmFamily::OrdinalLogit:
            return cutpoints.size() + 1;
        default:
            return 1;
    }
}

void GlmSpec::validate() const {
    const std::string who = std::string("glm_lpdf(") + to_string(family) + "): ";
    const std::size_t nn = n(), kk = k(), c = categories();
    const bool categorical = family == GlmFamily::CategoricalLogit;
    if (static_cast<std::size_t>(beta.rows()) != kk) {
        throw std::invalid_argument(who + "beta has " + std::to_string(beta.rows()) + " rows, X has "
                                    + std::to_string(kk) + " columns");
    }
    if (categorical ? beta.cols() < 1 : beta.cols() != 1) {
        throw std::invalid_argument(who + "beta has the wrong number of columns");
    }
    if (categorical ? alpha.size() != c : (alpha.size() != 1 && alpha.size() != nn)) {
        throw std::invalid_argument(who + "alpha has length " + std::to_string(alpha.size()));
    }
    if (need.aux && (family == GlmFamily::BernoulliLogit || family == GlmFamily::PoissonLog || categorical)) {
        throw std::invalid_argument(who + "family has no auxiliary parameter");
    }

    if (family == GlmFamily::NormalIdentity) {
        if (y_real.size() != nn) {
            throw std::invalid_argument(who + "y has length " + std::to_string(y_real.size()) + ", expected "
                                        + std::to_string(nn));
        }
        if (sigma.size() != 1 && sigma.size() != nn) {
            throw std::invalid_argument(who + "sigma must have length 1 or n");
        }
        for (double s : sigma) {
            if (!(s > 0.0) || !std::isfinite(s)) {
                throw std::domain_error(who + "sigma must be positive and finite");
            }
        }
        return;
    }

    if (y_int.size() != nn) {
        throw std::invalid_argument(who + "y has length " + std::to_string(y_int.size()) + ", expected "
                                    + std::to_string(nn));
    }
    std::int32_t lo = 0, hi = std::numeric_limits<std::int32_t>::max();
    switch (family) {
        case GlmFamily::BernoulliLogit:
            hi = 1;
            break;
        case GlmFamily::CategoricalLogit:
        case GlmFamily::OrdinalLogit:
            lo = 1;
            hi = static_cast<std::int32_t>(c);
            break;
        default:
            break;
    }
    for (std::int32_t y : y_int) {
        if (y < lo || y > hi) {
            throw std::domain_error(who + "response " + std::to_string(y) + " outside [" + std::to_string(lo) + ", "
                                    + std::to_string(hi) + "]");
        }
    }
    if (family == GlmFamily::NegBinomialLog && (!(phi > 0.0) || !std::isfinite(phi))) {
        throw std::domain_error(who + "phi must be positive and finite");
    }
    if (family == GlmFamily::OrdinalLogit) {
        if (cutpoints.empty()) {
            throw std::invalid_argument(who + "at least one cutpoint is needed");
        }
        for (std::size_t q = 1; q < cutpoints.size(); ++q) {
            if (!(cutpoints[q] > cutpoints[q - 1])) {
                throw std::domain_error(who + "cutpoints must be strictly increasing");
            }
        }
    }
}

GlmResult glm_lpdf(const GlmSpec& spec, const GlmConfig& cfg) {
    spec.validate();
    if (cfg.work_group == 0) {
        throw std::invalid_argument("glm_lpdf: work group size must be positive");
    }
    const GlmFamily f = spec.family;
    const std::size_t n = spec.n(), k = spec.k(), c = spec.categories();
    const bool categorical = f == GlmFamily::CategoricalLogit;
    const std::size_t gw = categorical ? c : 1;
    const std::size_t P = reduced_count(f, c);
    const std::size_t wg = cfg.work_group;
    const std::size_t groups = detail::ceil_div(n, wg);

    std::vector<double> aux;
    if (f == GlmFamily::NormalIdentity) {
        aux = spec.sigma;
    } else if (f == GlmFamily::NegBinomialLog) {
        aux = {spec.phi};
    } else if (f == GlmFamily::OrdinalLogit) {
        aux = spec.cutpoints;
    }
    const bool sigma_vector = f == GlmFamily::NormalIdentity && spec.sigma.size() != 1;

    const DeviceMatrix beta = to_device(spec.beta);
    DeviceBuffer y_real = upload(spec.y_real);
    DeviceBuffer y_int = alloc_buffer(spec.y_int.size(), ElementType::I32);
    if (!spec.y_int.empty()) {
        y_int.write(std::span<const std::int32_t>(spec.y_int));
    }
    DeviceBuffer alpha = upload(spec.alpha);
    DeviceBuffer aux_buf = upload(aux);
    DeviceBuffer partials = alloc_buffer(groups * P);
    DeviceMatrix g(n, gw);
    DeviceBuffer aux_obs = alloc_buffer(sigma_vector ? n : 0);

    kernel_for(f)(NDRange(groups * wg), NDRange(wg), partials, g, aux_obs, spec.x, beta, y_real, y_int, alpha,
                  aux_buf, n, k, c, spec.alpha.size(), aux.size(), P);

    // cross-group sums on the host
    const std::vector<double> part = partials.read_f64();
    std::vector<double> sums(P, 0.0);
    for (std::size_t grp = 0; grp < groups; ++grp) {
        for (std::size_t q = 0; q < P; ++q) {
            sums[q] += part[grp * P + q];
        }
    }

    GlmResult r;
    r.lp = sums[0];
    if (spec.need.alpha) {
        if (categorical) {
            r.grad_alpha = std::vector<double>(sums.begin() + 1, sums.begin() + 1 + static_cast<std::ptrdiff_t>(c));
        } else if (spec.alpha.size() == 1) {
            r.grad_alpha = std::vector<double> {sums[1]};
        } else {
            r.grad_alpha = g.buffer().read_f64();
        }
    }
    if (spec.need.beta) {
        if (categorical) {
            r.grad_beta = from_device(multiply(transpose(spec.x), g, cfg.gemm));
        } else {
            r.grad_beta = HostMatrix(from_device(multiply(transpose(g), spec.x, cfg.gemm)).transpose());
        }
    }
    if (spec.need.x) {
        r.grad_x = from_device(multiply(g, transpose(beta), cfg.gemm));
    }
    if (spec.need.aux) {
        if (sigma_vector) {
            r.grad_aux = aux_obs.read_f64();
        } else if (f == GlmFamily::OrdinalLogit) {
            r.grad_aux = std::vector<double>(sums.begin() + 2, sums.end());
        } else {
            r.grad_aux = std::vector<double> {sums[2]};
        }
    }
    return r;
}

std::vector<double> workgroup_reduce_sum(std::span<const double> values, std::size_t wg) {
    if (wg == 0) {
        throw std::invalid_argument("workgroup_reduce_sum: work group size must be positive");
    }
    const std::size_t groups = detail::ceil_div(values.size(), wg);
    DeviceBuffer in = upload(values);
    DeviceBuffer out = alloc_buffer(groups);
    reduce_kernel(NDRange(groups * wg), NDRange(wg), out, in, values.size());
    return out.read_f64();
}

}  // namespace blocklin
