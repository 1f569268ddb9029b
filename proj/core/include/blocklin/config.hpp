#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "blocklin/cholesky.hpp"
#include "blocklin/matmul.hpp"
#include "blocklin/trisolve.hpp"

namespace blocklin {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Tunables of every module, loadable from a flat key=value file:
///
///     # gemm
///     wpt = 8
///     tile = 32
///     split_s = 0
///     offload_min_nm = 250000
///     offload_min_k = 100
///     wg_vec = 64
///     # triangular inverse / solve
///     diag_block = 32
///     tri_offload_min_n = 500
///     # cholesky
///     chol_partition = 4
///     chol_min_l11 = 64
///     chol_grad_block = 128
///     chol_offload_min_n = 1024
///
/// Unknown keys, repeated keys and malformed values are errors.
struct Config {
    GemmConfig gemm {};
    TriSolveConfig tri {};
    /// Its gemm and tri members mirror the ones above after parsing.
    CholeskyConfig chol {};

    void validate() const;
};

Config parse_config(std::string_view text);
Config load_config(const std::string& path);

}  // namespace blocklin
