#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "blocklin/cholesky.hpp"
#include "blocklin/device_matrix.hpp"
#include "blocklin/matmul.hpp"
#include "blocklin/trisolve.hpp"

namespace blocklin {

/// Which operands of a binary op are variables: VarVar, VarData (only the
/// left one) or DataVar (only the right one).
enum class VjpMode : std::uint8_t { VarVar, VarData, DataVar };

/// Scalar autodiff variable. Copies share value and adjoint.
class VarScalar {
  public:
    VarScalar() : VarScalar(0.0) {}
    explicit VarScalar(double value) : node_(std::make_shared<Node>(Node {value, 0.0})) {}

    double value() const {
        return node_->value;
    }
    double adjoint() const {
        return node_->adj;
    }
    void set_adjoint(double a) const {
        node_->adj = a;
    }
    void add_adjoint(double a) const {
        node_->adj += a;
    }

    friend bool operator==(const VarScalar& a, const VarScalar& b) {
        return a.node_ == b.node_;
    }

  private:
    struct Node {
        double value;
        double adj;
    };
    std::shared_ptr<Node> node_;
};

/// Records operations and replays their vjps backwards.
///
/// Leaves are created with leaf(); ops create intermediates. grad() resets
/// intermediate adjoints, adds 1 to the root adjoint and runs every recorded
/// vjp in reverse order. Leaf adjoints are never reset by grad(), so two
/// calls without zero_adjoints() in between give twice the gradient.
class Tape {
  public:
    VarMatrix leaf(DeviceMatrix value);
    VarScalar leaf(double value);

    VarMatrix intermediate(DeviceMatrix value);
    VarScalar intermediate(double value);

    /// Append a vjp closure. It runs once per grad() call.
    void record(std::function<void()> backward);

    std::size_t size() const {
        return nodes_.size();
    }
    bool empty() const {
        return nodes_.empty();
    }

    void grad(const VarScalar& root);
    /// Zero every adjoint known to the tape, leaves included.
    void zero_adjoints();
    /// Forget all nodes and variables.
    void clear();

  private:
    std::vector<std::function<void()>> nodes_;
    std::vector<DeviceMatrix> leaf_adj_;
    std::vector<DeviceMatrix> inter_adj_;
    std::vector<VarScalar> leaf_scalars_;
    std::vector<VarScalar> inter_scalars_;
};

/// C = A B. adj_a += adj_c B^T when A is a variable, adj_b += A^T adj_c when
/// B is. Adjoint pointers for data operands must be null and are never
/// touched.
void gemm_vjp(VjpMode mode, const DeviceMatrix& a, const DeviceMatrix& b, const DeviceMatrix& adj_c,
              DeviceMatrix* adj_a, DeviceMatrix* adj_b, const GemmConfig& cfg = {});

/// C = A^{-1} B for triangular A. With adj_b' = A^{-T} adj_c:
/// adj_b += adj_b', adj_a += -adj_b' C^T restricted to the view of A.
void trisolve_vjp(VjpMode mode, const DeviceMatrix& a, const DeviceMatrix& c, const DeviceMatrix& adj_c,
                  DeviceMatrix* adj_a, DeviceMatrix* adj_b, const TriSolveConfig& tri = {},
                  const GemmConfig& gemm = {});

/// adj_a += cholesky_gradient(L, adj_l).
void cholesky_vjp(const DeviceMatrix& l, const DeviceMatrix& adj_l, DeviceMatrix& adj_a,
                  const CholeskyConfig& cfg = {});

// Recording ops.

VarMatrix multiply(Tape& t, const VarMatrix& a, const VarMatrix& b, const GemmConfig& cfg = {});
VarMatrix multiply(Tape& t, const VarMatrix& a, const DeviceMatrix& b, const GemmConfig& cfg = {});
VarMatrix multiply(Tape& t, const DeviceMatrix& a, const VarMatrix& b, const GemmConfig& cfg = {});

VarMatrix triangular_solve(Tape& t, const VarMatrix& a, const VarMatrix& b, const TriSolveConfig& tri = {},
                           const GemmConfig& gemm = {});
VarMatrix triangular_solve(Tape& t, const VarMatrix& a, const DeviceMatrix& b, const TriSolveConfig& tri = {},
                           const GemmConfig& gemm = {});
VarMatrix triangular_solve(Tape& t, const DeviceMatrix& a, const VarMatrix& b, const TriSolveConfig& tri = {},
                           const GemmConfig& gemm = {});

/// L = chol(A). L has view Lower; only the lower triangle of A is read, so
/// the adjoint of A is lower triangular.
VarMatrix cholesky_decompose(Tape& t, const VarMatrix& a, const CholeskyConfig& cfg = {});

VarScalar sum(Tape& t, const VarMatrix& x);
/// sum of w(i,j) * x(i,j)
VarScalar weighted_sum(Tape& t, const VarMatrix& x, const DeviceMatrix& w);
/// sum of x(i,j)^2
VarScalar dot_self(Tape& t, const VarMatrix& x);
/// sum of log x(i,i)
VarScalar sum_log_diagonal(Tape& t, const VarMatrix& x);
VarScalar scale(Tape& t, const VarScalar& x, double s);
VarScalar add(Tape& t, const VarScalar& x, const VarScalar& y);

/// Central differences (f(A + h E_ij) - f(A - h E_ij)) / 2h for every entry.
HostMatrix finite_diff_gradient(const std::function<double(const HostMatrix&)>& f, const HostMatrix& a,
                                double step);

}  // namespace blocklin
