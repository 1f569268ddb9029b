#include "blocklin/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "blocklin/kernels_basic.hpp"

namespace blocklin {

namespace {

void require_adjoints(VjpMode mode, const DeviceMatrix* adj_a, const DeviceMatrix* adj_b, const char* what) {
    const bool want_a = mode != VjpMode::DataVar;
    const bool want_b = mode != VjpMode::VarData;
    if (want_a != (adj_a != nullptr) || want_b != (adj_b != nullptr)) {
        throw std::invalid_argument(std::string(what) + ": adjoint arguments do not match the mode");
    }
}

void require_shape(const DeviceMatrix& m, std::size_t rows, std::size_t cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(rows) + "x"
                                    + std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x"
                                    + std::to_string(m.cols()));
    }
}

VarMatrix record_multiply(Tape& t, VjpMode mode, const DeviceMatrix& a, const DeviceMatrix& b, DeviceMatrix adj_a,
                          DeviceMatrix adj_b, const GemmConfig& cfg) {
    VarMatrix c = t.intermediate(multiply(a, b, cfg));
    t.record([=]() mutable {
        gemm_vjp(mode, a, b, c.adj, mode == VjpMode::DataVar ? nullptr : &adj_a,
                 mode == VjpMode::VarData ? nullptr : &adj_b, cfg);
    });
    return c;
}

VarMatrix record_solve(Tape& t, VjpMode mode, const DeviceMatrix& a, const DeviceMatrix& b, DeviceMatrix adj_a,
                       DeviceMatrix adj_b, const TriSolveConfig& tri, const GemmConfig& gemm) {
    VarMatrix c = t.intermediate(triangular_solve(a, b, tri, gemm));
    const DeviceMatrix c_val = c.val;
    t.record([=]() mutable {
        trisolve_vjp(mode, a, c_val, c.adj, mode == VjpMode::DataVar ? nullptr : &adj_a,
                     mode == VjpMode::VarData ? nullptr : &adj_b, tri, gemm);
    });
    return c;
}

}  // namespace

VarMatrix Tape::leaf(DeviceMatrix value) {
    VarMatrix v = make_var(std::move(value));
    leaf_adj_.push_back(v.adj);
    return v;
}

VarScalar Tape::leaf(double value) {
    VarScalar v(value);
    leaf_scalars_.push_back(v);
    return v;
}

VarMatrix Tape::intermediate(DeviceMatrix value) {
    VarMatrix v = make_var(std::move(value));
    inter_adj_.push_back(v.adj);
    return v;
}

VarScalar Tape::intermediate(double value) {
    VarScalar v(value);
    inter_scalars_.push_back(v);
    return v;
}

void Tape::record(std::function<void()> backward) {
    nodes_.push_back(std::move(backward));
}

void Tape::grad(const VarScalar& root) {
    for (DeviceMatrix& adj : inter_adj_) {
        set_zeros(adj);
    }
    for (const VarScalar& s : inter_scalars_) {
        s.set_adjoint(0.0);
    }
    root.add_adjoint(1.0);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        (*it)();
    }
}

void Tape::zero_adjoints() {
    for (auto* list : {&leaf_adj_, &inter_adj_}) {
        for (DeviceMatrix& adj : *list) {
            set_zeros(adj);
        }
    }
    for (auto* list : {&leaf_scalars_, &inter_scalars_}) {
        for (const VarScalar& s : *list) {
            s.set_adjoint(0.0);
        }
    }
}

void Tape::clear() {
    nodes_.clear();
    leaf_adj_.clear();
    inter_adj_.clear();
    leaf_scalars_.clear();
    inter_scalars_.clear();
}

void gemm_vjp(VjpMode mode, const DeviceMatrix& a, const DeviceMatrix& b, const DeviceMatrix& adj_c,
              DeviceMatrix* adj_a, DeviceMatrix* adj_b, const GemmConfig& cfg) {
    require_adjoints(mode, adj_a, adj_b, "gemm_vjp");
    require_shape(adj_c, a.rows(), b.cols(), "gemm_vjp adjoint of C");
    if (adj_a != nullptr) {
        accumulate(*adj_a, multiply(adj_c, transpose(b), cfg));
    }
    if (adj_b != nullptr) {
        accumulate(*adj_b, multiply(transpose(a), adj_c, cfg));
    }
}

void trisolve_vjp(VjpMode mode, const DeviceMatrix& a, const DeviceMatrix& c, const DeviceMatrix& adj_c,
                  DeviceMatrix* adj_a, DeviceMatrix* adj_b, const TriSolveConfig& tri, const GemmConfig& gemm) {
    require_adjoints(mode, adj_a, adj_b, "trisolve_vjp");
    require_shape(adj_c, c.rows(), c.cols(), "trisolve_vjp adjoint of C");
    // C = A^{-1} B, so the adjoint of B solves A^T X = adj_c
    const DeviceMatrix adj_b_new = triangular_solve(transpose(a), adj_c, tri, gemm);
    if (adj_b != nullptr) {
        accumulate(*adj_b, adj_b_new);
    }
    if (adj_a != nullptr) {
        DeviceMatrix g = multiply(adj_b_new, transpose(c), gemm);
        g.set_view(a.view());
        accumulate(*adj_a, g, -1.0);
    }
}

void cholesky_vjp(const DeviceMatrix& l, const DeviceMatrix& adj_l, DeviceMatrix& adj_a, const CholeskyConfig& cfg) {
    accumulate(adj_a, cholesky_gradient(l, adj_l, cfg));
}

VarMatrix multiply(Tape& t, const VarMatrix& a, const VarMatrix& b, const GemmConfig& cfg) {
    return record_multiply(t, VjpMode::VarVar, a.val, b.val, a.adj, b.adj, cfg);
}

VarMatrix multiply(Tape& t, const VarMatrix& a, const DeviceMatrix& b, const GemmConfig& cfg) {
    return record_multiply(t, VjpMode::VarData, a.val, b, a.adj, DeviceMatrix(), cfg);
}

VarMatrix multiply(Tape& t, const DeviceMatrix& a, const VarMatrix& b, const GemmConfig& cfg) {
    return record_multiply(t, VjpMode::DataVar, a, b.val, DeviceMatrix(), b.adj, cfg);
}

VarMatrix triangular_solve(Tape& t, const VarMatrix& a, const VarMatrix& b, const TriSolveConfig& tri,
                           const GemmConfig& gemm) {
    return record_solve(t, VjpMode::VarVar, a.val, b.val, a.adj, b.adj, tri, gemm);
}

VarMatrix triangular_solve(Tape& t, const VarMatrix& a, const DeviceMatrix& b, const TriSolveConfig& tri,
                           const GemmConfig& gemm) {
    return record_solve(t, VjpMode::VarData, a.val, b, a.adj, DeviceMatrix(), tri, gemm);
}

VarMatrix triangular_solve(Tape& t, const DeviceMatrix& a, const VarMatrix& b, const TriSolveConfig& tri,
                           const GemmConfig& gemm) {
    return record_solve(t, VjpMode::DataVar, a, b.val, DeviceMatrix(), b.adj, tri, gemm);
}

VarMatrix cholesky_decompose(Tape& t, const VarMatrix& a, const CholeskyConfig& cfg) {
    VarMatrix l = t.intermediate(cholesky_decompose(a.val, cfg));
    DeviceMatrix adj_a = a.adj;
    t.record([l, adj_a, cfg]() mutable { cholesky_vjp(l.val, l.adj, adj_a, cfg); });
    return l;
}

VarScalar weighted_sum(Tape& t, const VarMatrix& x, const DeviceMatrix& w) {
    require_shape(w, x.rows(), x.cols(), "weighted_sum weights");
    const HostMatrix xv = from_device(x.val);
    const HostMatrix wv = from_device(w);
    VarScalar s = t.intermediate(xv.cwiseProduct(wv).sum());
    DeviceMatrix adj = x.adj;
    t.record([s, adj, w]() mutable { accumulate(adj, w, s.adjoint()); });
    return s;
}

VarScalar sum(Tape& t, const VarMatrix& x) {
    return weighted_sum(t, x, to_device(HostMatrix::Ones(x.rows(), x.cols())));
}

VarScalar dot_self(Tape& t, const VarMatrix& x) {
    const HostMatrix xv = from_device(x.val);
    VarScalar s = t.intermediate(xv.squaredNorm());
    DeviceMatrix adj = x.adj;
    const DeviceMatrix val = x.val;
    t.record([s, adj, val]() mutable { accumulate(adj, val, 2.0 * s.adjoint()); });
    return s;
}

VarScalar sum_log_diagonal(Tape& t, const VarMatrix& x) {
    if (x.rows() != x.cols()) {
        throw std::invalid_argument("sum_log_diagonal: matrix must be square");
    }
    const HostMatrix xv = from_device(x.val);
    VarScalar s = t.intermediate(xv.diagonal().array().log().sum());
    DeviceMatrix adj = x.adj;
    const DeviceMatrix inv_diag = to_device(HostMatrix(xv.diagonal().cwiseInverse().asDiagonal()));
    t.record([s, adj, inv_diag]() mutable { accumulate(adj, inv_diag, s.adjoint()); });
    return s;
}

VarScalar scale(Tape& t, const VarScalar& x, double k) {
    VarScalar s = t.intermediate(k * x.value());
    t.record([s, x, k]() { x.add_adjoint(k * s.adjoint()); });
    return s;
}

VarScalar add(Tape& t, const VarScalar& x, const VarScalar& y) {
    VarScalar s = t.intermediate(x.value() + y.value());
    t.record([s, x, y]() {
        x.add_adjoint(s.adjoint());
        y.add_adjoint(s.adjoint());
    });
    return s;
}

HostMatrix finite_diff_gradient(const std::function<double(const HostMatrix&)>& f, const HostMatrix& a,
                                double step) {
    if (!(step > 0.0)) {
        throw std::invalid_argument("finite_diff_gradient: step must be positive");
    }
    HostMatrix g(a.rows(), a.cols());
    HostMatrix p = a;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            const double orig = p(i, j);
            p(i, j) = orig + step;
            const double up = f(p);
            p(i, j) = orig - step;
            const double down = f(p);
            p(i, j) = orig;
            g(i, j) = (up - down) / (2.0 * step);
        }
    }
    return g;
}

}  // namespace blocklin
