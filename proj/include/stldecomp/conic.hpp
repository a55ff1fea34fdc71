#pragma once

// Small second-order cone programming solver.
//
//   minimize    c'x
//   subject to  A x = b
//               G x + s = h,   s in K
//
// K is a product of one nonnegative orthant followed by second-order cones
// {(t, u) : ||u|| <= t}. Primal-dual interior point on the homogeneous
// self-dual embedding, Nesterov-Todd scaling, Mehrotra predictor-corrector.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <string>
#include <utility>
#include <vector>

namespace stldecomp::conic {

using vec = Eigen::VectorXd;
using mat = Eigen::MatrixXd;
using sparse_rows = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using term = std::pair<int, double>;

struct cone_dims {
    int nonneg = 0;
    std::vector<int> soc;

    int size() const;
    int degree() const;
};

struct program {
    vec c;
    sparse_rows G;
    vec h;
    cone_dims cones;
    sparse_rows A;
    vec b;

    int num_vars() const { return static_cast<int>(c.size()); }
};

enum class status {
    optimal,
    primal_infeasible,
    dual_infeasible,
    max_iterations,
    numerical_failure,
};

const char* to_string(status st);

struct settings {
    double feastol = 1e-8;
    double abstol = 1e-8;
    double reltol = 1e-8;
    int max_iter = 100;
    double regularization = 1e-9;
    int refinement_steps = 8;
};

struct result {
    status st = status::numerical_failure;
    vec x, y, z, s;
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    double gap = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    int iterations = 0;

    bool ok() const { return st == status::optimal; }
};

result solve(const program& prob, const settings& opts = {});

namespace detail {
// ||W z - W^{-1} s|| for the Nesterov-Todd scaling at (s, z); exposed for tests
double nt_scaling_residual(const cone_dims& k, const vec& s, const vec& z);
} // namespace detail

// Affine expression constant + sum(coef * x[var]).
struct affine {
    std::vector<term> terms;
    double constant = 0.0;
};

// Incremental construction of a program. Linear inequality rows are placed in
// the orthant block in insertion order; cone blocks follow.
class builder {
public:
    explicit builder(int num_vars = 0);

    int add_variables(int count);
    int num_vars() const { return num_vars_; }

    void set_cost(int var, double coef);

    // sum(terms) <= rhs; returns the row index (= index into result::z)
    int add_leq(std::vector<term> terms, double rhs);
    // sum(terms) == rhs; returns index into result::y
    int add_eq(std::vector<term> terms, double rhs);
    // ||(e_1, ..., e_{k-1})|| <= e_0; returns the block number
    int add_soc(const std::vector<affine>& exprs);

    int num_leq() const { return static_cast<int>(leq_rhs_.size()); }
    int num_soc() const { return static_cast<int>(soc_.size()); }

    // offset of a cone block inside result::z once built
    int soc_offset(int block) const;

    program build() const;

private:
    int num_vars_;
    std::vector<double> cost_;
    std::vector<std::vector<term>> leq_rows_;
    std::vector<double> leq_rhs_;
    std::vector<std::vector<term>> eq_rows_;
    std::vector<double> eq_rhs_;
    std::vector<std::vector<affine>> soc_;
};

} // namespace stldecomp::conic
