#include "stldecomp/geometry.hpp"

#include "stldecomp/conic.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace stldecomp {

vec similarity::stacked() const {
    vec eta(center.size() + 1);
    eta << center, scale;
    return eta;
}

similarity similarity::from_stacked(const vec& eta) {
    require(eta.size() >= 2, error_code::dimension_mismatch, "similarity: stacked vector too short");
    return {eta.head(eta.size() - 1), eta[eta.size() - 1]};
}

namespace {

// visit all k-subsets of {0..m-1}
template <class F>
void for_each_subset(int m, int k, F&& f) {
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = i;
    if (k > m) return;
    while (true) {
        f(idx);
        int i = k - 1;
        while (i >= 0 && idx[i] == m - k + i) --i;
        if (i < 0) return;
        ++idx[i];
        for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

mat take_rows(const mat& A, const std::vector<int>& rows) {
    mat out(rows.size(), A.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = A.row(rows[i]);
    return out;
}

bool has_recession_direction(const mat& A) {
    const int n = static_cast<int>(A.cols());
    const int m = static_cast<int>(A.rows());
    Eigen::FullPivLU<mat> full(A);
    full.setThreshold(1e-12);
    if (m == 0 || full.rank() < n) return true;
    bool found = false;
    for_each_subset(m, n - 1, [&](const std::vector<int>& rows) {
        if (found) return;
        vec d;
        if (n == 1) {
            d = vec::Ones(1);
        } else {
            Eigen::FullPivLU<mat> lu(take_rows(A, rows));
            lu.setThreshold(1e-12);
            if (lu.rank() != n - 1) return;
            d = lu.kernel().col(0);
            d.normalize();
        }
        const vec ad = A * d;
        const double tol = 1e-12 * (1.0 + A.cwiseAbs().maxCoeff());
        if (ad.maxCoeff() <= tol || (-ad).maxCoeff() <= tol) found = true;
    });
    return found;
}

void check_shape(const mat& A, const vec& c, const vec& z) {
    require(A.rows() > 0 && A.cols() > 0, error_code::dimension_mismatch, "polytope: empty normal matrix");
    require(c.size() == A.cols(), error_code::dimension_mismatch, "polytope: centre dimension does not match A");
    require(z.size() == A.rows(), error_code::dimension_mismatch, "polytope: offset count does not match A");
    require(A.allFinite() && c.allFinite() && z.allFinite(), error_code::contract_violation,
            "polytope: non-finite data");
}

} // namespace

std::vector<vec> enumerate_vertices(const mat& A, const vec& c, const vec& z) {
    check_shape(A, c, z);
    if (has_recession_direction(A)) fail(error_code::unbounded_polytope, "polytope: unbounded H-representation");
    const int n = static_cast<int>(A.cols());
    const int m = static_cast<int>(A.rows());
    std::vector<vec> out;
    const double scale = 1.0 + z.cwiseAbs().maxCoeff();
    for_each_subset(m, n, [&](const std::vector<int>& rows) {
        const mat As = take_rows(A, rows);
        Eigen::FullPivLU<mat> lu(As);
        lu.setThreshold(1e-12);
        if (lu.rank() < n) return;
        vec rhs(n);
        for (int i = 0; i < n; ++i) rhs[i] = z[rows[i]];
        const vec x = c + lu.solve(rhs);
        if ((A * (x - c) - z).maxCoeff() > vertex_dedup_tol * scale) return;
        for (const auto& v : out)
            if ((v - x).lpNorm<Eigen::Infinity>() <= vertex_dedup_tol * scale) return;
        out.push_back(x);
    });
    return out;
}

polytope::polytope(mat A, vec c, vec z) : A_(std::move(A)), c_(std::move(c)), z_(std::move(z)) {
    vertices_ = enumerate_vertices(A_, c_, z_);
}

const std::vector<vec>& polytope::vertices() const {
    if (vertices_.empty()) fail(error_code::empty_set, "polytope: empty set has no vertices");
    return vertices_;
}

polytope polytope::base() const {
    polytope p = *this;
    for (auto& v : p.vertices_) v -= c_;
    p.c_ = vec::Zero(c_.size());
    return p;
}

polytope polytope::scaled(const similarity& eta) const {
    require(eta.center.size() == dim(), error_code::dimension_mismatch, "polytope: similarity dimension mismatch");
    require(eta.scale >= 0.0, error_code::contract_violation, "polytope: negative scale");
    polytope p;
    p.A_ = A_;
    p.c_ = eta.center;
    p.z_ = eta.scale * z_;
    for (const auto& v : vertices_) p.vertices_.push_back(eta.center + eta.scale * (v - c_));
    if (eta.scale == 0.0 && !vertices_.empty()) p.vertices_.resize(1);
    return p;
}

polytope polytope::reflected() const {
    polytope p;
    p.A_ = -A_;
    p.c_ = -c_;
    p.z_ = z_;
    for (const auto& v : vertices_) p.vertices_.push_back(-v);
    return p;
}

polytope polytope::translated(const vec& offset) const {
    require(offset.size() == dim(), error_code::dimension_mismatch, "polytope: translation dimension mismatch");
    polytope p = *this;
    p.c_ += offset;
    for (auto& v : p.vertices_) v += offset;
    return p;
}

std::pair<vec, vec> polytope::bounding_box() const {
    const auto& vs = vertices();
    vec lo = vs.front(), hi = vs.front();
    for (const auto& v : vs) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    return {lo, hi};
}

double h_value(const polytope& p, const vec& x) {
    require(x.size() == p.dim(), error_code::dimension_mismatch, "h_value: point dimension mismatch");
    return (p.z() - p.A() * (x - p.c())).minCoeff();
}

bool contains(const polytope& p, const vec& x, double tol) {
    return h_value(p, x) >= -tol;
}

polytope regular_polytope(int n_sides, double beta, const vec& center) {
    require(n_sides >= 3, error_code::contract_violation, "regular_polytope: need at least 3 sides");
    require(beta > 0.0, error_code::contract_violation, "regular_polytope: beta must be positive");
    require(center.size() == 2, error_code::dimension_mismatch, "regular_polytope: only planar polygons");
    mat A(n_sides, 2);
    for (int k = 0; k < n_sides; ++k) {
        const double th = 2.0 * std::numbers::pi * k / n_sides;
        A(k, 0) = std::cos(th);
        A(k, 1) = std::sin(th);
    }
    return polytope(A, center, vec::Constant(n_sides, beta));
}

generator_matrix generator_matrix::from_shape(const mat& A, const vec& z) {
    const int n = static_cast<int>(A.cols());
    generator_matrix g;
    for (const auto& v : enumerate_vertices(A, vec::Zero(n), z)) {
        mat G(n, n + 1);
        G << mat::Identity(n, n), v;
        g.blocks.push_back(std::move(G));
    }
    require(!g.blocks.empty(), error_code::empty_set, "generator_matrix: empty shape");
    return g;
}

std::vector<vec> generator_matrix::apply(const similarity& eta) const {
    const vec e = eta.stacked();
    std::vector<vec> out;
    for (const auto& G : blocks) {
        require(G.cols() == e.size(), error_code::dimension_mismatch, "generator_matrix: similarity dimension");
        out.push_back(G * e);
    }
    return out;
}

polytope minkowski_sum_similar(const mat& A, const vec& z, std::span<const similarity> etas) {
    require(!etas.empty(), error_code::empty_sum, "minkowski_sum_similar: empty list");
    vec c = vec::Zero(A.cols());
    double alpha = 0.0;
    for (const auto& e : etas) {
        require(e.center.size() == A.cols(), error_code::dimension_mismatch, "minkowski_sum_similar: dimension");
        require(e.scale >= 0.0, error_code::contract_violation, "minkowski_sum_similar: negative scale");
        c += e.center;
        alpha += e.scale;
    }
    return polytope(A, c, alpha * z);
}

polytope placed_shape::realize() const {
    return polytope(A, eta.center, eta.scale * z);
}

inclusion_blocks make_inclusion_blocks(const mat& A1, const vec& z1, const mat& A2, const vec& z2) {
    require(A1.cols() == A2.cols(), error_code::dimension_mismatch, "inclusion: shapes of different dimension");
    require(A2.rows() == z2.size(), error_code::dimension_mismatch, "inclusion: offsets of outer shape");
    const int n = static_cast<int>(A1.cols());
    const int m2 = static_cast<int>(A2.rows());
    const auto g = generator_matrix::from_shape(A1, z1);
    const int nv = static_cast<int>(g.blocks.size());
    inclusion_blocks b;
    b.vertex_count = nv;
    b.M.resize(nv * m2, n + 1);
    b.Z.resize(nv * m2, n + 1);
    mat row_block(m2, n + 1);
    row_block << A2, z2;
    for (int k = 0; k < nv; ++k) {
        b.M.middleRows(k * m2, m2) = A2 * g.blocks[k];
        b.Z.middleRows(k * m2, m2) = row_block;
    }
    return b;
}

inclusion_result inclusion_check(const placed_shape& inner, const placed_shape& outer, double tol) {
    require(inner.eta.scale >= 0.0 && outer.eta.scale >= 0.0, error_code::contract_violation,
            "inclusion_check: negative scale");
    const auto b = make_inclusion_blocks(inner.A, inner.z, outer.A, outer.z);
    inclusion_result r;
    r.residual = b.M * inner.eta.stacked() - b.Z * outer.eta.stacked();
    r.max_violation = r.residual.maxCoeff();
    r.holds = r.max_violation <= tol;
    return r;
}

intersection_result intersection_feasible(std::span<const polytope> sets, double tol) {
    require(!sets.empty(), error_code::contract_violation, "intersection_feasible: no sets");
    const int n = sets.front().dim();
    for (const auto& p : sets)
        require(p.dim() == n, error_code::dimension_mismatch, "intersection_feasible: mixed dimensions");
    for (const auto& p : sets)
        if (p.is_empty()) return {false, std::nullopt, -1.0};
    // maximise t s.t. a_k'(x - c) + t ||a_k|| <= z_k for every facet
    conic::builder b(n + 1);
    b.set_cost(n, -1.0);
    double span = 1.0;
    for (const auto& p : sets) {
        for (int k = 0; k < p.rows(); ++k) {
            const double an = p.A().row(k).norm();
            if (an == 0.0) continue;
            std::vector<conic::term> t;
            for (int j = 0; j < n; ++j)
                if (p.A()(k, j) != 0.0) t.push_back({j, p.A()(k, j) / an});
            t.push_back({n, 1.0});
            b.add_leq(std::move(t), (p.z()[k] + p.A().row(k).dot(p.c())) / an);
        }
        const auto [lo, hi] = p.bounding_box();
        span = std::max(span, (hi - lo).norm());
    }
    b.add_leq({{n, 1.0}}, span);
    const auto res = conic::solve(b.build());
    if (!res.ok()) {
        std::ostringstream os;
        os << "intersection_feasible: LP ended with status " << conic::to_string(res.st);
        fail(error_code::solver_failure, os.str());
    }
    intersection_result r;
    r.margin = res.x[n];
    r.feasible = r.margin >= -tol;
    if (r.feasible) r.witness = res.x.head(n);
    return r;
}

intersection_result intersection_feasible(const polytope& a, const polytope& b, double tol) {
    const polytope both[] = {a, b};
    return intersection_feasible(std::span<const polytope>(both), tol);
}

} // namespace stldecomp
