#include "stldecomp/conic.hpp"

#include "stldecomp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/OrderingMethods>

namespace stldecomp::conic {

int cone_dims::size() const {
    int n = nonneg;
    for (int k : soc) n += k;
    return n;
}

int cone_dims::degree() const {
    return nonneg + static_cast<int>(soc.size());
}

const char* to_string(status st) {
    switch (st) {
    case status::optimal: return "optimal";
    case status::primal_infeasible: return "primal_infeasible";
    case status::dual_infeasible: return "dual_infeasible";
    case status::max_iterations: return "max_iterations";
    case status::numerical_failure: return "numerical_failure";
    }
    return "unknown";
}

namespace {

// tolerance multiplier accepted when the iteration stalls near the optimum
constexpr double reduced_accuracy_factor = 100.0;
constexpr int equilibration_passes = 10;
constexpr int regularization_retries = 4;

constexpr double inf = std::numeric_limits<double>::infinity();

// per-cone Nesterov-Todd scaling
struct soc_scaling {
    double eta = 1.0;
    vec w; // normalised, w'Jw = 1
};

struct scaling {
    vec d;                       // orthant: W = diag(d)
    std::vector<soc_scaling> q;  // cones
    vec lambda;                  // W z = W^{-1} s
};

class cone_ops {
public:
    explicit cone_ops(const cone_dims& k) : k_(k) {
        int off = k.nonneg;
        for (int q : k.soc) {
            offsets_.push_back(off);
            off += q;
        }
        m_ = off;
    }

    int m() const { return m_; }
    int l() const { return k_.nonneg; }
    int nq() const { return static_cast<int>(k_.soc.size()); }
    int off(int j) const { return offsets_[j]; }
    int dim(int j) const { return k_.soc[j]; }

    vec identity() const {
        vec e = vec::Zero(m_);
        e.head(l()).setOnes();
        for (int j = 0; j < nq(); ++j) e[off(j)] = 1.0;
        return e;
    }

    // smallest t with u + t e in the cone interior boundary (negative if inside)
    double violation(const vec& u) const {
        double v = -inf;
        for (int i = 0; i < l(); ++i) v = std::max(v, -u[i]);
        for (int j = 0; j < nq(); ++j) {
            const int o = off(j), k = dim(j);
            v = std::max(v, u.segment(o + 1, k - 1).norm() - u[o]);
        }
        return v;
    }

    double max_step(const vec& u, const vec& du) const {
        double a = inf;
        for (int i = 0; i < l(); ++i)
            if (du[i] < 0) a = std::min(a, -u[i] / du[i]);
        for (int j = 0; j < nq(); ++j) a = std::min(a, soc_step(u, du, off(j), dim(j)));
        return a;
    }

    vec circ(const vec& u, const vec& v) const {
        vec r(m_);
        for (int i = 0; i < l(); ++i) r[i] = u[i] * v[i];
        for (int j = 0; j < nq(); ++j) {
            const int o = off(j), k = dim(j);
            r[o] = u.segment(o, k).dot(v.segment(o, k));
            r.segment(o + 1, k - 1) = u[o] * v.segment(o + 1, k - 1) + v[o] * u.segment(o + 1, k - 1);
        }
        return r;
    }

    // solves lambda o x = v
    vec idiv(const vec& lam, const vec& v) const {
        vec r(m_);
        for (int i = 0; i < l(); ++i) r[i] = v[i] / lam[i];
        for (int j = 0; j < nq(); ++j) {
            const int o = off(j), k = dim(j);
            const double l0 = lam[o];
            const auto l1 = lam.segment(o + 1, k - 1);
            const double v0 = v[o];
            const auto v1 = v.segment(o + 1, k - 1);
            const double rho = l0 * l0 - l1.squaredNorm();
            const double lv = l1.dot(v1);
            r[o] = (l0 * v0 - lv) / rho;
            r.segment(o + 1, k - 1) = v1 / l0 + l1 * ((-v0 + lv / l0) / rho);
        }
        return r;
    }

    scaling nt_scaling(const vec& s, const vec& z) const {
        scaling w;
        w.d.resize(l());
        w.lambda.resize(m_);
        for (int i = 0; i < l(); ++i) {
            w.d[i] = std::sqrt(s[i] / z[i]);
            w.lambda[i] = std::sqrt(s[i] * z[i]);
        }
        w.q.resize(nq());
        for (int j = 0; j < nq(); ++j) {
            const int o = off(j), k = dim(j);
            vec sj = s.segment(o, k), zj = z.segment(o, k);
            const double sn = std::sqrt(std::max(sj[0] * sj[0] - sj.tail(k - 1).squaredNorm(), 1e-300));
            const double zn = std::sqrt(std::max(zj[0] * zj[0] - zj.tail(k - 1).squaredNorm(), 1e-300));
            vec sb = sj / sn, zb = zj / zn;
            const double gamma = std::sqrt((1.0 + sb.dot(zb)) / 2.0);
            vec wb = sb;
            wb[0] += zb[0];
            wb.tail(k - 1) -= zb.tail(k - 1);
            wb /= 2.0 * gamma;
            w.q[j].eta = std::sqrt(sn / zn);
            w.q[j].w = wb;
        }
        vec zl = z;
        w.lambda.tail(m_ - l()) = apply_w(w, zl).tail(m_ - l());
        return w;
    }

    vec apply_w(const scaling& w, const vec& v) const { return apply(w, v, false); }
    vec apply_winv(const scaling& w, const vec& v) const { return apply(w, v, true); }

    // dense W'W of cone block j
    mat soc_w2(const scaling& w, int j) const {
        const int k = dim(j);
        mat wm = mat::Zero(k, k);
        const auto& q = w.q[j];
        const double w0 = q.w[0];
        const auto w1 = q.w.tail(k - 1);
        wm(0, 0) = w0;
        wm.block(0, 1, 1, k - 1) = w1.transpose();
        wm.block(1, 0, k - 1, 1) = w1;
        wm.block(1, 1, k - 1, k - 1) = mat::Identity(k - 1, k - 1) + w1 * w1.transpose() / (1.0 + w0);
        wm *= q.eta;
        return wm * wm;
    }

private:
    static double soc_step(const vec& u, const vec& du, int o, int k) {
        const double u0 = u[o], d0 = du[o];
        const auto u1 = u.segment(o + 1, k - 1);
        const auto d1 = du.segment(o + 1, k - 1);
        const double a = d0 * d0 - d1.squaredNorm();
        const double b = 2.0 * (u0 * d0 - u1.dot(d1));
        const double c = std::max(u0 * u0 - u1.squaredNorm(), 0.0);
        double t = inf;
        if (d0 < 0) t = -u0 / d0;
        if (std::abs(a) < 1e-300) {
            if (b < 0) t = std::min(t, -c / b);
            return t;
        }
        const double disc = b * b - 4.0 * a * c;
        if (disc < 0) return t;
        const double sq = std::sqrt(disc);
        // numerically stable roots
        const double qq = -0.5 * (b + (b >= 0 ? sq : -sq));
        double r1 = qq / a;
        double r2 = (qq != 0.0) ? c / qq : inf;
        for (double r : {r1, r2})
            if (r > 0 && r < t) t = r;
        return t;
    }

    vec apply(const scaling& w, const vec& v, bool inverse) const {
        vec r(m_);
        for (int i = 0; i < l(); ++i) r[i] = inverse ? v[i] / w.d[i] : v[i] * w.d[i];
        for (int j = 0; j < nq(); ++j) {
            const int o = off(j), k = dim(j);
            const auto& q = w.q[j];
            const double w0 = q.w[0];
            const auto w1 = q.w.tail(k - 1);
            const double v0 = v[o];
            const auto v1 = v.segment(o + 1, k - 1);
            const double wv = w1.dot(v1);
            if (!inverse) {
                r[o] = q.eta * (w0 * v0 + wv);
                r.segment(o + 1, k - 1) = q.eta * (v1 + (v0 + wv / (1.0 + w0)) * w1);
            } else {
                r[o] = (w0 * v0 - wv) / q.eta;
                r.segment(o + 1, k - 1) = (v1 + (-v0 + wv / (1.0 + w0)) * w1) / q.eta;
            }
        }
        return r;
    }

    const cone_dims& k_;
    std::vector<int> offsets_;
    int m_ = 0;
};

// Sparse LDL' for quasi-definite matrices (elimination tree + up-looking
// factorisation). Pivots with the wrong sign or tiny magnitude are replaced by
// +-delta, which refinement later corrects for.
class qd_ldl {
public:
    // entries: lower-triangle triplets (row >= col), fixed order between calls
    void analyze(int n, const std::vector<Eigen::Triplet<double>>& entries) {
        n_ = n;
        // fill-reducing order from the symmetric pattern
        Eigen::SparseMatrix<double> pat(n, n);
        pat.setFromTriplets(entries.begin(), entries.end());
        Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm;
        Eigen::AMDOrdering<int> amd;
        amd(pat, perm);
        newpos_.assign(n, 0);
        oldpos_.assign(n, 0);
        for (int k = 0; k < n; ++k) {
            oldpos_[k] = perm.indices()[k];
            newpos_[perm.indices()[k]] = k;
        }
        // upper-triangular CSC pattern of the permuted matrix
        std::vector<std::pair<int, int>> cells; // (col, row)
        cells.reserve(entries.size());
        for (const auto& t : entries) {
            int a = newpos_[t.row()], b = newpos_[t.col()];
            if (a > b) std::swap(a, b);
            cells.emplace_back(b, a);
        }
        std::vector<int> order(cells.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(), [&](int x, int y) { return cells[x] < cells[y]; });
        slot_.assign(cells.size(), 0);
        Ap_.assign(n + 1, 0);
        Ai_.clear();
        std::pair<int, int> last{-1, -1};
        for (int idx : order) {
            if (cells[idx] != last) {
                Ai_.push_back(cells[idx].second);
                ++Ap_[cells[idx].first + 1];
                last = cells[idx];
            }
            slot_[idx] = static_cast<int>(Ai_.size()) - 1;
        }
        for (int j = 0; j < n; ++j) Ap_[j + 1] += Ap_[j];
        // elimination tree and column counts
        parent_.assign(n, -1);
        lnz_.assign(n, 0);
        std::vector<int> flag(n, -1);
        for (int j = 0; j < n; ++j) {
            flag[j] = j;
            for (int p = Ap_[j]; p < Ap_[j + 1]; ++p) {
                int i = Ai_[p];
                while (i != j && flag[i] != j) {
                    if (parent_[i] == -1) parent_[i] = j;
                    ++lnz_[i];
                    flag[i] = j;
                    i = parent_[i];
                }
            }
        }
        Lp_.assign(n + 1, 0);
        for (int i = 0; i < n; ++i) Lp_[i + 1] = Lp_[i] + lnz_[i];
        Li_.assign(Lp_[n], 0);
        Lx_.assign(Lp_[n], 0.0);
        Ax_.assign(Ai_.size(), 0.0);
        D_.assign(n, 0.0);
        sign_.assign(n, 1);
    }

    // signs: +1 / -1 for each original index (expected pivot sign)
    void factor(const std::vector<Eigen::Triplet<double>>& entries, const std::vector<int>& signs,
                double eps, double delta) {
        std::fill(Ax_.begin(), Ax_.end(), 0.0);
        for (std::size_t i = 0; i < entries.size(); ++i) Ax_[slot_[i]] += entries[i].value();
        for (int k = 0; k < n_; ++k) sign_[k] = signs[oldpos_[k]];
        std::vector<double> y(n_, 0.0);
        std::vector<char> mark(n_, 0);
        std::vector<int> yidx(n_), buf(n_), next(n_);
        for (int i = 0; i < n_; ++i) next[i] = Lp_[i];
        for (int k = 0; k < n_; ++k) {
            int ny = 0;
            double d = 0.0;
            for (int p = Ap_[k]; p < Ap_[k + 1]; ++p) {
                const int b = Ai_[p];
                if (b == k) {
                    d = Ax_[p];
                    continue;
                }
                y[b] = Ax_[p];
                if (mark[b]) continue;
                int ne = 0;
                int nx = b;
                while (nx != -1 && nx < k && !mark[nx]) {
                    mark[nx] = 1;
                    buf[ne++] = nx;
                    nx = parent_[nx];
                }
                while (ne) yidx[ny++] = buf[--ne];
            }
            for (int i = ny - 1; i >= 0; --i) {
                const int c = yidx[i];
                const double yc = y[c];
                const int end = next[c];
                for (int j = Lp_[c]; j < end; ++j) y[Li_[j]] -= Lx_[j] * yc;
                Li_[end] = k;
                const double l = yc / D_[c];
                Lx_[end] = l;
                d -= yc * l;
                ++next[c];
                y[c] = 0.0;
                mark[c] = 0;
            }
            if (sign_[k] * d <= eps) d = sign_[k] * delta;
            D_[k] = d;
        }
    }

    vec solve(const vec& b) const {
        vec x(n_);
        for (int k = 0; k < n_; ++k) x[k] = b[oldpos_[k]];
        for (int i = 0; i < n_; ++i)
            for (int j = Lp_[i]; j < Lp_[i + 1]; ++j) x[Li_[j]] -= Lx_[j] * x[i];
        for (int i = 0; i < n_; ++i) x[i] /= D_[i];
        for (int i = n_ - 1; i >= 0; --i)
            for (int j = Lp_[i]; j < Lp_[i + 1]; ++j) x[i] -= Lx_[j] * x[Li_[j]];
        vec out(n_);
        for (int k = 0; k < n_; ++k) out[oldpos_[k]] = x[k];
        return out;
    }

private:
    int n_ = 0;
    std::vector<int> newpos_, oldpos_, slot_, Ap_, Ai_, parent_, lnz_, Lp_, Li_, sign_;
    std::vector<double> Ax_, Lx_, D_;
};

// Quasi-definite KKT system
//   [dI  A'  G'    ] [dx]   [bx]
//   [A  -dI  0     ] [dy] = [by]
//   [G   0  -W'W   ] [dz]   [bz]
// factored by sparse LDL'; the regularisation d is removed by iterative
// refinement against the unregularised matrix.
class kkt {
public:
    kkt(const program& p, const cone_ops& ops, const settings& opts)
        : p_(p), ops_(ops), opts_(opts), n_(p.num_vars()), pe_(static_cast<int>(p.b.size())) {}

    void factor(const scaling& w) {
        w_ = &w;
        const int m = ops_.m();
        const int N = n_ + pe_ + m;
        const double reg = opts_.regularization;
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(n_ + pe_ + p_.A.nonZeros() + p_.G.nonZeros() + m * 4);
        // lower triangle only
        for (int i = 0; i < n_; ++i) t.emplace_back(i, i, reg);
        for (int r = 0; r < pe_; ++r) {
            for (sparse_rows::InnerIterator a(p_.A, r); a; ++a) t.emplace_back(n_ + r, a.col(), a.value());
            t.emplace_back(n_ + r, n_ + r, -reg);
        }
        const int zo = n_ + pe_;
        for (int r = 0; r < m; ++r)
            for (sparse_rows::InnerIterator a(p_.G, r); a; ++a) t.emplace_back(zo + r, a.col(), a.value());
        for (int i = 0; i < ops_.l(); ++i) t.emplace_back(zo + i, zo + i, -w.d[i] * w.d[i] - reg);
        w2_soc_.clear();
        for (int j = 0; j < ops_.nq(); ++j) {
            const int o = ops_.off(j), k = ops_.dim(j);
            mat w2 = ops_.soc_w2(w, j);
            for (int a = 0; a < k; ++a)
                for (int b = 0; b <= a; ++b) t.emplace_back(zo + o + a, zo + o + b, -w2(a, b) - (a == b ? reg : 0.0));
            w2_soc_.push_back(std::move(w2));
        }
        if (!analyzed_) {
            ldl_.analyze(N, t);
            signs_.assign(N, -1);
            for (int i = 0; i < n_; ++i) signs_[i] = 1;
            analyzed_ = true;
        }
        ldl_.factor(t, signs_, 1e-13, 7e-8);
        ok_ = true;
    }

    bool ok() const { return ok_; }

    void solve(const vec& bx, const vec& by, const vec& bz, vec& dx, vec& dy, vec& dz) const {
        const int m = ops_.m();
        const int N = n_ + pe_ + m;
        vec rhs(N);
        rhs << bx, by, bz;
        vec sol = vec::Zero(N);
        vec r = rhs;
        const double nrm = 1.0 + rhs.lpNorm<Eigen::Infinity>();
        for (int it = 0; it <= opts_.refinement_steps; ++it) {
            sol += ldl_.solve(r);
            r = rhs - apply(sol);
            if (r.lpNorm<Eigen::Infinity>() < 1e-14 * nrm) break;
        }
        dx = sol.head(n_);
        dy = sol.segment(n_, pe_);
        dz = sol.tail(m);
    }

private:
    vec apply(const vec& u) const {
        const int m = ops_.m();
        const auto ux = u.head(n_);
        const auto uy = u.segment(n_, pe_);
        const auto uz = u.tail(m);
        vec out(u.size());
        out.head(n_) = p_.A.transpose() * uy + p_.G.transpose() * uz;
        out.segment(n_, pe_) = p_.A * ux;
        vec gz = p_.G * ux;
        for (int i = 0; i < ops_.l(); ++i) gz[i] -= w_->d[i] * w_->d[i] * uz[i];
        for (int j = 0; j < ops_.nq(); ++j) {
            const int o = ops_.off(j), k = ops_.dim(j);
            gz.segment(o, k) -= w2_soc_[j] * uz.segment(o, k);
        }
        out.tail(m) = gz;
        return out;
    }

    const program& p_;
    const cone_ops& ops_;
    const settings& opts_;
    int n_, pe_;
    const scaling* w_ = nullptr;
    std::vector<mat> w2_soc_;
    qd_ldl ldl_;
    std::vector<int> signs_;
    bool analyzed_ = false;
    bool ok_ = false;
};

void validate(const program& p) {
    const int n = p.num_vars();
    const int m = p.cones.size();
    require(p.G.cols() == n && p.G.rows() == m && p.h.size() == m, error_code::dimension_mismatch,
            "conic program: G/h do not match variables/cones");
    require(p.A.cols() == n && p.A.rows() == p.b.size(), error_code::dimension_mismatch,
            "conic program: A/b shape mismatch");
    for (int k : p.cones.soc)
        require(k >= 1, error_code::contract_violation, "conic program: empty second-order cone");
}


result solve_scaled(const program& p, const settings& opts) {
    const int n = p.num_vars();
    const int pe = static_cast<int>(p.b.size());
    cone_ops ops(p.cones);
    const int m = ops.m();
    const double deg = static_cast<double>(p.cones.degree());
    const vec e = ops.identity();

    result res;

    // initial point from the problem with W = I
    scaling ident;
    ident.d = vec::Ones(ops.l());
    ident.q.resize(ops.nq());
    for (int j = 0; j < ops.nq(); ++j) {
        ident.q[j].eta = 1.0;
        ident.q[j].w = vec::Zero(ops.dim(j));
        ident.q[j].w[0] = 1.0;
    }
    kkt sys(p, ops, opts);
    sys.factor(ident);

    vec x, y, z, s;
    {
        vec dx, dy, dz;
        sys.solve(vec::Zero(n), p.b, p.h, dx, dy, dz);
        x = dx;
        vec sh = -dz;
        const double ap = ops.violation(sh);
        s = ap < 0 ? sh : vec(sh + (1.0 + ap) * e);
        sys.solve(-p.c, vec::Zero(pe), vec::Zero(m), dx, dy, dz);
        y = dy;
        const double ad = ops.violation(dz);
        z = ad < 0 ? dz : vec(dz + (1.0 + ad) * e);
    }
    double tau = 1.0, kappa = 1.0;

    const double nb = std::max(1.0, p.b.size() ? p.b.norm() : 0.0);
    const double nh = std::max(1.0, p.h.norm());
    const double nc = std::max(1.0, p.c.norm());

    auto finish = [&](status st, int it) {
        res.st = st;
        res.iterations = it;
        if (st == status::primal_infeasible) {
            const double hb = -(p.h.dot(z) + (pe ? p.b.dot(y) : 0.0));
            res.x = vec::Zero(n);
            res.s = vec::Zero(m);
            res.y = y / hb;
            res.z = z / hb;
        } else if (st == status::dual_infeasible) {
            const double cx = -p.c.dot(x);
            res.x = x / cx;
            res.s = s / cx;
            res.y = vec::Zero(pe);
            res.z = vec::Zero(m);
        } else {
            res.x = x / tau;
            res.y = y / tau;
            res.z = z / tau;
            res.s = s / tau;
        }
        res.primal_objective = p.c.dot(res.x);
        res.dual_objective = -(p.h.dot(res.z) + (pe ? p.b.dot(res.y) : 0.0));
        return res;
    };

    // best iterate so far, measured by the worst ratio to the stopping tolerances
    struct snapshot {
        vec x, y, z, s;
        double tau = 1.0, kappa = 1.0, merit = inf, pres = 0.0, dres = 0.0, gap = 0.0;
    } best;
    auto fallback = [&](status st, int it) {
        if (best.merit > reduced_accuracy_factor) return finish(st, it);
        x = best.x, y = best.y, z = best.z, s = best.s, tau = best.tau, kappa = best.kappa;
        auto r = finish(status::optimal, it);
        r.primal_residual = best.pres;
        r.dual_residual = best.dres;
        r.gap = best.gap;
        return r;
    };

    int stalls = 0;
    for (int it = 0; it <= opts.max_iter; ++it) {
        const vec Ax = p.A * x;
        const vec Gx = p.G * x;
        const vec Aty = p.A.transpose() * y;
        const vec Gtz = p.G.transpose() * z;
        const double cx = p.c.dot(x);
        const double by = pe ? p.b.dot(y) : 0.0;
        const double hz = p.h.dot(z);

        const vec rx = Aty + Gtz + p.c * tau;
        const vec ry = -Ax + p.b * tau;
        const vec rz = -Gx + p.h * tau - s;
        const double rt = -cx - by - hz - kappa;

        const double gap = s.dot(z);
        const double mu = (gap + kappa * tau) / (deg + 1.0);
        const double pcost = cx / tau;
        const double dcost = -(by + hz) / tau;
        const double pres = std::max(pe ? ry.norm() / nb : 0.0, rz.norm() / nh) / tau;
        const double dres = rx.norm() / nc / tau;
        double relgap = inf;
        if (pcost < 0) relgap = gap / (tau * tau) / -pcost;
        else if (dcost > 0) relgap = gap / (tau * tau) / dcost;

        res.gap = gap / (tau * tau);
        res.primal_residual = pres;
        res.dual_residual = dres;

        const double merit =
            std::max({pres / opts.feastol, dres / opts.feastol,
                      std::min(gap / (tau * tau) / opts.abstol, relgap / opts.reltol)});
        if (merit < best.merit) best = {x, y, z, s, tau, kappa, merit, pres, dres, gap / (tau * tau)};

        if (pres < opts.feastol && dres < opts.feastol &&
            (gap / (tau * tau) < opts.abstol || relgap < opts.reltol))
            return finish(status::optimal, it);

        if (kappa > tau) {
            if (hz + by < 0) {
                const double pinf = (Aty + Gtz).norm() / -(hz + by);
                if (pinf < opts.feastol) return finish(status::primal_infeasible, it);
            }
            if (cx < 0) {
                const double dinf = std::max(pe ? Ax.norm() : 0.0, (Gx + s).norm()) / -cx;
                if (dinf < opts.feastol) return finish(status::dual_infeasible, it);
            }
        }
        if (it == opts.max_iter) break;
        if (!std::isfinite(gap) || !std::isfinite(tau)) return fallback(status::numerical_failure, it);

        const scaling w = ops.nt_scaling(s, z);
        sys.factor(w);
        if (!sys.ok()) return fallback(status::numerical_failure, it);
        const vec& lam = w.lambda;

        vec x1, y1, z1;
        sys.solve(-p.c, p.b, p.h, x1, y1, z1);
        const double g1 = p.c.dot(x1) + (pe ? p.b.dot(y1) : 0.0) + p.h.dot(z1);

        auto direction = [&](double eta, const vec& ds, double dk, vec& dx, vec& dy, vec& dz, vec& dsv,
                             double& dtau, double& dkap) {
            const vec lds = ops.idiv(lam, ds);
            vec x2, y2, z2;
            sys.solve(-eta * rx, eta * ry, eta * rz - ops.apply_w(w, lds), x2, y2, z2);
            const double g2 = p.c.dot(x2) + (pe ? p.b.dot(y2) : 0.0) + p.h.dot(z2);
            dtau = (-eta * rt + dk / tau + g2) / (kappa / tau - g1);
            dx = x2 + dtau * x1;
            dy = y2 + dtau * y1;
            dz = z2 + dtau * z1;
            dsv = ops.apply_w(w, lds - ops.apply_w(w, dz));
            dkap = (dk - kappa * dtau) / tau;
        };

        auto step_len = [&](const vec& dsv, const vec& dz, double dtau, double dkap) {
            double a = std::min(ops.max_step(s, dsv), ops.max_step(z, dz));
            if (dtau < 0) a = std::min(a, -tau / dtau);
            if (dkap < 0) a = std::min(a, -kappa / dkap);
            return a;
        };

        // predictor
        vec dxa, dya, dza, dsa;
        double dta, dka;
        const vec ds_aff = -ops.circ(lam, lam);
        direction(1.0, ds_aff, -kappa * tau, dxa, dya, dza, dsa, dta, dka);
        const double aa = std::min(1.0, step_len(dsa, dza, dta, dka));
        const double sigma = std::clamp(std::pow(1.0 - aa, 3), 0.0, 1.0);

        // corrector
        const vec corr = ops.circ(ops.apply_winv(w, dsa), ops.apply_w(w, dza));
        const vec ds_c = ds_aff - corr + sigma * mu * e;
        const double dk_c = -kappa * tau - dka * dta + sigma * mu;
        vec dx, dy, dz, dsv;
        double dt, dk;
        direction(1.0 - sigma, ds_c, dk_c, dx, dy, dz, dsv, dt, dk);
        double a = std::min(1.0, 0.99 * step_len(dsv, dz, dt, dk));
        if (!std::isfinite(a) || a < 1e-10) {
            if (++stalls > 3) return fallback(status::numerical_failure, it);
            continue;
        }

        x += a * dx;
        y += a * dy;
        z += a * dz;
        s += a * dsv;
        tau += a * dt;
        kappa += a * dk;
    }

    return fallback(status::max_iterations, opts.max_iter);
}

// Ruiz equilibration: x = D x', rows of G scaled by E (uniformly inside each
// cone block), rows of A by F.
struct equilibration {
    vec D, E, F;
};

equilibration equilibrate(const program& p, program& q) {
    const int n = p.num_vars();
    const int m = static_cast<int>(p.G.rows());
    const int pe = static_cast<int>(p.A.rows());
    equilibration eq{vec::Ones(n), vec::Ones(m), vec::Ones(pe)};
    q = p;
    auto clamp_inv_sqrt = [](double v) { return v > 0.0 ? std::clamp(1.0 / std::sqrt(v), 1e-4, 1e4) : 1.0; };
    for (int pass = 0; pass < equilibration_passes; ++pass) {
        vec col = vec::Zero(n), grow = vec::Zero(m), arow = vec::Zero(pe);
        for (int r = 0; r < m; ++r)
            for (sparse_rows::InnerIterator a(q.G, r); a; ++a) {
                const double v = std::abs(a.value());
                col[a.col()] = std::max(col[a.col()], v);
                grow[r] = std::max(grow[r], v);
            }
        for (int r = 0; r < pe; ++r)
            for (sparse_rows::InnerIterator a(q.A, r); a; ++a) {
                const double v = std::abs(a.value());
                col[a.col()] = std::max(col[a.col()], v);
                arow[r] = std::max(arow[r], v);
            }
        int off = p.cones.nonneg;
        for (int k : p.cones.soc) {
            const double mx = grow.segment(off, k).maxCoeff();
            grow.segment(off, k).setConstant(mx);
            off += k;
        }
        vec dc(n), dr(m), da(pe);
        for (int j = 0; j < n; ++j) dc[j] = clamp_inv_sqrt(col[j]);
        for (int r = 0; r < m; ++r) dr[r] = clamp_inv_sqrt(grow[r]);
        for (int r = 0; r < pe; ++r) da[r] = clamp_inv_sqrt(arow[r]);
        q.G = dr.asDiagonal() * q.G * dc.asDiagonal();
        if (pe) q.A = da.asDiagonal() * q.A * dc.asDiagonal();
        eq.D.array() *= dc.array();
        eq.E.array() *= dr.array();
        eq.F.array() *= da.array();
    }
    q.c = eq.D.cwiseProduct(p.c);
    q.h = eq.E.cwiseProduct(p.h);
    q.b = eq.F.cwiseProduct(p.b);
    return eq;
}

} // namespace

result solve(const program& p, const settings& opts) {
    validate(p);
    program q;
    const auto eq = equilibrate(p, q);
    result r = solve_scaled(q, opts);
    // a broken factorisation usually recovers with stronger regularisation
    settings retry = opts;
    for (int k = 0; k < regularization_retries && r.st == status::numerical_failure; ++k) {
        retry.regularization *= 10.0;
        r = solve_scaled(q, retry);
    }
    if (r.x.size()) r.x = eq.D.cwiseProduct(r.x);
    if (r.s.size()) r.s = r.s.cwiseQuotient(eq.E);
    if (r.z.size()) r.z = eq.E.cwiseProduct(r.z);
    if (r.y.size()) r.y = eq.F.cwiseProduct(r.y);
    return r;
}

namespace detail {
double nt_scaling_residual(const cone_dims& k, const vec& s, const vec& z) {
    cone_ops ops(k);
    const scaling w = ops.nt_scaling(s, z);
    return (ops.apply_w(w, z) - ops.apply_winv(w, s)).norm();
}
} // namespace detail

builder::builder(int num_vars) : num_vars_(num_vars), cost_(num_vars, 0.0) {}

int builder::add_variables(int count) {
    const int first = num_vars_;
    num_vars_ += count;
    cost_.resize(num_vars_, 0.0);
    return first;
}

void builder::set_cost(int var, double coef) {
    require(var >= 0 && var < num_vars_, error_code::contract_violation, "builder: variable out of range");
    cost_[var] = coef;
}

int builder::add_leq(std::vector<term> terms, double rhs) {
    leq_rows_.push_back(std::move(terms));
    leq_rhs_.push_back(rhs);
    return static_cast<int>(leq_rhs_.size()) - 1;
}

int builder::add_eq(std::vector<term> terms, double rhs) {
    eq_rows_.push_back(std::move(terms));
    eq_rhs_.push_back(rhs);
    return static_cast<int>(eq_rhs_.size()) - 1;
}

int builder::add_soc(const std::vector<affine>& exprs) {
    require(!exprs.empty(), error_code::contract_violation, "builder: empty cone");
    soc_.push_back(exprs);
    return static_cast<int>(soc_.size()) - 1;
}

int builder::soc_offset(int block) const {
    int off = num_leq();
    for (int j = 0; j < block; ++j) off += static_cast<int>(soc_[j].size());
    return off;
}

program builder::build() const {
    program p;
    p.c = Eigen::Map<const vec>(cost_.data(), num_vars_);
    p.cones.nonneg = num_leq();
    int m = num_leq();
    for (const auto& q : soc_) {
        p.cones.soc.push_back(static_cast<int>(q.size()));
        m += static_cast<int>(q.size());
    }
    std::vector<Eigen::Triplet<double>> trip;
    p.h.resize(m);
    int row = 0;
    auto check = [&](int v) {
        require(v >= 0 && v < num_vars_, error_code::contract_violation, "builder: variable out of range");
    };
    for (std::size_t i = 0; i < leq_rows_.size(); ++i, ++row) {
        for (const auto& [v, a] : leq_rows_[i]) {
            check(v);
            trip.emplace_back(row, v, a);
        }
        p.h[row] = leq_rhs_[i];
    }
    // s = e(x) = constant + sum terms  ->  G = -terms, h = constant
    for (const auto& q : soc_)
        for (const auto& ex : q) {
            for (const auto& [v, a] : ex.terms) {
                check(v);
                trip.emplace_back(row, v, -a);
            }
            p.h[row] = ex.constant;
            ++row;
        }
    p.G.resize(m, num_vars_);
    p.G.setFromTriplets(trip.begin(), trip.end());
    trip.clear();
    p.b.resize(static_cast<int>(eq_rhs_.size()));
    for (std::size_t i = 0; i < eq_rows_.size(); ++i) {
        for (const auto& [v, a] : eq_rows_[i]) {
            check(v);
            trip.emplace_back(static_cast<int>(i), v, a);
        }
        p.b[static_cast<int>(i)] = eq_rhs_[i];
    }
    p.A.resize(static_cast<int>(eq_rhs_.size()), num_vars_);
    p.A.setFromTriplets(trip.begin(), trip.end());
    return p;
}

} // namespace stldecomp::conic
