#include "reserve/qp.hpp"

#include "json.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <vector>

namespace reserve {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Arr = Eigen::ArrayXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;
using SpMat = Eigen::SparseMatrix<double>;

double amax(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }
double amax(const Arr& v) { return v.size() ? v.abs().maxCoeff() : 0.0; }

// Row/column inf-norm equilibration: returns scaled matrix and the diagonal scalings
// such that As = diag(drow) * A * diag(dcol).
void ruiz(const SpMat& A, SpMat& As, Eigen::VectorXd& drow, Eigen::VectorXd& dcol) {
    const Eigen::Index mr = A.rows(), n = A.cols();
    drow = Eigen::VectorXd::Ones(mr);
    dcol = Eigen::VectorXd::Ones(n);
    As = A;
    if (As.nonZeros() == 0) return;
    Eigen::VectorXd rn(mr), cn(n);
    // empty rows/columns keep scale 1
    auto norm_or_one = [](Eigen::VectorXd& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i)
            v(i) = v(i) == 0.0 ? 1.0 : std::sqrt(std::max(v(i), 1e-12));
    };
    for (int pass = 0; pass < 10; ++pass) {
        rn.setZero();
        for (Eigen::Index j = 0; j < As.outerSize(); ++j)
            for (SpMat::InnerIterator it(As, j); it; ++it)
                rn(it.row()) = std::max(rn(it.row()), std::abs(it.value()));
        norm_or_one(rn);
        cn.setZero();
        for (Eigen::Index j = 0; j < As.outerSize(); ++j) {
            for (SpMat::InnerIterator it(As, j); it; ++it) {
                it.valueRef() /= rn(it.row());
                cn(j) = std::max(cn(j), std::abs(it.value()));
            }
        }
        drow.array() /= rn.array();
        norm_or_one(cn);
        for (Eigen::Index j = 0; j < As.outerSize(); ++j)
            for (SpMat::InnerIterator it(As, j); it; ++it) it.valueRef() /= cn(j);
        dcol.array() /= cn.array();
    }
}

struct Best {
    Eigen::VectorXd x, nu;
    double merit = kInf, mu = 0, pr = 0, dr = 0, gap = 0;
    bool set = false;
};

// Farkas-style certificate: a normalized multiplier with A'nu ~ 0 whose support value
// sum_i nu_i * (nu_i > 0 ? up_i : lo_i) is strictly negative proves primal infeasibility.
bool infeasibility_certificate(const SpMat& AT, const Eigen::VectorXd& lo,
                               const Eigen::VectorXd& up, const Eigen::VectorXd& nu) {
    const double nrm = amax(nu);
    if (!(nrm > 1e3)) return false;
    Eigen::VectorXd nuh = nu / nrm;
    if (amax(Eigen::VectorXd(AT * nuh)) > 1e-6) return false;
    double val = 0.0;
    for (Eigen::Index i = 0; i < nuh.size(); ++i) {
        if (std::abs(nuh(i)) <= 1e-12) continue;
        const double bound = nuh(i) > 0 ? up(i) : lo(i);
        if (!std::isfinite(bound)) return false;
        val += nuh(i) * bound;
    }
    return val < -1e-6;
}

// Primal-dual interior point on  min 0.5 x'Px + q'x  s.t. lo <= Ax <= up  (already scaled).
// Mehrotra predictor-corrector with Gondzio centrality correctors, adaptive quasi-definite
// regularization with iterative refinement, and best-iterate fallback. The row multiplier nu
// is an independent iterate stepped by the KKT direction; the bound multipliers ll/lu only
// drive the barrier parameter, the step lengths and the centering targets. Reconstructing nu
// from lu - ll would re-inject the regularization error into the dual residual each step.
RangedSolution solve_scaled(const SpMat& Pm, const Eigen::VectorXd& q, const SpMat& A,
                            const Eigen::VectorXd& lo, const Eigen::VectorXd& up, double tol,
                            int max_iter) {
    const Eigen::Index n = A.cols(), mr = A.rows(), nk = n + mr;

    Mask has_l(mr), has_u(mr), is_eq(mr), il(mr), iu(mr);
    for (Eigen::Index i = 0; i < mr; ++i) {
        has_l(i) = std::isfinite(lo(i));
        has_u(i) = std::isfinite(up(i));
        is_eq(i) = has_l(i) && has_u(i) && (up(i) - lo(i) < 1e-12);
        il(i) = has_l(i) && !is_eq(i);
        iu(i) = has_u(i) && !is_eq(i);
    }
    const double n_compl = std::max<double>(il.count() + iu.count(), 1);
    double dp = 1e-9, dd = 1e-9;

    SpMat AT = SpMat(A.transpose());

    // KKT matrix, lower triangle only: [[P + dp I, .], [A, -diag(m)]]. The sparsity pattern
    // is fixed across iterations (and shared with the least-squares starting point), so the
    // fill-reducing analysis runs once; only the two diagonals are rewritten per factorization.
    Eigen::VectorXd pdiag_base = Eigen::VectorXd::Zero(n);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(Pm.nonZeros() + A.nonZeros() + nk));
    for (Eigen::Index j = 0; j < Pm.outerSize(); ++j)
        for (SpMat::InnerIterator it(Pm, j); it; ++it) {
            if (it.row() == it.col())
                pdiag_base(it.row()) += it.value();
            else if (it.row() > it.col())
                trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                   it.value());
        }
    for (Eigen::Index j = 0; j < n; ++j)
        trips.emplace_back(static_cast<int>(j), static_cast<int>(j), pdiag_base(j) + 1.0);
    for (Eigen::Index j = 0; j < A.outerSize(); ++j)
        for (SpMat::InnerIterator it(A, j); it; ++it)
            trips.emplace_back(static_cast<int>(n + it.row()), static_cast<int>(it.col()),
                               it.value());
    for (Eigen::Index i = 0; i < mr; ++i)
        trips.emplace_back(static_cast<int>(n + i), static_cast<int>(n + i), -1.0);
    SpMat K(nk, nk);
    K.setFromTriplets(trips.begin(), trips.end());
    K.makeCompressed();
    // Diagonal entries sit first in their (lower-triangular, sorted) columns.
    std::vector<Eigen::Index> diag_pos(nk);
    for (Eigen::Index j = 0; j < nk; ++j) {
        const Eigen::Index p = K.outerIndexPtr()[j];
        if (K.innerIndexPtr()[p] != j) throw std::logic_error("KKT diagonal not found");
        diag_pos[j] = p;
    }
    auto set_diagonals = [&](double dp_, const Arr& m_diag) {
        double* val = K.valuePtr();
        for (Eigen::Index j = 0; j < n; ++j) val[diag_pos[j]] = pdiag_base(j) + dp_;
        for (Eigen::Index i = 0; i < mr; ++i) val[diag_pos[n + i]] = -m_diag(i);
    };

    Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt;
    ldlt.analyzePattern(K);

    // Least-squares starting point: [[P + I, A'], [A, -I]] applied to (-q, bound midpoints).
    Eigen::VectorXd b_mid(mr);
    for (Eigen::Index i = 0; i < mr; ++i) {
        const double l0 = has_l(i) ? lo(i) : 0.0, u0 = has_u(i) ? up(i) : 0.0;
        b_mid(i) = is_eq(i) ? l0 : (il(i) && iu(i) ? 0.5 * (l0 + u0) : (il(i) ? l0 : u0));
    }
    set_diagonals(1.0, Arr::Ones(mr));
    ldlt.factorize(K);
    if (ldlt.info() != Eigen::Success) throw std::runtime_error("starting-point factorization failed");
    Eigen::VectorXd rhs0(nk);
    rhs0 << -q, b_mid;
    Eigen::VectorXd s0 = ldlt.solve(rhs0);
    Eigen::VectorXd x = s0.head(n);
    Eigen::VectorXd nu0 = s0.tail(mr);

    Eigen::VectorXd Ax = A * x;
    Arr sl = il.select(Ax.array() - lo.array(), 1.0), su = iu.select(up.array() - Ax.array(), 1.0);
    double shift = 1.0;
    for (Eigen::Index i = 0; i < mr; ++i) {
        if (il(i)) shift = std::max(shift, -1.5 * sl(i));
        if (iu(i)) shift = std::max(shift, -1.5 * su(i));
    }
    sl = il.select(sl + shift, 1.0);
    su = iu.select(su + shift, 1.0);
    Arr ll = il.select((-nu0.array()).max(0.0) + 1.0, 0.0);
    Arr lu = iu.select(nu0.array().max(0.0) + 1.0, 0.0);
    Eigen::VectorXd nu = is_eq.select(nu0.array(), lu - ll).matrix();

    double bscale = 0.0, qscale = 1.0 + amax(q);
    for (Eigen::Index i = 0; i < mr; ++i) {
        if (has_l(i)) bscale = std::max(bscale, std::abs(lo(i)));
        if (has_u(i)) bscale = std::max(bscale, std::abs(up(i)));
    }
    bscale += 1.0;

    Best best;
    int stall = 0;
    double mu = kInf;
    Arr rpl(mr), rpu(mr), rpe(mr), Wl(mr), Wu(mr), W(mr), Winv_c(mr);
    bool refine_bad = false;

    auto finish = [&](const Eigen::VectorXd& fx, const Eigen::VectorXd& fnu, SolveStatus st,
                      int iters, double fmu, double fpr, double fdr, double fgap) {
        RangedSolution r;
        r.x = fx;
        r.nu = fnu;
        r.status = st;
        r.iterations = iters;
        r.mu = fmu;
        r.primal_res = fpr;
        r.dual_res = fdr;
        r.gap = fgap;
        return r;
    };
    auto finish_best = [&](int iters) {
        if (!best.set) return finish(x, nu, SolveStatus::iteration_limit, iters, mu, kInf, kInf, kInf);
        const bool ok =
            best.pr < tol * bscale && best.dr < tol * qscale && best.gap < tol;
        SolveStatus st = SolveStatus::iteration_limit;
        if (ok)
            st = SolveStatus::optimal;
        else if (infeasibility_certificate(AT, lo, up, nu) ||
                 infeasibility_certificate(AT, lo, up, best.nu))
            st = SolveStatus::infeasible;
        return finish(best.x, best.nu, st, iters, best.mu, best.pr, best.dr, best.gap);
    };

    // One KKT solve plus iterative refinement against the unregularized system.
    auto kkt_solve = [&](const Eigen::VectorXd& r1, const Eigen::VectorXd& r2,
                         Eigen::VectorXd& u1, Eigen::VectorXd& u2) {
        Eigen::VectorXd rhs(nk);
        rhs << r1, r2;
        Eigen::VectorXd sol = ldlt.solve(rhs);
        const double rscale = 1.0 + amax(r1) + amax(r2);
        Eigen::VectorXd res1, res2;
        for (int pass = 0; pass < 3; ++pass) {
            u1 = sol.head(n);
            u2 = sol.tail(mr);
            res1 = r1 - (Pm * u1 + AT * u2);
            res2 = r2 - (A * u1 - (Winv_c * u2.array()).matrix());
            if (std::max(amax(res1), amax(res2)) < 1e-12 * rscale) return;
            Eigen::VectorXd rr(nk);
            rr << res1, res2;
            sol += ldlt.solve(rr);
        }
        u1 = sol.head(n);
        u2 = sol.tail(mr);
        res1 = r1 - (Pm * u1 + AT * u2);
        res2 = r2 - (A * u1 - (Winv_c * u2.array()).matrix());
        if (std::max(amax(res1), amax(res2)) > 1e-8 * rscale) refine_bad = true;
    };

    Eigen::VectorXd rd(n);
    auto newton = [&](const Arr& rcl, const Arr& rcu, Eigen::VectorXd& dx, Eigen::VectorXd& dnu,
                      Arr& dsl, Arr& dsu, Arr& dll, Arr& dlu) {
        Arr h = iu.select(rcu / su - Wu * rpu, 0.0) - il.select(rcl / sl - Wl * rpl, 0.0);
        Arr rhs2 = is_eq.select(-rpe, (W > 0.0).select(-h / W.max(1e-300), 0.0));
        kkt_solve(-rd, rhs2.matrix(), dx, dnu);
        Arr Adx = (A * dx).array();
        dsl = il.select(Adx + rpl, 0.0);
        dsu = iu.select(-Adx + rpu, 0.0);
        dll = il.select((rcl - ll * dsl) / sl, 0.0);
        dlu = iu.select((rcu - lu * dsu) / su, 0.0);
    };
    auto maxstep = [&](const Arr& v, const Arr& dv, const Mask& mask) {
        double a = kInf;
        for (Eigen::Index i = 0; i < v.size(); ++i)
            if (mask(i) && dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
        return a;
    };

    int it = 0;
    for (; it < max_iter; ++it) {
        Ax = A * x;
        rd = Pm * x + q + AT * nu;
        rpl = il.select(Ax.array() - lo.array() - sl, 0.0);
        rpu = iu.select(up.array() - Ax.array() - su, 0.0);
        rpe = is_eq.select(Ax.array() - lo.array(), 0.0);
        mu = ((sl * ll).sum() + (su * lu).sum()) / n_compl;
        const double pr = std::max({amax(rpl), amax(rpu), amax(rpe)});
        const double dr = amax(rd);
        const double pobj = 0.5 * x.dot(Pm * x) + q.dot(x);
        const double gap = mu * n_compl / (1.0 + std::abs(pobj));
        const double merit = std::max({pr / bscale, dr / qscale, gap});

        if (!best.set || merit < 0.98 * best.merit) {
            best = {x, nu, merit, mu, pr, dr, gap, true};
            stall = 0;
        } else {
            if (merit < best.merit) best = {x, nu, merit, mu, pr, dr, gap, true};
            ++stall;
        }
        if (pr < tol * bscale && dr < tol * qscale && (gap < tol || mu < 0.1 * tol))
            return finish(x, nu, SolveStatus::optimal, it, mu, pr, dr, gap);
        if (stall >= 15 || (mu > 1e4 * std::max(best.mu, 1e-16) && it > 10))
            return finish_best(it);

        Wl = il.select(ll / sl, 0.0);
        Wu = iu.select(lu / su, 0.0);
        W = Wl + Wu;
        Winv_c = is_eq.select(0.0, (1.0 / W.max(1e-300)).min(1e12));

        bool factor_ok = false;
        for (int attempt = 0; attempt < 8; ++attempt) {
            Arr m_diag = is_eq.select(dd, (1.0 / W.max(1e-300)).min(1e12) + dd);
            set_diagonals(dp, m_diag);
            ldlt.factorize(K);
            if (ldlt.info() == Eigen::Success) {
                factor_ok = true;
                break;
            }
            dp *= 100;
            dd *= 100;
        }
        if (!factor_ok) return finish_best(it);

        refine_bad = false;
        Eigen::VectorXd dx, dnu;
        Arr dsl, dsu, dll, dlu;

        // Affine predictor.
        newton(-ll * sl, -lu * su, dx, dnu, dsl, dsu, dll, dlu);
        if (refine_bad) {
            dp = std::min(dp * 10, 1e-5);
            dd = std::min(dd * 10, 1e-5);
        } else {
            dp = std::max(dp / 2, 1e-9);
            dd = std::max(dd / 2, 1e-9);
        }
        double ap = std::min({1.0, maxstep(sl, dsl, il), maxstep(su, dsu, iu)});
        double ad = std::min({1.0, maxstep(ll, dll, il), maxstep(lu, dlu, iu)});
        const double mu_aff =
            (((sl + ap * dsl) * (ll + ad * dll)).sum() + ((su + ap * dsu) * (lu + ad * dlu)).sum()) /
            n_compl;
        double sigma = std::pow(std::max(mu_aff, 0.0) / std::max(mu, 1e-300), 3);
        sigma = std::clamp(sigma, 1e-8, 1.0);
        // Below ~0.02*tol switch to pure centering so the KKT conditioning stays bounded.
        sigma = std::max(sigma, std::min(1.0, 0.02 * tol / std::max(mu, 1e-300)));

        // Mehrotra corrector.
        Arr rcl = il.select(sigma * mu - ll * sl - dll * dsl, 0.0);
        Arr rcu = iu.select(sigma * mu - lu * su - dlu * dsu, 0.0);
        newton(rcl, rcu, dx, dnu, dsl, dsu, dll, dlu);

        // Gondzio centrality correctors: push offending pairs back into the target box.
        const int n_gondzio = mu > 0.1 * tol ? 3 : 0;
        for (int g = 0; g < n_gondzio; ++g) {
            const double a_p = std::min({1.0, maxstep(sl, dsl, il), maxstep(su, dsu, iu)});
            const double a_d = std::min({1.0, maxstep(ll, dll, il), maxstep(lu, dlu, iu)});
            const double a = std::min(a_p, a_d);
            if (a > 0.90) break;
            const double apt = std::min(1.0, a + 0.10);
            Arr slt = sl + apt * dsl, sut = su + apt * dsu;
            Arr llt = ll + apt * dll, lut = lu + apt * dlu;
            const double mut = ((il.select(slt, 0.0) * il.select(llt, 0.0)).sum() +
                                (iu.select(sut, 0.0) * iu.select(lut, 0.0)).sum()) /
                               n_compl;
            Arr tl = il.select(slt * llt, 0.0), tu = iu.select(sut * lut, 0.0);
            const double lowt = 0.1 * sigma * mut, hit = 10.0 * sigma * mut;
            Arr ccl = il.select((tl < lowt).select(lowt - tl, (tl > hit).select(hit - tl, Arr::Zero(mr))), 0.0);
            Arr ccu = iu.select((tu < lowt).select(lowt - tu, (tu > hit).select(hit - tu, Arr::Zero(mr))), 0.0);
            if (std::max(amax(ccl), amax(ccu)) < 1e-14) break;
            Eigen::VectorXd gdx, gdnu;
            Arr gdsl, gdsu, gdll, gdlu;
            newton(ccl, ccu, gdx, gdnu, gdsl, gdsu, gdll, gdlu);
            Arr nsl = dsl + gdsl, nsu = dsu + gdsu, nll = dll + gdll, nlu = dlu + gdlu;
            const double na_p = std::min({1.0, maxstep(sl, nsl, il), maxstep(su, nsu, iu)});
            const double na_d = std::min({1.0, maxstep(ll, nll, il), maxstep(lu, nlu, iu)});
            if (std::min(na_p, na_d) > a + 0.01) {
                dx += gdx;
                dnu += gdnu;
                dsl = nsl;
                dsu = nsu;
                dll = nll;
                dlu = nlu;
            } else {
                break;
            }
        }

        const double tau =
            std::min(mu < 1e-2 ? std::max(0.99, 1.0 - mu) : 0.95, 0.99999);
        ap = std::min({1.0, tau * maxstep(sl, dsl, il), tau * maxstep(su, dsu, iu)});
        ad = std::min({1.0, tau * maxstep(ll, dll, il), tau * maxstep(lu, dlu, iu)});
        double a = std::min(ap, ad);
        // Near-degenerate boundaries (slack widths at roundoff scale) the corrected direction
        // can multiply complementarity by orders of magnitude in a single step; halve the
        // step until mu stays controlled rather than relying on the divergence bailout.
        // Only guard once primal feasibility is essentially attained: infeasible problems
        // must keep diverging so the certificate check can recognize them.
        if (pr < 1e-6 * bscale) {
            auto mu_at = [&](double aa) {
                return (((sl + aa * dsl) * (ll + aa * dll)).sum() +
                        ((su + aa * dsu) * (lu + aa * dlu)).sum()) /
                       n_compl;
            };
            for (int bt = 0; bt < 20 && mu_at(a) > std::max(4.0 * mu, 0.1 * tol); ++bt) a *= 0.5;
        }
        x += a * dx;
        sl = il.select(sl + a * dsl, 1.0);
        su = iu.select(su + a * dsu, 1.0);
        ll = il.select(ll + a * dll, 0.0);
        lu = iu.select(lu + a * dlu, 0.0);
        nu += a * dnu;
    }
    return finish_best(it);
}

} // namespace

const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::optimal: return "optimal";
        case SolveStatus::infeasible: return "infeasible";
        case SolveStatus::iteration_limit: return "iteration_limit";
    }
    return "unknown";
}

double KktResiduals::worst() const {
    return std::max({stationarity, primal_eq, primal_ineq, complementarity});
}

RangedSolution solve_ranged(const RangedQp& qp, double tol, int max_iter) {
    const Eigen::Index n = qp.A.cols(), mr = qp.A.rows();
    if (qp.q.size() != n) throw std::invalid_argument("solve_ranged: q length must match A columns");
    if (qp.lo.size() != mr || qp.up.size() != mr)
        throw std::invalid_argument("solve_ranged: lo/up length must match A rows");
    if (qp.P.rows() != 0 && (qp.P.rows() != n || qp.P.cols() != n))
        throw std::invalid_argument("solve_ranged: P must be n x n");
    for (Eigen::Index i = 0; i < mr; ++i)
        if (qp.lo(i) > qp.up(i)) {
            RangedSolution r;
            r.status = SolveStatus::infeasible;
            r.x = Eigen::VectorXd::Zero(n);
            r.nu = Eigen::VectorXd::Zero(mr);
            return r;
        }

    // Equilibrate rows/columns, then scale the cost so its magnitude is ~1.
    SpMat As;
    Eigen::VectorXd drow, dcol;
    ruiz(qp.A, As, drow, dcol);
    const bool has_P = qp.P.nonZeros() > 0;
    SpMat Ps(n, n);
    if (has_P) {
        Ps = dcol.asDiagonal() * qp.P * dcol.asDiagonal();
        Ps.makeCompressed();
    }
    Eigen::VectorXd qs = (dcol.array() * qp.q.array()).matrix();
    double pmax = 0.0;
    if (has_P)
        for (Eigen::Index j = 0; j < Ps.outerSize(); ++j)
            for (SpMat::InnerIterator it(Ps, j); it; ++it)
                pmax = std::max(pmax, std::abs(it.value()));
    const double cs = 1.0 / std::max({1.0, amax(qs), pmax});
    if (has_P) Ps *= cs;
    qs *= cs;
    Eigen::VectorXd los = (qp.lo.array() * drow.array()).matrix();
    Eigen::VectorXd ups = (qp.up.array() * drow.array()).matrix();
    // keep infinities clean under scaling
    for (Eigen::Index i = 0; i < mr; ++i) {
        if (!std::isfinite(qp.lo(i))) los(i) = -kInf;
        if (!std::isfinite(qp.up(i))) ups(i) = kInf;
    }

    RangedSolution r = solve_scaled(Ps, qs, As, los, ups, tol, max_iter);
    r.x = (dcol.array() * r.x.array()).matrix();
    r.nu = (drow.array() * r.nu.array() / cs).matrix();
    r.objective = qp.q.dot(r.x);
    if (has_P) r.objective += 0.5 * r.x.dot(qp.P * r.x);
    return r;
}

bool near_optimal(const RangedSolution& sol, double feas_tol, double gap_tol) {
    if (sol.status == SolveStatus::optimal) return true;
    if (sol.status == SolveStatus::infeasible) return false;
    return sol.primal_res <= feas_tol && sol.dual_res <= feas_tol && sol.gap <= gap_tol;
}

QpSolution solve_qp(const QpProblem& prob, double tol, int max_iter) {
    const Eigen::Index n = prob.q.size();
    const Eigen::Index me = prob.Aeq.rows(), mi = prob.Aineq.rows();
    if (me > 0 && prob.Aeq.cols() != n)
        throw std::invalid_argument("solve_qp: Aeq column count must match q length");
    if (mi > 0 && prob.Aineq.cols() != n)
        throw std::invalid_argument("solve_qp: Aineq column count must match q length");
    if (prob.beq.size() != me) throw std::invalid_argument("solve_qp: beq length must match Aeq rows");
    if (prob.hineq.size() != mi)
        throw std::invalid_argument("solve_qp: hineq length must match Aineq rows");

    const bool has_P = prob.P.size() > 0;
    if (has_P) {
        if (prob.P.rows() != n || prob.P.cols() != n)
            throw std::invalid_argument("solve_qp: P must be square with q length");
        const double scale = std::max(1.0, prob.P.cwiseAbs().maxCoeff());
        if ((prob.P - prob.P.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
            throw std::invalid_argument("solve_qp: P must be symmetric");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(prob.P, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < -1e-10 * scale)
            throw std::invalid_argument("solve_qp: P must be positive semidefinite");
    }

    RangedQp rq;
    rq.q = prob.q;
    if (has_P) {
        rq.P = prob.P.sparseView();
        rq.P.makeCompressed();
    } else {
        rq.P = SpMat(n, n);
    }
    Eigen::MatrixXd Adense(me + mi, n);
    if (me > 0) Adense.topRows(me) = prob.Aeq;
    if (mi > 0) Adense.bottomRows(mi) = prob.Aineq;
    rq.A = Adense.sparseView();
    rq.A.makeCompressed();
    rq.lo.resize(me + mi);
    rq.up.resize(me + mi);
    rq.lo.head(me) = prob.beq;
    rq.up.head(me) = prob.beq;
    rq.lo.tail(mi).setConstant(-kInf);
    rq.up.tail(mi) = prob.hineq;

    RangedSolution rs = solve_ranged(rq, tol, max_iter);

    QpSolution sol;
    sol.z = rs.x;
    sol.dual_eq = rs.nu.head(me);
    sol.dual_ineq = rs.nu.tail(mi).cwiseMax(0.0);
    sol.status = rs.status;
    sol.iterations = rs.iterations;
    sol.objective = rs.objective;
    sol.kkt = kkt_residuals(prob, sol);
    return sol;
}

KktResiduals kkt_residuals(const QpProblem& prob, const QpSolution& sol) {
    const Eigen::Index n = prob.q.size();
    const Eigen::Index me = prob.Aeq.rows(), mi = prob.Aineq.rows();
    if (sol.z.size() != n)
        throw std::invalid_argument("kkt_residuals: solution length does not match the problem");
    if (sol.dual_eq.size() != me || sol.dual_ineq.size() != mi)
        throw std::invalid_argument("kkt_residuals: multiplier lengths do not match the problem");

    KktResiduals kkt;
    Eigen::VectorXd grad = prob.q;
    if (prob.P.size() > 0) grad += prob.P * sol.z;
    if (me > 0) grad += prob.Aeq.transpose() * sol.dual_eq;
    if (mi > 0) grad += prob.Aineq.transpose() * sol.dual_ineq;
    kkt.stationarity = amax(grad);
    if (me > 0) kkt.primal_eq = amax(Eigen::VectorXd(prob.Aeq * sol.z - prob.beq));
    if (mi > 0) {
        Eigen::VectorXd slack = prob.hineq - prob.Aineq * sol.z;
        kkt.primal_ineq = (-slack).cwiseMax(0.0).maxCoeff();
        kkt.complementarity = amax(Eigen::VectorXd(sol.dual_ineq.cwiseProduct(slack)));
    }
    return kkt;
}

namespace {

nlohmann::json dense_rows(const Eigen::MatrixXd& X) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < X.cols(); ++c) row.push_back(X(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json dense_vec(const Eigen::VectorXd& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

} // namespace

void dump_problem(const QpProblem& prob, const std::string& path) {
    nlohmann::json j;
    j["kind"] = "qp";
    j["n"] = prob.q.size();
    j["P"] = dense_rows(prob.P);
    j["q"] = dense_vec(prob.q);
    j["Aeq"] = dense_rows(prob.Aeq);
    j["beq"] = dense_vec(prob.beq);
    j["Aineq"] = dense_rows(prob.Aineq);
    j["hineq"] = dense_vec(prob.hineq);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("dump_problem: cannot open '" + path + "'");
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("dump_problem: failed while writing '" + path + "'");
}

} // namespace reserve
