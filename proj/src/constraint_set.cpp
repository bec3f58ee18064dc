#include "reserve/constraint_set.hpp"
#include "reserve/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace reserve {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct RowBuilder {
    std::vector<Eigen::Triplet<double>> trips;
    std::vector<double> lo, up;
    int new_row(double l, double u) {
        lo.push_back(l);
        up.push_back(u);
        return static_cast<int>(lo.size()) - 1;
    }
    void coeff(int row, Eigen::Index col, double v) {
        trips.emplace_back(row, static_cast<int>(col), v);
    }
};

ConstraintSetC build_impl(const BuildingModel& model, const StackedSystem& stacked,
                          PolicyStructure structure, bool time_constant_y,
                          const Eigen::VectorXd* y_fixed) {
    {
        auto issues = validate_model(model);
        if (!issues.empty())
            throw std::invalid_argument("build_constraint_set: invalid model: " + issues.front());
    }
    const int n = model.n, m = model.m, N = model.N;
    const bool has_y = y_fixed == nullptr;

    ConstraintSetC set;
    set.model = model;
    set.stacked = stacked;
    set.structure = structure;
    set.time_constant_y = time_constant_y;
    if (!has_y) {
        if (y_fixed->size() != N)
            throw std::invalid_argument("build_constraint_set: fixed y must have length N");
        set.fixed_y = *y_fixed;
    }

    VariableLayout& L = set.layout;
    L.n = n;
    L.m = m;
    L.N = N;
    L.has_y = has_y;
    Eigen::Index off = 0;
    L.xbar = off;
    off += Eigen::Index(N) * n;
    L.kappa = off;
    off += Eigen::Index(N) * m;
    L.W.resize(N);
    for (int j = 0; j < N; ++j) {
        L.W[j] = off;
        off += Eigen::Index(m) * (N - j);
    }
    L.chi.resize(N);
    for (int j = 0; j < N; ++j) {
        L.chi[j] = off;
        off += Eigen::Index(n) * (N - j);
    }
    L.y = off;
    if (has_y) off += N;
    L.ts = off;
    off += VariableLayout::tri(N) * n;
    L.ti = off;
    off += VariableLayout::tri(N) * m;
    L.nv = off;

    RowBuilder rb;
    const Eigen::Map<const Eigen::MatrixXd> v(model.v.data(), model.q, N);

    // Nominal dynamics: xbar_s = A xbar_{s-1} + B kappa_s + E v_s (xbar before stage 0 is x1).
    for (int s = 0; s < N; ++s) {
        Eigen::VectorXd cst = model.E * v.col(s);
        if (s == 0) cst += model.A * model.x1;
        for (int c = 0; c < n; ++c) {
            const int r = rb.new_row(cst(c), cst(c));
            rb.coeff(r, L.xbar + Eigen::Index(s) * n + c, 1.0);
            for (int u = 0; u < m; ++u)
                rb.coeff(r, L.kappa + Eigen::Index(s) * m + u, -model.B(c, u));
            if (s > 0)
                for (int cc = 0; cc < n; ++cc)
                    rb.coeff(r, L.xbar + Eigen::Index(s - 1) * n + cc, -model.A(c, cc));
        }
    }
    // Response dynamics: chi_j at stage j is B W_jj, later stages add A * previous.
    for (int j = 0; j < N; ++j)
        for (int t = 0; t < N - j; ++t)
            for (int c = 0; c < n; ++c) {
                const int r = rb.new_row(0.0, 0.0);
                rb.coeff(r, L.chi_col(j + t, j) + c, 1.0);
                if (t > 0)
                    for (int cc = 0; cc < n; ++cc)
                        rb.coeff(r, L.chi_col(j + t - 1, j) + cc, -model.A(c, cc));
                for (int u = 0; u < m; ++u) rb.coeff(r, L.w_col(j + t, j) + u, -model.B(c, u));
            }
    // Power tracking: the hour-j signal moves hour-j power by exactly y_j.
    for (int j = 0; j < N; ++j) {
        const double rhs = has_y ? 0.0 : (*y_fixed)(j);
        const int r = rb.new_row(rhs, rhs);
        for (int u = 0; u < m; ++u) rb.coeff(r, L.w_col(j, j) + u, model.eta(u));
        if (has_y) rb.coeff(r, L.y + j, -1.0);
    }
    // Restricted recourse kinds additionally forbid power rebound in later hours.
    if (structure != PolicyStructure::lower_triangular)
        for (int j = 0; j < N; ++j)
            for (int k = j + 1; k < N; ++k) {
                const int r = rb.new_row(0.0, 0.0);
                for (int u = 0; u < m; ++u) rb.coeff(r, L.w_col(k, j) + u, model.eta(u));
            }
    // State boxes with absolute-value majorants of the signal responses. Components whose
    // box is open on both sides constrain nothing: their rows (and the slack columns that
    // would only appear there) are omitted entirely.
    for (int s = 0; s < N; ++s) {
        for (int c = 0; c < n; ++c) {
            const double bx_lo = model.x_lo(Eigen::Index(s) * n + c);
            const double bx_hi = model.x_hi(Eigen::Index(s) * n + c);
            if (!std::isfinite(bx_lo) && !std::isfinite(bx_hi)) continue;
            for (int j = 0; j <= s; ++j) {
                const Eigen::Index tv = L.ts_col(s, j) + c, cv = L.chi_col(s, j) + c;
                int r = rb.new_row(0.0, kInf);
                rb.coeff(r, tv, 1.0);
                rb.coeff(r, cv, -1.0);
                r = rb.new_row(0.0, kInf);
                rb.coeff(r, tv, 1.0);
                rb.coeff(r, cv, 1.0);
            }
            if (std::isfinite(bx_hi)) {
                const int r = rb.new_row(-kInf, bx_hi);
                rb.coeff(r, L.xbar + Eigen::Index(s) * n + c, 1.0);
                for (int j = 0; j <= s; ++j) rb.coeff(r, L.ts_col(s, j) + c, 1.0);
            }
            if (std::isfinite(bx_lo)) {
                const int r = rb.new_row(bx_lo, kInf);
                rb.coeff(r, L.xbar + Eigen::Index(s) * n + c, 1.0);
                for (int j = 0; j <= s; ++j) rb.coeff(r, L.ts_col(s, j) + c, -1.0);
            }
        }
    }
    // Input boxes, same construction on the gains themselves.
    for (int k = 0; k < N; ++k) {
        for (int u = 0; u < m; ++u) {
            const double bu_lo = model.u_lo(Eigen::Index(k) * m + u);
            const double bu_hi = model.u_hi(Eigen::Index(k) * m + u);
            if (!std::isfinite(bu_lo) && !std::isfinite(bu_hi)) continue;
            for (int j = 0; j <= k; ++j) {
                const Eigen::Index tv = L.ti_col(k, j) + u, wv = L.w_col(k, j) + u;
                int r = rb.new_row(0.0, kInf);
                rb.coeff(r, tv, 1.0);
                rb.coeff(r, wv, -1.0);
                r = rb.new_row(0.0, kInf);
                rb.coeff(r, tv, 1.0);
                rb.coeff(r, wv, 1.0);
            }
            if (std::isfinite(bu_hi)) {
                const int r = rb.new_row(-kInf, bu_hi);
                rb.coeff(r, L.kappa + Eigen::Index(k) * m + u, 1.0);
                for (int j = 0; j <= k; ++j) rb.coeff(r, L.ti_col(k, j) + u, 1.0);
            }
            if (std::isfinite(bu_lo)) {
                const int r = rb.new_row(bu_lo, kInf);
                rb.coeff(r, L.kappa + Eigen::Index(k) * m + u, 1.0);
                for (int j = 0; j <= k; ++j) rb.coeff(r, L.ti_col(k, j) + u, -1.0);
            }
        }
    }
    if (has_y) {
        for (int k = 0; k < N; ++k) {
            const int r = rb.new_row(0.0, kInf);
            rb.coeff(r, L.y + k, 1.0);
        }
        if (time_constant_y)
            for (int k = 0; k + 1 < N; ++k) {
                const int r = rb.new_row(0.0, 0.0);
                rb.coeff(r, L.y + k + 1, 1.0);
                rb.coeff(r, L.y + k, -1.0);
            }
    }

    set.A.resize(static_cast<Eigen::Index>(rb.lo.size()), L.nv);
    set.A.setFromTriplets(rb.trips.begin(), rb.trips.end());
    set.A.makeCompressed();
    set.lo = Eigen::Map<const Eigen::VectorXd>(rb.lo.data(), static_cast<Eigen::Index>(rb.lo.size()));
    set.up = Eigen::Map<const Eigen::VectorXd>(rb.up.data(), static_cast<Eigen::Index>(rb.up.size()));
    return set;
}

} // namespace

ConstraintSetC build_constraint_set(const BuildingModel& model, const StackedSystem& stacked,
                                    PolicyStructure structure, bool time_constant_y) {
    return build_impl(model, stacked, structure, time_constant_y, nullptr);
}

ConstraintSetC build_constraint_set_fixed_y(const BuildingModel& model,
                                            const StackedSystem& stacked,
                                            PolicyStructure structure,
                                            const Eigen::VectorXd& y_fixed) {
    return build_impl(model, stacked, structure, false, &y_fixed);
}

RecoveredPolicy recover_policy(const ConstraintSetC& set, const Eigen::VectorXd& z) {
    const VariableLayout& L = set.layout;
    if (z.size() != L.nv)
        throw std::invalid_argument("recover_policy: solution length does not match layout");
    const int m = L.m, N = L.N;
    RecoveredPolicy out;
    out.y = L.has_y ? Eigen::VectorXd(z.segment(L.y, N)) : set.fixed_y;
    out.policy.kappa = z.segment(L.kappa, Eigen::Index(N) * m);
    out.policy.K = Eigen::MatrixXd::Zero(Eigen::Index(N) * m, N);
    out.policy.F = Eigen::MatrixXd::Zero(Eigen::Index(N) * m, N);

    const Eigen::VectorXd& eta = set.model.eta;
    const double ee = eta.squaredNorm();
    for (int j = 0; j < N; ++j)
        for (int k = j; k < N; ++k) {
            const Eigen::VectorXd w = z.segment(L.w_col(k, j), m);
            Eigen::VectorXd K_blk = Eigen::VectorXd::Zero(m);
            switch (set.structure) {
                case PolicyStructure::zero:
                    break;  // K stays zero, F takes everything
                case PolicyStructure::block_diagonal:
                    if (k == j) K_blk = w - eta * (out.y(j) / ee);
                    break;
                case PolicyStructure::lower_triangular: {
                    const double target = (k == j) ? out.y(j) : 0.0;
                    K_blk = eta * ((eta.dot(w) - target) / ee);
                    break;
                }
            }
            out.policy.K.block(Eigen::Index(k) * m, j, m, 1) = K_blk;
            out.policy.F.block(Eigen::Index(k) * m, j, m, 1) = w - K_blk;
        }
    return out;
}

PolicyTrajectory evaluate_policy(const AffinePolicy& policy, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& zeta, const BuildingModel& model,
                                 const StackedSystem& stacked) {
    const int m = model.m, N = model.N;
    if (zeta.size() != N) throw std::invalid_argument("evaluate_policy: zeta must have length N");
    if (zeta.cwiseAbs().maxCoeff() > 1.0 + 1e-12)
        throw std::invalid_argument("evaluate_policy: zeta outside [-1,1]");
    PolicyTrajectory tr;
    tr.u = policy.kappa + policy.K * zeta;
    tr.du = policy.F * zeta;
    tr.s = y.cwiseProduct(zeta);
    tr.x = stacked.affine_offset + stacked.B_bold * (tr.u + tr.du);
    tr.coupling_err = 0.0;
    for (int k = 0; k < N; ++k) {
        const double power = model.eta.dot(tr.du.segment(Eigen::Index(k) * m, m));
        tr.coupling_err = std::max(tr.coupling_err, std::abs(tr.s(k) - power));
    }
    return tr;
}

namespace {

// Margin of one realized trajectory against the model's boxes (negative = violation).
double box_margin(const BuildingModel& model, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& u_total) {
    double margin = kInf;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (std::isfinite(model.x_hi(i))) margin = std::min(margin, model.x_hi(i) - x(i));
        if (std::isfinite(model.x_lo(i))) margin = std::min(margin, x(i) - model.x_lo(i));
    }
    for (Eigen::Index i = 0; i < u_total.size(); ++i) {
        if (std::isfinite(model.u_hi(i))) margin = std::min(margin, model.u_hi(i) - u_total(i));
        if (std::isfinite(model.u_lo(i))) margin = std::min(margin, u_total(i) - model.u_lo(i));
    }
    return margin;
}

} // namespace

FeasibilityReport check_robust_feasibility(const ConstraintSetC& set, const Eigen::VectorXd& z,
                                           FeasibilityMode mode, int samples,
                                           std::uint64_t seed) {
    const int N = set.model.N;
    const RecoveredPolicy rec = recover_policy(set, z);
    FeasibilityReport rep;
    rep.worst_margin = kInf;

    auto probe = [&](const Eigen::VectorXd& zeta) {
        const PolicyTrajectory tr = evaluate_policy(rec.policy, rec.y, zeta, set.model, set.stacked);
        rep.worst_margin = std::min(rep.worst_margin, box_margin(set.model, tr.x, tr.u + tr.du));
        rep.worst_coupling_err = std::max(rep.worst_coupling_err, tr.coupling_err);
        ++rep.evaluations;
    };

    if (mode == FeasibilityMode::vertices) {
        if (N > 12)
            throw std::invalid_argument(
                "check_robust_feasibility: vertex enumeration limited to N <= 12 (2^N corners); "
                "use sample mode for longer horizons");
        Eigen::VectorXd zeta(N);
        for (std::uint64_t bits = 0; bits < (std::uint64_t(1) << N); ++bits) {
            for (int k = 0; k < N; ++k) zeta(k) = (bits >> k) & 1 ? 1.0 : -1.0;
            probe(zeta);
        }
    } else {
        Rng rng(seed);
        Eigen::VectorXd zeta(N);
        for (int s = 0; s < samples; ++s) {
            for (int k = 0; k < N; ++k) zeta(k) = rng.uniform(-1.0, 1.0);
            probe(zeta);
        }
    }
    return rep;
}

const char* to_string(PolicyStructure s) {
    switch (s) {
        case PolicyStructure::zero: return "zero";
        case PolicyStructure::block_diagonal: return "block_diagonal";
        case PolicyStructure::lower_triangular: return "lower_triangular";
    }
    return "unknown";
}

} // namespace reserve
