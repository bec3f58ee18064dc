#include "reserve/building_model.hpp"
#include "reserve/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace reserve {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd perturbed(const Eigen::MatrixXd& X, Rng& rng, double rel = 0.1) {
    Eigen::MatrixXd Y = X;
    for (Eigen::Index j = 0; j < Y.cols(); ++j)
        for (Eigen::Index i = 0; i < Y.rows(); ++i)
            Y(i, j) *= 1.0 + rel * rng.uniform(-1.0, 1.0);
    return Y;
}

Eigen::VectorXd perturbed(const Eigen::VectorXd& x, Rng& rng, double rel = 0.1) {
    Eigen::VectorXd y = x;
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) *= 1.0 + rel * rng.uniform(-1.0, 1.0);
    return y;
}

struct PrototypeRecipe {
    int n, m;
    Eigen::MatrixXd A0;       // diffusion base, rescaled to row sums 1 - leak later
    Eigen::VectorXd leak;     // per-zone loss to ambient
    Eigen::MatrixXd B0;       // signed actuator couplings
    Eigen::VectorXd eta0;     // kW per input unit
    Eigen::VectorXd u_ref;    // interior reference input holding the set point
};

// Zone-chain diffusion base: diag plus nearest/second-nearest neighbor exchange.
Eigen::MatrixXd chain_diffusion(int n, double diag, double near, double second) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        A(i, i) = diag;
        if (i > 0) A(i, i - 1) = near;
        if (i + 1 < n) A(i, i + 1) = near;
        if (i > 1) A(i, i - 2) = second;
        if (i + 2 < n) A(i, i + 2) = second;
    }
    return A;
}

// Actuator j acts strongest on one zone and decays geometrically with zone distance.
Eigen::MatrixXd actuator_couplings(int n, const Eigen::VectorXd& amplitude) {
    const int m = static_cast<int>(amplitude.size());
    Eigen::MatrixXd B(n, m);
    for (int j = 0; j < m; ++j) {
        const int zj = (m == 1) ? 0 : static_cast<int>(std::lround(double(j) * (n - 1) / (m - 1)));
        for (int i = 0; i < n; ++i) B(i, j) = amplitude(j) * std::pow(0.5, std::abs(i - zj));
    }
    return B;
}

PrototypeRecipe recipe_for(PrototypeClass cls) {
    PrototypeRecipe r;
    switch (cls) {
        case PrototypeClass::small: {
            r.n = 3;
            r.m = 4;
            r.A0.resize(3, 3);
            r.A0 << 0.82, 0.06, 0.02,
                    0.06, 0.80, 0.06,
                    0.02, 0.06, 0.84;
            r.leak.resize(3);
            r.leak << 0.06, 0.05, 0.04;
            // radiator(+), cooled ceiling(-), floor heating(+), ventilation(+)
            r.B0.resize(3, 4);
            r.B0 << 0.70, -0.45, 0.20, 0.06,
                    0.20, -0.30, 0.50, 0.10,
                    0.10, -0.25, 0.30, 0.04;
            r.eta0.resize(4);
            r.eta0 << 4.0, 3.5, 3.0, 1.0;
            r.u_ref.resize(4);
            r.u_ref << 0.5, 0.35, 0.5, 0.5;
            break;
        }
        case PrototypeClass::medium: {
            r.n = 6;
            r.m = 6;
            r.A0 = chain_diffusion(6, 0.78, 0.07, 0.015);
            r.leak = Eigen::VectorXd::LinSpaced(6, 0.06, 0.04);
            Eigen::VectorXd amp(6);
            amp << 0.70, -0.50, 0.45, 0.12, 0.60, -0.40;
            r.B0 = actuator_couplings(6, amp);
            r.eta0.resize(6);
            r.eta0 << 10.0, 8.0, 7.0, 3.0, 12.0, 9.0;
            r.u_ref.resize(6);
            r.u_ref << 0.5, 0.35, 0.5, 0.5, 0.4, 0.3;
            break;
        }
        case PrototypeClass::large: {
            r.n = 10;
            r.m = 9;
            r.A0 = chain_diffusion(10, 0.80, 0.06, 0.012);
            r.leak = Eigen::VectorXd::LinSpaced(10, 0.05, 0.03);
            Eigen::VectorXd amp(9);
            amp << 0.80, -0.55, 0.50, 0.15, 0.70, -0.45, 0.35, 0.25, 0.10;
            r.B0 = actuator_couplings(10, amp);
            r.eta0.resize(9);
            r.eta0 << 25.0, 20.0, 18.0, 8.0, 30.0, 22.0, 15.0, 10.0, 6.0;
            r.u_ref.resize(9);
            r.u_ref << 0.5, 0.35, 0.5, 0.5, 0.4, 0.3, 0.45, 0.5, 0.5;
            break;
        }
    }
    return r;
}

} // namespace

StackedSystem stack_dynamics(const BuildingModel& model) {
    const int n = model.n, m = model.m, q = model.q, N = model.N;
    if (model.A.rows() != n || model.A.cols() != n)
        throw std::invalid_argument("stack_dynamics: field A must be n x n");
    if (model.B.rows() != n || model.B.cols() != m)
        throw std::invalid_argument("stack_dynamics: field B must be n x m");
    if (model.E.rows() != n || model.E.cols() != q)
        throw std::invalid_argument("stack_dynamics: field E must be n x q");
    if (model.x1.size() != n) throw std::invalid_argument("stack_dynamics: field x1 must have length n");
    if (model.v.size() != Eigen::Index(q) * N)
        throw std::invalid_argument("stack_dynamics: field v must have length q*N");

    StackedSystem s;
    s.A_bold.resize(Eigen::Index(N) * n, n);
    s.B_bold = Eigen::MatrixXd::Zero(Eigen::Index(N) * n, Eigen::Index(N) * m);
    s.E_bold = Eigen::MatrixXd::Zero(Eigen::Index(N) * n, Eigen::Index(N) * q);

    // powers[k] = A^k
    std::vector<Eigen::MatrixXd> powers(N + 1);
    powers[0] = Eigen::MatrixXd::Identity(n, n);
    for (int k = 1; k <= N; ++k) powers[k] = powers[k - 1] * model.A;

    for (int k = 0; k < N; ++k) {
        s.A_bold.block(Eigen::Index(k) * n, 0, n, n) = powers[k + 1];
        for (int j = 0; j <= k; ++j) {
            s.B_bold.block(Eigen::Index(k) * n, Eigen::Index(j) * m, n, m) = powers[k - j] * model.B;
            s.E_bold.block(Eigen::Index(k) * n, Eigen::Index(j) * q, n, q) = powers[k - j] * model.E;
        }
    }
    s.affine_offset = s.A_bold * model.x1 + s.E_bold * model.v;
    return s;
}

std::vector<std::string> validate_model(const BuildingModel& model) {
    std::vector<std::string> out;
    auto bad = [&out](const std::string& msg) { out.push_back(msg); };

    if (model.n < 1 || model.m < 1 || model.q < 1 || model.N < 1) {
        bad("dimensions n, m, q, N must all be >= 1");
        return out;
    }
    if (model.A.rows() != model.n || model.A.cols() != model.n) bad("A must be n x n");
    if (model.B.rows() != model.n || model.B.cols() != model.m) bad("B must be n x m");
    if (model.E.rows() != model.n || model.E.cols() != model.q) bad("E must be n x q");
    if (model.x1.size() != model.n) bad("x1 must have length n");
    if (model.v.size() != Eigen::Index(model.q) * model.N) bad("v must have length q*N");
    if (model.x_lo.size() != Eigen::Index(model.N) * model.n) bad("x_lo must have length N*n");
    if (model.x_hi.size() != Eigen::Index(model.N) * model.n) bad("x_hi must have length N*n");
    if (model.u_lo.size() != Eigen::Index(model.N) * model.m) bad("u_lo must have length N*m");
    if (model.u_hi.size() != Eigen::Index(model.N) * model.m) bad("u_hi must have length N*m");
    if (model.eta.size() != model.m) bad("eta must have length m");
    if (model.c.size() != Eigen::Index(model.N) * model.m) bad("c must have length N*m");
    if (!out.empty()) return out;

    const double rho_A = model.A.eigenvalues().cwiseAbs().maxCoeff();
    if (rho_A >= 1.0) bad("A is not stable: spectral radius " + std::to_string(rho_A) + " >= 1");

    for (int k = 0; k < model.N; ++k) {
        for (int i = 0; i < model.n; ++i)
            if (model.x_lo(Eigen::Index(k) * model.n + i) > model.x_hi(Eigen::Index(k) * model.n + i)) {
                bad("x_lo > x_hi at hour " + std::to_string(k + 1) + ", state " + std::to_string(i));
                break;
            }
        for (int j = 0; j < model.m; ++j)
            if (model.u_lo(Eigen::Index(k) * model.m + j) > model.u_hi(Eigen::Index(k) * model.m + j)) {
                bad("u_lo > u_hi at hour " + std::to_string(k + 1) + ", input " + std::to_string(j));
                break;
            }
    }
    if (model.eta.cwiseAbs().maxCoeff() == 0.0)
        bad("eta is all zero: no controllable power, no reserve can be provided");
    return out;
}

BuildingModel prototype_building(PrototypeClass cls, bool residential, int N, std::uint64_t seed,
                                 int id, const Eigen::VectorXd& c_tilde) {
    if (N < 1) throw std::invalid_argument("prototype_building: N must be >= 1");
    Rng rng(seed);
    const PrototypeRecipe rec = recipe_for(cls);
    const int n = rec.n, m = rec.m, q = 3;

    BuildingModel mdl;
    mdl.id = id;
    mdl.n = n;
    mdl.m = m;
    mdl.q = q;
    mdl.N = N;

    // Diffusion-like A: nonnegative, each row rescaled so row sum is 1 minus the leak.
    Eigen::MatrixXd A = perturbed(rec.A0, rng).cwiseAbs();
    for (int i = 0; i < n; ++i) {
        const double rs = A.row(i).sum();
        A.row(i) *= std::min(1.0, (1.0 - rec.leak(i)) / rs);
    }
    const Eigen::VectorXd leak = Eigen::VectorXd::Ones(n) - A.rowwise().sum();
    mdl.A = A;
    mdl.B = perturbed(rec.B0, rng);
    mdl.eta = perturbed(rec.eta0, rng);

    // Disturbance channels: [constant base, ambient deviation, internal-gains deviation].
    const double pi = std::numbers::pi;
    Eigen::VectorXd amb_dev(N), gain_dev(N);
    double occ_sum = 0.0;
    std::vector<bool> occ(N);
    for (int h = 0; h < N; ++h) {
        const int hod = h % 24;
        occ[h] = residential ? (hod >= 22 || hod < 8) : (hod >= 8 && hod < 18);
        occ_sum += occ[h] ? 1.0 : 0.0;
    }
    for (int h = 0; h < N; ++h) {
        const int hod = h % 24;
        amb_dev(h) = 4.0 * std::sin((hod - 9) / 24.0 * 2.0 * pi);
        const double sol = std::max(0.0, std::sin((hod - 6) * pi / 12.0)) - 0.25;
        gain_dev(h) = sol + ((occ[h] ? 1.0 : 0.0) - occ_sum / N);
    }

    const double set_point = residential ? 23.0 : 24.0;
    Eigen::VectorXd x_t = Eigen::VectorXd::Constant(n, set_point);

    Eigen::VectorXd E_amb = 0.25 * leak;
    const Eigen::VectorXd gain_base = Eigen::VectorXd::Constant(n, 0.018);
    Eigen::VectorXd E_gain = perturbed(gain_base, rng, 0.4);

    // Rescale deviation couplings so the worst-case accumulated temperature drift stays well
    // inside the occupied comfort band; together with the exact-hold base channel this makes
    // (u = u_ref, y = 0) a feasibility witness for every generated member.
    const double drift_max = 1.2;
    Eigen::MatrixXd Edev(n, 2);
    Edev.col(0) = E_amb;
    Edev.col(1) = E_gain;
    Eigen::Vector2d vamp(amb_dev.cwiseAbs().maxCoeff(), gain_dev.cwiseAbs().maxCoeff());
    Eigen::VectorXd ss = (Eigen::MatrixXd::Identity(n, n) - A.cwiseAbs())
                             .partialPivLu()
                             .solve(Edev * vamp);
    Edev *= std::min(1.0, drift_max / ss.cwiseAbs().maxCoeff());

    Eigen::VectorXd E_base = (Eigen::MatrixXd::Identity(n, n) - A) * x_t - mdl.B * rec.u_ref;
    mdl.E.resize(n, q);
    mdl.E.col(0) = E_base;
    mdl.E.col(1) = Edev.col(0);
    mdl.E.col(2) = Edev.col(1);

    mdl.v.resize(Eigen::Index(q) * N);
    for (int h = 0; h < N; ++h) {
        mdl.v(Eigen::Index(h) * q + 0) = 1.0;
        mdl.v(Eigen::Index(h) * q + 1) = amb_dev(h);
        mdl.v(Eigen::Index(h) * q + 2) = gain_dev(h);
    }
    mdl.x1 = x_t;

    const double occ_lo = residential ? 21.0 : 20.0;
    const double occ_hi = residential ? 25.0 : 28.0;
    const double un_lo = 16.0, un_hi = 29.0;
    mdl.x_lo.resize(Eigen::Index(N) * n);
    mdl.x_hi.resize(Eigen::Index(N) * n);
    for (int h = 0; h < N; ++h)
        for (int i = 0; i < n; ++i) {
            mdl.x_lo(Eigen::Index(h) * n + i) = occ[h] ? occ_lo : un_lo;
            mdl.x_hi(Eigen::Index(h) * n + i) = occ[h] ? occ_hi : un_hi;
        }
    mdl.u_lo = Eigen::VectorXd::Zero(Eigen::Index(N) * m);
    mdl.u_hi = Eigen::VectorXd::Ones(Eigen::Index(N) * m);

    mdl.c.resize(Eigen::Index(N) * m);
    for (int h = 0; h < N; ++h) {
        const double ct = (c_tilde.size() == N) ? c_tilde(h) : kDefaultEnergyPrice;
        for (int j = 0; j < m; ++j) mdl.c(Eigen::Index(h) * m + j) = ct * mdl.eta(j);
    }
    return mdl;
}

std::vector<BuildingModel> generate_fleet(const FleetSpec& spec) {
    if (spec.count_small < 0 || spec.count_medium < 0 || spec.count_large < 0)
        throw std::invalid_argument("generate_fleet: counts must be >= 0");
    if (spec.N < 1) throw std::invalid_argument("generate_fleet: N must be >= 1");
    if (spec.residential_fraction < 0.0 || spec.residential_fraction > 1.0)
        throw std::invalid_argument("generate_fleet: residential_fraction must be in [0, 1]");

    Rng master(spec.seed);
    std::vector<BuildingModel> fleet;
    int id = 0;
    const std::pair<PrototypeClass, int> classes[] = {
        {PrototypeClass::small, spec.count_small},
        {PrototypeClass::medium, spec.count_medium},
        {PrototypeClass::large, spec.count_large},
    };
    for (const auto& [cls, count] : classes) {
        const int n_res = static_cast<int>(std::lround(spec.residential_fraction * count));
        for (int i = 0; i < count; ++i) {
            const std::uint64_t member_seed = master.next_u64();
            fleet.push_back(
                prototype_building(cls, i < n_res, spec.N, member_seed, id++, spec.c_tilde));
        }
    }
    return fleet;
}

BuildingModel capacity_only_building(const Eigen::VectorXd& cap, int price_horizon) {
    const int N = price_horizon;
    if (N < 1) throw std::invalid_argument("capacity_only_building: horizon must be >= 1");
    if (cap.size() != N)
        throw std::invalid_argument("capacity_only_building: cap must have length N");
    if (cap.minCoeff() < 0.0)
        throw std::invalid_argument("capacity_only_building: cap must be nonnegative");

    BuildingModel mdl;
    mdl.n = 1;
    mdl.m = 1;
    mdl.q = 1;
    mdl.N = N;
    mdl.A = Eigen::MatrixXd::Zero(1, 1);
    mdl.B = Eigen::MatrixXd::Zero(1, 1);
    mdl.E = Eigen::MatrixXd::Zero(1, 1);
    mdl.x1 = Eigen::VectorXd::Zero(1);
    mdl.v = Eigen::VectorXd::Zero(N);
    mdl.x_lo = Eigen::VectorXd::Constant(N, -kInf);
    mdl.x_hi = Eigen::VectorXd::Constant(N, kInf);
    mdl.u_lo = -cap;
    mdl.u_hi = cap;
    mdl.eta = Eigen::VectorXd::Ones(1);
    mdl.c = Eigen::VectorXd::Zero(N);
    return mdl;
}

} // namespace reserve
