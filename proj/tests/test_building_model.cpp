#include "doctest.h"

#include "reserve/building_model.hpp"
#include "reserve/rng.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

using namespace reserve;

namespace {

// Independent oracle: simulate the recursion x^{k+1} = A x^k + B u^k + E v^k one step at a
// time and return the stacked trajectory x^2..x^{N+1}. Deliberately avoids the block-matrix
// construction used by stack_dynamics.
Eigen::VectorXd simulate_states(const BuildingModel& mdl, const Eigen::VectorXd& u_bold) {
    Eigen::VectorXd x = mdl.x1;
    Eigen::VectorXd out(Eigen::Index(mdl.N) * mdl.n);
    for (int k = 0; k < mdl.N; ++k) {
        const Eigen::VectorXd uk = u_bold.segment(Eigen::Index(k) * mdl.m, mdl.m);
        const Eigen::VectorXd vk = mdl.v.segment(Eigen::Index(k) * mdl.q, mdl.q);
        x = mdl.A * x + mdl.B * uk + mdl.E * vk;
        out.segment(Eigen::Index(k) * mdl.n, mdl.n) = x;
    }
    return out;
}

BuildingModel random_model(Rng& rng, int n, int m, int q, int N) {
    BuildingModel mdl;
    mdl.n = n;
    mdl.m = m;
    mdl.q = q;
    mdl.N = N;
    mdl.A.resize(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) mdl.A(i, j) = rng.uniform(-0.3, 0.3);
    mdl.A += 0.4 * Eigen::MatrixXd::Identity(n, n);
    mdl.B.resize(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) mdl.B(i, j) = rng.uniform(-1.0, 1.0);
    mdl.E.resize(n, q);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < q; ++j) mdl.E(i, j) = rng.uniform(-1.0, 1.0);
    mdl.x1.resize(n);
    for (int i = 0; i < n; ++i) mdl.x1(i) = rng.uniform(-2.0, 2.0);
    mdl.v.resize(Eigen::Index(q) * N);
    for (Eigen::Index i = 0; i < mdl.v.size(); ++i) mdl.v(i) = rng.uniform(-1.0, 1.0);
    mdl.x_lo = Eigen::VectorXd::Constant(Eigen::Index(N) * n, -50.0);
    mdl.x_hi = Eigen::VectorXd::Constant(Eigen::Index(N) * n, 50.0);
    mdl.u_lo = Eigen::VectorXd::Zero(Eigen::Index(N) * m);
    mdl.u_hi = Eigen::VectorXd::Ones(Eigen::Index(N) * m);
    mdl.eta = Eigen::VectorXd::Ones(m);
    mdl.c = Eigen::VectorXd::Constant(Eigen::Index(N) * m, 0.1);
    return mdl;
}

} // namespace

TEST_CASE("stacked dynamics match a step-by-step simulation") {
    Rng rng(101);
    for (int trial = 0; trial < 12; ++trial) {
        const int n = 1 + int(rng.next_u64() % 4);
        const int m = 1 + int(rng.next_u64() % 3);
        const int q = 1 + int(rng.next_u64() % 3);
        const int N = 1 + int(rng.next_u64() % 12);
        const BuildingModel mdl = random_model(rng, n, m, q, N);
        const StackedSystem s = stack_dynamics(mdl);

        Eigen::VectorXd u(Eigen::Index(N) * m);
        for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.uniform(-1.0, 1.0);

        const Eigen::VectorXd x_stacked = s.B_bold * u + s.affine_offset;
        const Eigen::VectorXd x_sim = simulate_states(mdl, u);
        REQUIRE(x_stacked.size() == x_sim.size());
        CHECK((x_stacked - x_sim).cwiseAbs().maxCoeff() <= 1e-12);

        // affine_offset must equal A_bold x1 + E_bold v by definition.
        CHECK((s.affine_offset - (s.A_bold * mdl.x1 + s.E_bold * mdl.v)).cwiseAbs().maxCoeff() ==
              0.0);
    }
}

TEST_CASE("stacked input map is lower block triangular (causality)") {
    Rng rng(7);
    const BuildingModel mdl = random_model(rng, 3, 2, 1, 6);
    const StackedSystem s = stack_dynamics(mdl);
    for (int k = 0; k < mdl.N; ++k)
        for (int j = k + 1; j < mdl.N; ++j) {
            const Eigen::MatrixXd blk =
                s.B_bold.block(Eigen::Index(k) * mdl.n, Eigen::Index(j) * mdl.m, mdl.n, mdl.m);
            CHECK(blk.cwiseAbs().maxCoeff() == 0.0);
        }
}

TEST_CASE("stack_dynamics rejects inconsistent dimensions") {
    Rng rng(5);
    BuildingModel mdl = random_model(rng, 2, 2, 1, 4);
    SUBCASE("wrong A") {
        mdl.A.resize(3, 2);
        CHECK_THROWS_AS(stack_dynamics(mdl), std::invalid_argument);
    }
    SUBCASE("wrong x1") {
        mdl.x1.resize(5);
        CHECK_THROWS_AS(stack_dynamics(mdl), std::invalid_argument);
    }
    SUBCASE("wrong v length") {
        mdl.v.resize(3);
        CHECK_THROWS_AS(stack_dynamics(mdl), std::invalid_argument);
    }
}

TEST_CASE("fleet generation is deterministic in the seed") {
    FleetSpec spec;
    spec.seed = 42;
    spec.count_small = 3;
    spec.count_medium = 1;
    spec.N = 24;
    const auto fleet_a = generate_fleet(spec);
    const auto fleet_b = generate_fleet(spec);
    REQUIRE(fleet_a.size() == 4);
    REQUIRE(fleet_b.size() == 4);
    for (size_t i = 0; i < fleet_a.size(); ++i) {
        CHECK(fleet_a[i].id == int(i));
        CHECK((fleet_a[i].A - fleet_b[i].A).cwiseAbs().maxCoeff() == 0.0);
        CHECK((fleet_a[i].B - fleet_b[i].B).cwiseAbs().maxCoeff() == 0.0);
        CHECK((fleet_a[i].E - fleet_b[i].E).cwiseAbs().maxCoeff() == 0.0);
        CHECK((fleet_a[i].v - fleet_b[i].v).cwiseAbs().maxCoeff() == 0.0);
        CHECK((fleet_a[i].c - fleet_b[i].c).cwiseAbs().maxCoeff() == 0.0);
    }

    spec.seed = 43;
    const auto fleet_c = generate_fleet(spec);
    CHECK((fleet_a[0].A - fleet_c[0].A).cwiseAbs().maxCoeff() > 0.0);

    FleetSpec empty;
    empty.count_small = 0;
    CHECK(generate_fleet(empty).empty());
    empty.count_small = -1;
    CHECK_THROWS_AS(generate_fleet(empty), std::invalid_argument);
}

TEST_CASE("generated members are valid and structurally sound") {
    FleetSpec spec;
    spec.seed = 9001;
    spec.count_small = 2;
    spec.count_medium = 2;
    spec.count_large = 2;
    spec.residential_fraction = 0.5;
    spec.N = 24;
    const auto fleet = generate_fleet(spec);
    REQUIRE(fleet.size() == 6);

    for (const auto& mdl : fleet) {
        CHECK(validate_model(mdl).empty());

        // Stable diffusion dynamics with nonnegative couplings.
        CHECK(mdl.A.minCoeff() >= 0.0);
        CHECK(mdl.A.eigenvalues().cwiseAbs().maxCoeff() < 1.0);

        // Power conversion must be strictly usable.
        CHECK(mdl.eta.cwiseAbs().maxCoeff() > 0.0);

        // Comfort band: occupied hours are tighter than unoccupied ones, and the initial
        // state sits strictly inside every hour's band.
        double widest = 0.0, narrowest = 1e300;
        for (int h = 0; h < mdl.N; ++h) {
            const double lo = mdl.x_lo(Eigen::Index(h) * mdl.n);
            const double hi = mdl.x_hi(Eigen::Index(h) * mdl.n);
            widest = std::max(widest, hi - lo);
            narrowest = std::min(narrowest, hi - lo);
            for (int i = 0; i < mdl.n; ++i) {
                CHECK(mdl.x1(i) > mdl.x_lo(Eigen::Index(h) * mdl.n + i));
                CHECK(mdl.x1(i) < mdl.x_hi(Eigen::Index(h) * mdl.n + i));
            }
        }
        CHECK(narrowest < widest);  // both occupancy regimes appear over 24 h

        // Inputs are normalized actuation levels.
        for (int h = 0; h < mdl.N; ++h)
            for (int j = 0; j < mdl.m; ++j) {
                CHECK(mdl.u_lo(Eigen::Index(h) * mdl.m + j) == 0.0);
                CHECK(mdl.u_hi(Eigen::Index(h) * mdl.m + j) == 1.0);
            }
    }
}

TEST_CASE("feasibility witness: holding the reference input keeps comfort") {
    FleetSpec spec;
    spec.seed = 31337;
    spec.count_small = 2;
    spec.count_medium = 1;
    spec.count_large = 1;
    spec.N = 48;  // two days, to exercise the wrap-around occupancy pattern
    const auto fleet = generate_fleet(spec);
    for (const auto& mdl : fleet) {
        // Recover the reference input as the minimizer of ||B u - B u_ref|| is not available
        // directly; instead verify that *some* constant input in [0,1]^m keeps the band by
        // checking the one the generator used: E(:,0) = (I - A) x1 - B u_ref  =>
        // B u_ref = (I - A) x1 - E(:,0).
        const Eigen::VectorXd target =
            (Eigen::MatrixXd::Identity(mdl.n, mdl.n) - mdl.A) * mdl.x1 - mdl.E.col(0);
        const Eigen::VectorXd u_ref =
            mdl.B.completeOrthogonalDecomposition().solve(target);
        // target must be realizable (it was built as B times an admissible input); any
        // preimage yields the same trajectory, so simulate with the recovered one.
        CHECK((mdl.B * u_ref - target).cwiseAbs().maxCoeff() <= 1e-10);

        Eigen::VectorXd u(Eigen::Index(mdl.N) * mdl.m);
        for (int h = 0; h < mdl.N; ++h) u.segment(Eigen::Index(h) * mdl.m, mdl.m) = u_ref;
        const Eigen::VectorXd x = simulate_states(mdl, u);
        for (int h = 0; h < mdl.N; ++h)
            for (int i = 0; i < mdl.n; ++i) {
                const Eigen::Index idx = Eigen::Index(h) * mdl.n + i;
                CHECK(x(idx) >= mdl.x_lo(idx) - 1e-9);
                CHECK(x(idx) <= mdl.x_hi(idx) + 1e-9);
            }
    }
}

TEST_CASE("validate_model reports each defect with a usable message") {
    Rng rng(77);
    SUBCASE("clean model passes") {
        const BuildingModel mdl = random_model(rng, 2, 2, 1, 4);
        CHECK(validate_model(mdl).empty());
    }
    SUBCASE("unstable A") {
        BuildingModel mdl = random_model(rng, 2, 2, 1, 4);
        mdl.A = 1.5 * Eigen::MatrixXd::Identity(2, 2);
        const auto msgs = validate_model(mdl);
        REQUIRE(msgs.size() == 1);
        CHECK(msgs[0].find("spectral radius") != std::string::npos);
    }
    SUBCASE("crossed state bounds name the hour") {
        BuildingModel mdl = random_model(rng, 2, 2, 1, 4);
        mdl.x_lo(2 * mdl.n) = 10.0;
        mdl.x_hi(2 * mdl.n) = 5.0;
        const auto msgs = validate_model(mdl);
        REQUIRE(msgs.size() == 1);
        CHECK(msgs[0].find("hour 3") != std::string::npos);
    }
    SUBCASE("zero eta") {
        BuildingModel mdl = random_model(rng, 2, 2, 1, 4);
        mdl.eta.setZero();
        const auto msgs = validate_model(mdl);
        REQUIRE(msgs.size() == 1);
        CHECK(msgs[0].find("eta") != std::string::npos);
    }
    SUBCASE("several size defects are all reported") {
        BuildingModel mdl = random_model(rng, 2, 2, 1, 4);
        mdl.eta.resize(5);
        mdl.c.resize(3);
        CHECK(validate_model(mdl).size() == 2);
    }
}

TEST_CASE("capacity-only member is a pure per-hour power limit") {
    Eigen::VectorXd cap(4);
    cap << 1.0, 2.0, 0.0, 0.5;
    const BuildingModel mdl = capacity_only_building(cap, 4);
    CHECK(mdl.n == 1);
    CHECK(mdl.m == 1);
    CHECK(mdl.q == 1);
    CHECK(mdl.N == 4);
    CHECK(mdl.A.cwiseAbs().maxCoeff() == 0.0);
    CHECK(mdl.B.cwiseAbs().maxCoeff() == 0.0);
    CHECK((mdl.u_hi - cap).cwiseAbs().maxCoeff() == 0.0);
    CHECK((mdl.u_lo + cap).cwiseAbs().maxCoeff() == 0.0);
    CHECK(mdl.eta(0) == 1.0);
    CHECK(validate_model(mdl).empty());
    CHECK(!std::isfinite(mdl.x_lo(0)));
    CHECK(!std::isfinite(mdl.x_hi(0)));

    CHECK_THROWS_AS(capacity_only_building(cap, 3), std::invalid_argument);
    Eigen::VectorXd neg(4);
    neg << 1.0, -0.1, 0.0, 0.5;
    CHECK_THROWS_AS(capacity_only_building(neg, 4), std::invalid_argument);
}

TEST_CASE("energy prices propagate through c = c_tilde * eta") {
    Eigen::VectorXd ct(24);
    for (int h = 0; h < 24; ++h) ct(h) = 0.1 + 0.01 * h;
    const BuildingModel mdl = prototype_building(PrototypeClass::small, true, 24, 5, 0, ct);
    for (int h = 0; h < 24; ++h)
        for (int j = 0; j < mdl.m; ++j)
            CHECK(mdl.c(Eigen::Index(h) * mdl.m + j) ==
                  doctest::Approx(ct(h) * mdl.eta(j)).epsilon(1e-12));
}
