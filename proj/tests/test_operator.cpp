// Assembly of the banded operators: blocks, closed-form columns, the
// factorized cross-check, boundary policies and the rank-one perturbation.

#include <catch2/catch_amalgamated.hpp>

#include <complex>
#include <random>
#include <sstream>

#include "floq/assemble.hpp"
#include "floq/banded.hpp"
#include "floq/model.hpp"

using namespace floq;

namespace {

ModelParams random_params(std::mt19937_64& rng, double lambda = 0.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double t = 0.05 + 0.9 * unit(rng);
    return make_params(t, kTwoPi * unit(rng), kTwoPi * unit(rng), lambda,
                       BetaValue::floating(unit(rng)));
}

double interior_agreement(const BandedUnitary& a, const BandedUnitary& b) {
    const int n = a.n_dim();
    const int lo = a.geometry() == Geometry::full_line ? 3 : 1;
    double worst = 0;
    for (int col = lo; col <= n - 2; ++col)
        for (int row = std::max(1, col - 2); row <= std::min(n, col + 2); ++row)
            worst = std::max(worst, std::abs(a.entry(row, col) - b.entry(row, col)));
    return worst;
}

} // namespace

TEST_CASE("scatter blocks are unitary with determinant e^{-2 i theta_k}") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
        ModelParams p = random_params(rng);
        AlmostPeriodicPhases ph(p);
        BlockPair bp = build_blocks(ph, p.r, p.t, -5, 5);
        for (long long k = -5; k <= 5; ++k) {
            const ScatterBlock& s = bp.at(k);
            CHECK(std::abs(std::norm(s.a11) + std::norm(s.a12) - 1.0) < 1e-14);
            CHECK(std::abs(std::norm(s.a21) + std::norm(s.a22) - 1.0) < 1e-14);
            CHECK(std::abs(s.a11 * std::conj(s.a21) + s.a12 * std::conj(s.a22)) < 1e-14);
            // symbolic determinant oracle for the 2x2 block
            const cplx det_expect = std::polar(1.0, -2.0 * ph.at(k).theta);
            CHECK(std::abs(s.det() - det_expect) < 1e-14);
        }
    }
}

TEST_CASE("t = 0 blocks are diagonal, r = 0 blocks antidiagonal") {
    ModelParams p = make_params(0.0, 0.4, 0.9, 0.0, BetaValue::floating(0.3));
    AlmostPeriodicPhases ph(p);
    const ScatterBlock s = scatter_block(ph, p.r, p.t, 2);
    CHECK(std::abs(s.a12) == 0.0);
    CHECK(std::abs(s.a21) == 0.0);
    CHECK(std::abs(s.a11 - std::polar(1.0, -(ph.at(2).theta + ph.at(2).alpha))) < 1e-15);

    ModelParams q = make_params(1.0, 0.4, 0.9, 0.0, BetaValue::floating(0.3));
    const ScatterBlock s2 = scatter_block(ph, q.r, q.t, 2);
    CHECK(std::abs(s2.a11) == 0.0);
    CHECK(std::abs(s2.a22) == 0.0);
    CHECK(std::abs(s2.a12 - cplx(0, 1) * std::polar(1.0, -ph.at(2).theta + ph.at(2).gamma)) < 1e-15);
}

TEST_CASE("full-line closed form at t = 0 is diagonal with the stated phases") {
    ModelParams p = make_params(0.0, 0.0, 0.23, 0.0, BetaValue::floating(0.37));
    BandedUnitary u = build_full_line(p, 32);
    for (int col = 1; col <= 32; ++col) {
        const long s = u.site_of(col);
        // diagonal phase e^{-i(2 pi beta (4k +- 1) + 2 theta)}: site 2k
        // carries 4k - 1 and site 2k + 1 carries 4k + 1
        const long long idx4 = s % 2 == 0 ? 2 * s - 1 : 2 * (s - 1) + 1;
        const double expect_phase =
            reduce_angle(kTwoPi * p.beta.to_double() * static_cast<double>(idx4) + 2 * p.theta);
        CHECK(std::abs(u.entry(col, col) - std::polar(1.0, -expect_phase)) < 1e-12);
        for (int row = std::max(1, col - 2); row <= std::min(32, col + 2); ++row)
            if (row != col) CHECK(std::abs(u.entry(row, col)) == 0.0);
    }
}

TEST_CASE("full-line closed form at r = 0 shifts even sites up and odd sites down") {
    ModelParams p = make_params(1.0, 0.0, 0.51, 0.0, BetaValue::floating(0.29));
    BandedUnitary u = build_full_line(p, 32);
    const double beta = p.beta.to_double();
    for (long s = -14; s <= 12; ++s) {
        const int col = u.index_of(s);
        if (s % 2 == 0) { // phi_{2k} -> -e^{-i(2 pi beta (4k+1) + 2 theta)} phi_{2k+2}
            const double phase = reduce_angle(kTwoPi * beta * static_cast<double>(2 * s + 1) + 2 * p.theta);
            CHECK(std::abs(u.entry(u.index_of(s + 2), col) + std::polar(1.0, -phase)) < 1e-12);
        } else { // phi_{2k+1} -> -e^{-i(2 pi beta (4k-1) + 2 theta)} phi_{2k-1}
            const double phase =
                reduce_angle(kTwoPi * beta * static_cast<double>(2 * (s - 1) - 1) + 2 * p.theta);
            CHECK(std::abs(u.entry(u.index_of(s - 2), col) + std::polar(1.0, -phase)) < 1e-12);
        }
    }
}

TEST_CASE("factorized and closed-form builds agree on interior columns, 100 draws") {
    std::mt19937_64 rng(5);
    for (int d = 0; d < 100; ++d) {
        ModelParams p = random_params(rng);
        AlmostPeriodicPhases ph(p);
        BandedUnitary hf = assemble_half(ph, p.r, p.t, 64);
        BandedUnitary hb = assemble_from_blocks(ph, p.r, p.t, Geometry::half_line, 64);
        CHECK(interior_agreement(hf, hb) < 1e-13);
        BandedUnitary ff = assemble_full(ph, p.r, p.t, 64);
        BandedUnitary fb = assemble_from_blocks(ph, p.r, p.t, Geometry::full_line, 64);
        CHECK(interior_agreement(ff, fb) < 1e-13);
    }
}

TEST_CASE("open truncation: factorized equals closed form on every column") {
    std::mt19937_64 rng(6);
    for (int d = 0; d < 20; ++d) {
        ModelParams p = random_params(rng);
        AlmostPeriodicPhases ph(p);
        BandedUnitary hf = assemble_half(ph, p.r, p.t, 32);
        BandedUnitary hb = assemble_from_blocks(ph, p.r, p.t, Geometry::half_line, 32);
        CHECK(hf.max_abs_diff(hb) < 1e-13);
        BandedUnitary ff = assemble_full(ph, p.r, p.t, 32);
        BandedUnitary fb = assemble_from_blocks(ph, p.r, p.t, Geometry::full_line, 32);
        CHECK(ff.max_abs_diff(fb) < 1e-13);
    }
}

TEST_CASE("half-line column 1 matches the boundary form") {
    ModelParams p = make_params(std::sqrt(0.5), 0.8, 0.3, 0.0, BetaValue::floating(0.61));
    BandedUnitary u = build_half_line(p, 16);
    const double f = kTwoPi * p.beta.to_double() + 2 * p.theta;
    CHECK(std::abs(u.entry(1, 1) - p.r * std::polar(1.0, -(f + p.alpha))) < 1e-13);
    CHECK(std::abs(u.entry(2, 1) - cplx(0, 1) * p.t * std::polar(1.0, -(f + p.alpha))) < 1e-13);
    CHECK(u.column_norm2(1) == Catch::Approx(1.0).margin(1e-14));
    int nnz = 0;
    for (int row = 1; row <= 3; ++row)
        if (std::abs(u.entry(row, 1)) > 0) ++nnz;
    CHECK(nnz == 2);

    // r = 0 sends phi_1 to i e^{-i(2 pi beta + 2 theta)} e^{-i alpha} phi_2
    ModelParams q = make_params(1.0, 0.8, 0.3, 0.0, BetaValue::floating(0.61));
    BandedUnitary u0 = build_half_line(q, 16);
    CHECK(std::abs(u0.entry(1, 1)) == 0.0);
    CHECK(std::abs(u0.entry(2, 1) - cplx(0, 1) * std::polar(1.0, -(f + q.alpha))) < 1e-13);
}

TEST_CASE("half-line interior columns equal the full-line columns") {
    std::mt19937_64 rng(8);
    for (int d = 0; d < 10; ++d) {
        ModelParams p = random_params(rng);
        AlmostPeriodicPhases ph(p);
        BandedUnitary h = assemble_half(ph, p.r, p.t, 32);
        BandedUnitary f = assemble_full(ph, p.r, p.t, 80);
        for (int col = 2; col <= 30; ++col) {
            const int fcol = f.index_of(col);
            for (int row = std::max(1, col - 2); row <= col + 2; ++row)
                CHECK(std::abs(h.entry(row, col) - f.entry(f.index_of(row), fcol)) < 1e-13);
        }
    }
}

TEST_CASE("rank-one perturbation touches only column 1") {
    std::mt19937_64 rng(9);
    ModelParams p = random_params(rng);
    BandedUnitary u = build_half_line(p, 32);

    BandedUnitary id = perturb_rank_one(u, 0.0);
    CHECK(id.equal_bits(u));

    BandedUnitary neg = perturb_rank_one(u, kPi);
    CHECK(std::abs(neg.entry(1, 1) + u.entry(1, 1)) < 1e-15);
    CHECK(std::abs(neg.entry(2, 1) + u.entry(2, 1)) < 1e-15);
    for (int col = 2; col <= 32; ++col)
        for (int row = std::max(1, col - 2); row <= std::min(32, col + 2); ++row)
            CHECK(neg.entry(row, col) == u.entry(row, col));

    const auto d0 = unitarity_defect(u);
    const auto d1 = unitarity_defect(perturb_rank_one(u, 1.234));
    CHECK(std::abs(d0.interior - d1.interior) < 1e-14);
    CHECK(std::abs(d0.boundary - d1.boundary) < 1e-14);

    BandedUnitary fl = build_full_line(p, 32);
    CHECK_THROWS_AS(perturb_rank_one(fl, 0.5), GeometryError);
    CHECK_NOTHROW(perturb_rank_one(fl, 0.5, true));
}

TEST_CASE("theta covariance") {
    ModelParams p = make_params(std::sqrt(0.5), 0.3, 0.0, 0.0, BetaValue::floating(0.618));
    CHECK(theta_covariance_check(p, 64) == 0.0);
    p.theta = kPi;
    CHECK(theta_covariance_check(p, 64) < 1e-13);
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0;
    for (int i = 0; i < 32; ++i) {
        p.theta = kTwoPi * unit(rng);
        worst = std::max(worst, theta_covariance_check(p, 64));
    }
    CHECK(worst < 1e-13);
}

TEST_CASE("unitarity defects by boundary policy") {
    std::mt19937_64 rng(11);
    ModelParams p = random_params(rng);

    BandedUnitary uo = build_half_line(p, 1024, Boundary::open);
    CHECK(unitarity_defect(uo).interior < 1e-12);

    BandedUnitary uc = build_half_line(p, 1024, Boundary::closed);
    const auto d_closed = unitarity_defect(uc);
    CHECK(d_closed.interior < 1e-12);
    CHECK(d_closed.boundary < 1e-12);

    // t = 0: diagonal operator, zero defect everywhere including the cut
    ModelParams pt = make_params(0.0, 0.2, 0.4, 0.0, BetaValue::floating(0.7));
    const auto d_t0 = unitarity_defect(build_half_line(pt, 64, Boundary::open));
    CHECK(d_t0.interior < 1e-15);
    CHECK(d_t0.boundary < 1e-15);

    // r = 0 half line: the cut removes the outgoing hop of the last column,
    // so its norm defect is exactly t^2 = 1
    ModelParams pr = make_params(1.0, 0.2, 0.4, 0.0, BetaValue::floating(0.7));
    const auto d_r0 = unitarity_defect(build_half_line(pr, 64, Boundary::open));
    CHECK(d_r0.interior < 1e-12);
    CHECK(d_r0.boundary == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("interior column norms and modulus pattern") {
    std::mt19937_64 rng(12);
    for (int d = 0; d < 20; ++d) {
        ModelParams p = random_params(rng);
        BandedUnitary u = build_half_line(p, 64);
        for (int col = 2; col <= 62; ++col) {
            CHECK(u.column_norm2(col) == Catch::Approx(1.0).margin(1e-13));
            // |entries| take values in {r^2, r t, t^2} only, never phases
            for (int row = std::max(1, col - 2); row <= std::min(64, col + 2); ++row) {
                const double a = std::abs(u.entry(row, col));
                if (a == 0.0) continue;
                const double m1 = std::abs(a - p.r * p.r), m2 = std::abs(a - p.r * p.t),
                             m3 = std::abs(a - p.t * p.t);
                CHECK(std::min({m1, m2, m3}) < 1e-13);
            }
        }
    }
}

TEST_CASE("dimension validation") {
    ModelParams p = make_params(0.5, 0, 0, 0, BetaValue::floating(0.5));
    AlmostPeriodicPhases ph(p);
    CHECK_THROWS_AS(assemble_half(ph, p.r, p.t, 6), ValidationError);
    CHECK_THROWS_AS(assemble_half(ph, p.r, p.t, 9), ValidationError);
    CHECK_THROWS_AS(assemble_full(ph, p.r, p.t, 10), ValidationError);
}

TEST_CASE("operator export is parseable and complete") {
    ModelParams p = make_params(std::sqrt(0.5), 0.1, 0.2, 0.0, BetaValue::floating(0.618));
    BandedUnitary u = build_half_line(p, 16);
    std::ostringstream os;
    u.export_text(os, p.canonical_str());
    std::istringstream in(os.str());
    std::string line;
    long rows = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        if (line == "col row re im") {
            saw_header = true;
            continue;
        }
        if (line.empty() || line[0] == '#') continue;
        REQUIRE(saw_header);
        std::istringstream ls(line);
        int col, row;
        double re, im;
        REQUIRE((ls >> col >> row >> re >> im));
        CHECK(std::abs(u.entry(row, col) - cplx(re, im)) < 1e-16);
        ++rows;
    }
    CHECK(saw_header);
    CHECK(rows > 16 * 3);
}
