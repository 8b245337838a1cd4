#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include <doctest.h>

#include "sepstream/diffusion.hpp"
#include "sepstream/errors.hpp"

using namespace sepstream;

namespace {

// All-present dataset with zeroed grids; w0 (when tracked) starts at 1.
TrajectoryDataset make_dataset(size_t particles, size_t steps,
                               std::vector<std::string> props, double dt = 1.0) {
    TrajectoryDataset ds;
    ds.dt = dt;
    for (size_t i = 0; i < particles; ++i)
        ds.ids.push_back(i);
    for (size_t s = 0; s < steps; ++s)
        ds.times.push_back(dt * static_cast<double>(s));
    ds.properties = std::move(props);
    ds.presence.assign((particles * steps + 7) / 8, 0xFF);
    ds.data.assign(ds.properties.size(),
                   std::vector<double>(particles * steps, 0.0));
    for (size_t p = 0; p < ds.properties.size(); ++p)
        if (ds.properties[p] == "w0")
            std::fill(ds.data[p].begin(), ds.data[p].end(), 1.0);
    return ds;
}

void set_value(TrajectoryDataset& ds, std::string_view prop, size_t row,
               size_t step, double value) {
    ds.data[ds.property_index(prop)][row * ds.step_count() + step] = value;
}

void set_absent(TrajectoryDataset& ds, size_t row, size_t step) {
    const size_t bit = row * ds.step_count() + step;
    ds.presence[bit / 8] &= static_cast<uint8_t>(~(1u << (bit % 8)));
}

std::vector<size_t> all_rows(const TrajectoryDataset& ds) {
    std::vector<size_t> rows(ds.particle_count());
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
}

bool same_bits(double a, double b) {
    return std::bit_cast<uint64_t>(a) == std::bit_cast<uint64_t>(b);
}

} // namespace

TEST_CASE("displacement is the plain difference from step 0") {
    auto ds = make_dataset(2, 6, {"E", "w0", "theta"});
    set_value(ds, "E", 0, 0, 5.0);
    set_value(ds, "E", 0, 5, 7.5);
    set_value(ds, "E", 1, 0, 3.25);
    set_value(ds, "E", 1, 5, 3.25);

    CHECK(displacement(ds, 0, "E", 5) == 2.5);
    CHECK(displacement(ds, 1, "E", 5) == 0.0);

    set_absent(ds, 0, 5);
    CHECK(!displacement(ds, 0, "E", 5).has_value());
    set_absent(ds, 1, 0);
    CHECK(!displacement(ds, 1, "E", 5).has_value());
}

TEST_CASE("weighted moments match the formulas directly") {
    SUBCASE("opposite unit displacements, equal weights") {
        auto ds = make_dataset(2, 2, {"E", "w0"});
        set_value(ds, "E", 0, 0, 10.0);
        set_value(ds, "E", 0, 1, 11.0);  // delta +1
        set_value(ds, "E", 1, 0, 20.0);
        set_value(ds, "E", 1, 1, 19.0);  // delta -1
        const MomentResult r = weighted_moments(ds, all_rows(ds), "E", 1);
        REQUIRE(r.defined);
        CHECK(r.m == 0.0);
        CHECK(r.msq == 1.0);
        CHECK(r.w_sum == 2.0);
        CHECK(r.n_eff == 2);
    }
    SUBCASE("single particle: the weight cancels") {
        auto ds = make_dataset(1, 2, {"E", "w0"});
        set_value(ds, "E", 0, 1, 3.0);  // delta 3 from 0
        set_value(ds, "w0", 0, 1, 2.0);
        const MomentResult r = weighted_moments(ds, all_rows(ds), "E", 1);
        REQUIRE(r.defined);
        CHECK(r.m == 3.0);
        CHECK(r.msq == 9.0);
        CHECK(r.w_sum == 2.0);
        CHECK(r.n_eff == 1);
    }
    SUBCASE("w0 == -1 contributes nothing at all") {
        auto ds = make_dataset(3, 2, {"E", "w0"});
        set_value(ds, "E", 0, 1, 1.0);
        set_value(ds, "E", 1, 1, 2.0);
        set_value(ds, "E", 2, 1, 1000.0);
        set_value(ds, "w0", 2, 1, -1.0);
        const MomentResult with = weighted_moments(ds, all_rows(ds), "E", 1);
        const MomentResult without = weighted_moments(ds, {0, 1}, "E", 1);
        REQUIRE(with.defined);
        CHECK(same_bits(with.m, without.m));
        CHECK(same_bits(with.msq, without.msq));
        CHECK(with.w_sum == without.w_sum);
        CHECK(with.n_eff == 2);
    }
    SUBCASE("zero total weight is a gap, not an error") {
        auto ds = make_dataset(2, 2, {"E", "w0"});
        set_value(ds, "w0", 0, 1, 0.0);
        set_value(ds, "w0", 1, 1, 0.0);
        const MomentResult r = weighted_moments(ds, all_rows(ds), "E", 1);
        CHECK(!r.defined);
        CHECK(std::isnan(r.m));
        CHECK(r.w_sum == 0.0);
        CHECK(r.n_eff == 2);
    }
    SUBCASE("absent particles are skipped") {
        auto ds = make_dataset(2, 3, {"E", "w0"});
        set_value(ds, "E", 0, 2, 4.0);
        set_value(ds, "E", 1, 2, 100.0);
        set_absent(ds, 1, 2);
        const MomentResult r = weighted_moments(ds, all_rows(ds), "E", 2);
        REQUIRE(r.defined);
        CHECK(r.m == 4.0);
        CHECK(r.n_eff == 1);
    }
}

TEST_CASE("diffusion coefficient formula") {
    CHECK(diffusion_coefficient(0.0, 4.0, "E", 8, 0.5, 1.0) == 1.0);
    // the psi variant divides by dpdrs^2
    CHECK(diffusion_coefficient(0.0, 4.0, "psi", 8, 0.5, 2.0) == 0.25);
    // dpdrs is ignored for everything but psi
    CHECK(diffusion_coefficient(0.0, 4.0, "vPar", 8, 0.5, 2.0) == 1.0);
    // zero variance
    CHECK(diffusion_coefficient(2.0, 4.0, "E", 10, 1.0, 1.0) == 0.0);
}

TEST_CASE("algebraic invariances of the weighted moments") {
    std::mt19937_64 rng(2026);
    std::uniform_real_distribution<double> value(-8.0, 8.0);
    std::uniform_real_distribution<double> weight(0.25, 3.0);

    auto ds = make_dataset(60, 5, {"E", "w0"});
    for (size_t row = 0; row < 60; ++row)
        for (size_t s = 0; s < 5; ++s) {
            set_value(ds, "E", row, s, value(rng));
            set_value(ds, "w0", row, s, weight(rng));
        }
    const MomentResult base = weighted_moments(ds, all_rows(ds), "E", 4);
    REQUIRE(base.defined);

    SUBCASE("scaling every weight by a power of two changes nothing") {
        auto scaled = ds;
        const size_t w_idx = ds.property_index("w0");
        for (auto& w : scaled.data[w_idx])
            w *= 4.0;
        const MomentResult r = weighted_moments(scaled, all_rows(ds), "E", 4);
        CHECK(same_bits(r.m, base.m));
        CHECK(same_bits(r.msq, base.msq));
        CHECK(r.n_eff == base.n_eff);
    }
    SUBCASE("scaling by a non-dyadic constant changes nothing within rounding") {
        auto scaled = ds;
        const size_t w_idx = ds.property_index("w0");
        for (auto& w : scaled.data[w_idx])
            w *= 3.0;
        const MomentResult r = weighted_moments(scaled, all_rows(ds), "E", 4);
        CHECK(r.m == doctest::Approx(base.m).epsilon(1e-12));
        CHECK(r.msq == doctest::Approx(base.msq).epsilon(1e-12));
    }
    SUBCASE("translating the property leaves displacements untouched") {
        // integer-valued samples keep the translation exact
        auto shifted = make_dataset(60, 5, {"E", "w0"});
        std::mt19937_64 rng2(2026);
        std::uniform_int_distribution<int> ivalue(-50, 50);
        auto plain = make_dataset(60, 5, {"E", "w0"});
        for (size_t row = 0; row < 60; ++row)
            for (size_t s = 0; s < 5; ++s) {
                const double v = static_cast<double>(ivalue(rng2));
                set_value(plain, "E", row, s, v);
                set_value(shifted, "E", row, s, v + 1024.0);
            }
        const MomentResult a = weighted_moments(plain, all_rows(plain), "E", 4);
        const MomentResult b = weighted_moments(shifted, all_rows(shifted), "E", 4);
        CHECK(same_bits(a.m, b.m));
        CHECK(same_bits(a.msq, b.msq));
    }
    SUBCASE("raw sums are additive over disjoint row sets") {
        std::vector<size_t> first, second;
        for (size_t row = 0; row < 60; ++row)
            (row < 30 ? first : second).push_back(row);
        const MomentResult a = weighted_moments(ds, first, "E", 4);
        const MomentResult b = weighted_moments(ds, second, "E", 4);
        CHECK(base.w_sum ==
              doctest::Approx(a.w_sum + b.w_sum).epsilon(1e-13));
        CHECK(base.m * base.w_sum ==
              doctest::Approx(a.m * a.w_sum + b.m * b.w_sum).epsilon(1e-12));
        CHECK(base.msq * base.w_sum ==
              doctest::Approx(a.msq * a.w_sum + b.msq * b.w_sum).epsilon(1e-12));
        CHECK(base.n_eff == a.n_eff + b.n_eff);
    }
}

namespace {

DiffusionConfig whole_circle_config(std::vector<std::string> props, double dt) {
    DiffusionConfig config;
    config.regions = {RegionSpec::angles(0.0, kTwoPi)};
    config.properties = std::move(props);
    config.dt = dt;
    return config;
}

} // namespace

TEST_CASE("frozen particles diffuse nowhere") {
    auto ds = make_dataset(40, 6, {"E", "w0", "theta"});
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> value(50.0, 60.0);
    for (size_t row = 0; row < 40; ++row) {
        const double v = value(rng);
        for (size_t s = 0; s < 6; ++s)
            set_value(ds, "E", row, s, v);
    }
    const DiffusionSeries series =
        compute_series(ds, whole_circle_config({"E"}, 1.0));
    REQUIRE(series.evaluated_steps() == 5);
    CHECK(series.region_counts == std::vector<uint64_t>{40});
    for (uint64_t step = 1; step <= 5; ++step) {
        const DiffusionCell& cell = series.at(0, 0, step);
        REQUIRE(cell.defined);
        CHECK(cell.m == 0.0);
        CHECK(cell.msq == 0.0);
        CHECK(cell.msd == 0.0);
        CHECK(cell.d == 0.0);
        CHECK(cell.n_eff == 40);
    }
    // series time axis starts at step 1
    CHECK(series.times.front() == ds.times[1]);
    CHECK(series.times.back() == ds.times[5]);
}

TEST_CASE("msd stays nonnegative under positive weights") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> jump(-1.0, 1.0);
    std::uniform_real_distribution<double> weight(0.1, 2.0);
    auto ds = make_dataset(80, 12, {"E", "w0", "theta"});
    for (size_t row = 0; row < 80; ++row) {
        double e = 100.0;
        for (size_t s = 0; s < 12; ++s) {
            set_value(ds, "E", row, s, e);
            set_value(ds, "w0", row, s, weight(rng));
            e += jump(rng);
        }
    }
    const DiffusionSeries series =
        compute_series(ds, whole_circle_config({"E"}, 1.0));
    for (uint64_t step = 1; step <= series.evaluated_steps(); ++step) {
        const DiffusionCell& cell = series.at(0, 0, step);
        REQUIRE(cell.defined);
        CHECK(cell.msd >= -1e-12);
        CHECK(cell.d >= -1e-12);
    }
}

TEST_CASE("Brownian walk recovers sigma^2/dt") {
    const size_t particles = 4000;
    const size_t steps = 41;  // N = 40 at the end
    const double sigma = 0.1;
    const double dt = 1.0;

    auto ds = make_dataset(particles, steps, {"E", "w0", "theta"}, dt);
    std::mt19937_64 rng(515151);
    std::normal_distribution<double> jump(0.0, sigma);
    for (size_t row = 0; row < particles; ++row) {
        double e = 500.0;
        for (size_t s = 0; s < steps; ++s) {
            set_value(ds, "E", row, s, e);
            e += jump(rng);
        }
    }
    const DiffusionSeries series =
        compute_series(ds, whole_circle_config({"E"}, dt));
    const double expected = sigma * sigma / dt;  // 0.01
    for (uint64_t step : {10u, 25u, 40u}) {
        const DiffusionCell& cell = series.at(0, 0, step);
        REQUIRE(cell.defined);
        CHECK(cell.d == doctest::Approx(expected).epsilon(0.10));
    }
}

TEST_CASE("drift shifts the mean but not the diffusion coefficient") {
    const size_t particles = 3000;
    const size_t steps = 51;  // N = 50
    const double sigma = 0.002;
    const double mu = 0.01;

    auto ds = make_dataset(particles, steps, {"psi", "w0", "theta"});
    std::mt19937_64 rng(424242);
    std::normal_distribution<double> jump(0.0, sigma);
    for (size_t row = 0; row < particles; ++row) {
        double psi = 1.0;
        for (size_t s = 0; s < steps; ++s) {
            set_value(ds, "psi", row, s, psi);
            psi += mu + jump(rng);
        }
    }
    const DiffusionSeries series =
        compute_series(ds, whole_circle_config({"psi"}, 1.0));
    const DiffusionCell& cell = series.at(0, 0, 50);
    REQUIRE(cell.defined);
    CHECK(cell.m == doctest::Approx(50 * mu).epsilon(0.01));
    CHECK(cell.d == doctest::Approx(sigma * sigma).epsilon(0.15));
}

TEST_CASE("the series agrees with single-step calls") {
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> value(-2.0, 2.0);
    std::uniform_real_distribution<double> angle(0.0, kTwoPi);
    auto ds = make_dataset(100, 8, {"E", "psi", "w0", "theta"});
    for (size_t row = 0; row < 100; ++row) {
        set_value(ds, "theta", row, 0, angle(rng));
        for (size_t s = 0; s < 8; ++s) {
            set_value(ds, "E", row, s, value(rng));
            set_value(ds, "psi", row, s, 1.0 + 0.1 * value(rng));
        }
    }

    DiffusionConfig config;
    config.regions = {RegionSpec::quad_segment(0, 3),
                      RegionSpec::angles(0.2 * std::numbers::pi,
                                         0.9 * std::numbers::pi)};
    config.properties = {"psi", "E"};
    config.dt = 0.5;
    config.dpdrs = {2.0, 0.5};

    const DiffusionSeries series = compute_series(ds, config);
    const auto members = assign_regions(ds, config.model, config.regions);
    REQUIRE(members.size() == 2);
    CHECK(series.region_counts[0] == members[0].size());
    CHECK(series.region_counts[1] == members[1].size());

    for (size_t r = 0; r < 2; ++r)
        for (size_t p = 0; p < 2; ++p)
            for (uint64_t step = 1; step <= 7; ++step) {
                const DiffusionCell& cell = series.at(r, p, step);
                const MomentResult mom =
                    weighted_moments(ds, members[r], config.properties[p], step);
                REQUIRE(cell.defined == mom.defined);
                if (!mom.defined)
                    continue;
                CHECK(same_bits(cell.m, mom.m));
                CHECK(same_bits(cell.msq, mom.msq));
                const double d = diffusion_coefficient(
                    mom.m, mom.msq, config.properties[p], step, config.dt,
                    config.dpdrs[r]);
                CHECK(same_bits(cell.d, d));
            }
}

TEST_CASE("region computation is identical across worker counts") {
    std::mt19937_64 rng(88);
    std::uniform_real_distribution<double> value(-1.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, kTwoPi);
    auto ds = make_dataset(200, 6, {"E", "w0", "theta"});
    for (size_t row = 0; row < 200; ++row) {
        set_value(ds, "theta", row, 0, angle(rng));
        for (size_t s = 0; s < 6; ++s)
            set_value(ds, "E", row, s, value(rng));
    }

    DiffusionConfig config;
    for (int seg = 0; seg < kSegmentsPerQuadrant; ++seg)
        for (int quad = 0; quad < kQuadrants; ++quad)
            config.regions.push_back(RegionSpec::quad_segment(quad, seg));
    config.properties = {"E"};
    config.dt = 1.0;

    const DiffusionSeries serial = compute_series(ds, config);
    config.worker_count = 4;
    const DiffusionSeries parallel = compute_series(ds, config);

    REQUIRE(serial.cells.size() == parallel.cells.size());
    for (size_t i = 0; i < serial.cells.size(); ++i) {
        CHECK(serial.cells[i].defined == parallel.cells[i].defined);
        if (serial.cells[i].defined) {
            CHECK(same_bits(serial.cells[i].m, parallel.cells[i].m));
            CHECK(same_bits(serial.cells[i].d, parallel.cells[i].d));
        }
    }
    // 32 quadrant segments partition the present population
    const uint64_t total = std::accumulate(serial.region_counts.begin(),
                                           serial.region_counts.end(),
                                           uint64_t{0});
    CHECK(total == 200);
}

TEST_CASE("regions are assigned from the step-0 angle") {
    auto ds = make_dataset(5, 3, {"E", "w0", "theta"});
    set_value(ds, "theta", 0, 0, 0.05);                        // quadrant 0, segment 0
    set_value(ds, "theta", 1, 0, std::numbers::pi);            // quadrant 2, segment 0
    set_value(ds, "theta", 2, 0, 1.5 * std::numbers::pi);      // the X-point
    set_value(ds, "theta", 3, 0, 0.3 * std::numbers::pi);
    set_value(ds, "theta", 4, 0, 0.05);
    // later-step angles must not matter
    for (size_t row = 0; row < 5; ++row)
        set_value(ds, "theta", row, 1, 5.0);
    set_absent(ds, 4, 0);  // absent at step 0: no region at all

    SeparatrixModel model;
    const std::vector<RegionSpec> regions = {
        RegionSpec::quad_segment(0, 0),
        RegionSpec::quad_segment(2, 0),
        RegionSpec::quad_segment(0, 0, AngleOrigin::xpoint),
        RegionSpec::angles(0.2 * std::numbers::pi, 0.9 * std::numbers::pi),
        RegionSpec::angles(0.0, kTwoPi),
    };
    const auto members = assign_regions(ds, model, regions);
    CHECK(members[0] == std::vector<size_t>{0});
    CHECK(members[1] == std::vector<size_t>{1});
    // under the xpoint origin the X-point itself maps to angle 0
    CHECK(members[2] == std::vector<size_t>{2});
    CHECK(members[3] == std::vector<size_t>{3});
    CHECK(members[4] == std::vector<size_t>{0, 1, 2, 3});
}

TEST_CASE("diffusion config validation") {
    DiffusionConfig good;
    good.regions = {RegionSpec::quad_segment(0, 0)};
    good.properties = {"E"};
    good.dt = 1.0;
    CHECK_NOTHROW(good.validate());

    auto expect_bad = [](DiffusionConfig config) {
        CHECK_THROWS_AS(config.validate(), ConfigError);
    };
    DiffusionConfig c;

    c = good; c.regions.clear(); expect_bad(c);
    c = good; c.properties.clear(); expect_bad(c);
    c = good; c.properties = {"theta"}; expect_bad(c);   // not a diffusion property
    c = good; c.dt = 0.0; expect_bad(c);
    c = good; c.dpdrs = {1.0, 2.0}; expect_bad(c);       // size mismatch
    c = good; c.dpdrs = {0.0}; expect_bad(c);
    c = good; c.worker_count = 0; expect_bad(c);
    c = good; c.regions = {RegionSpec::quad_segment(4, 0)}; expect_bad(c);
    c = good; c.regions = {RegionSpec::quad_segment(0, 8)}; expect_bad(c);
}
