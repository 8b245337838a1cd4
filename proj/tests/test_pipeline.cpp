#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <thread>
#include <vector>

#include <doctest.h>

#include "sepstream/batch_frame.hpp"
#include "sepstream/errors.hpp"
#include "sepstream/pipeline.hpp"
#include "sepstream/staging.hpp"
#include "sepstream/synth_source.hpp"

using namespace sepstream;

namespace {

ParticleRecord record(uint64_t id, double sep_flag, double w0 = 1.0,
                      double energy = 0.0) {
    ParticleRecord p;
    p.id = id;
    p.sep_flag = sep_flag;
    p.w0 = w0;
    p.energy = energy;
    return p;
}

StepFrame frame_of(uint64_t step, std::vector<ParticleRecord> records) {
    StepBatch batch;
    batch.step = step;
    batch.time = static_cast<double>(step);
    batch.records = std::move(records);
    return to_frame(batch);
}

bool same_bits(double a, double b) {
    return std::bit_cast<uint64_t>(a) == std::bit_cast<uint64_t>(b);
}

} // namespace

TEST_CASE("seed selection follows the threshold and weight rules") {
    const auto frame = frame_of(0, {record(100, 0.01), record(200, 0.50),
                                    record(300, 0.02, 1.0, 9.0)});
    const SeedSet seeds = build_seed_set(frame, 0.03);
    CHECK(seeds.ids == std::vector<uint64_t>{100, 300});
    CHECK(seeds.threshold == 0.03);
    REQUIRE(seeds.initial.size() == 2);
    CHECK(seeds.initial[0].id == 100);
    CHECK(seeds.initial[1].id == 300);
    CHECK(seeds.initial[1].energy == 9.0);

    SUBCASE("w0 == -1 is excluded even right on the separatrix") {
        const auto f = frame_of(0, {record(1, 0.0, -1.0), record(2, 0.01)});
        const SeedSet s = build_seed_set(f, 0.03);
        CHECK(s.ids == std::vector<uint64_t>{2});
    }
    SUBCASE("vacuous threshold keeps the whole population, sorted") {
        const auto f = frame_of(0, {record(9, 0.4), record(3, 0.1), record(7, 0.2)});
        const SeedSet s = build_seed_set(f, 10.0);
        CHECK(s.ids == std::vector<uint64_t>{3, 7, 9});
        CHECK(s.initial[0].id == 3);
    }
    SUBCASE("duplicate step-0 id keeps the first arrival") {
        const auto f = frame_of(0, {record(5, 0.01, 1.0, 111.0),
                                    record(5, 0.01, 1.0, 222.0)});
        const SeedSet s = build_seed_set(f, 0.03);
        REQUIRE(s.ids == std::vector<uint64_t>{5});
        CHECK(s.initial[0].energy == 111.0);
    }
    SUBCASE("empty selection is a configuration error") {
        const auto f = frame_of(0, {record(1, 0.9), record(2, 0.8)});
        CHECK_THROWS_AS(build_seed_set(f, 0.03), ConfigError);
    }
    SUBCASE("only a step-0 frame may build the seed set") {
        const auto f = frame_of(3, {record(1, 0.0)});
        CHECK_THROWS_AS(build_seed_set(f, 0.03), ProtocolError);
    }
}

TEST_CASE("trim filters against the seed set and sorts by id") {
    const auto frame0 = frame_of(0, {record(2, 0.0), record(9, 0.0)});
    const SeedSet seeds = build_seed_set(frame0, 1.0);
    REQUIRE(seeds.ids == std::vector<uint64_t>{2, 9});

    const auto frame = frame_of(1, {record(5, 0.0, 1.0, 50.0),
                                    record(2, 0.0, 1.0, 20.0),
                                    record(9, 0.0, 1.0, 90.0)});
    const auto kept = trim(frame, seeds);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].id == 2);
    CHECK(kept[0].energy == 20.0);
    CHECK(kept[1].id == 9);
    CHECK(kept[1].energy == 90.0);

    SUBCASE("disjoint frame trims to nothing") {
        const auto f = frame_of(1, {record(1, 0.0), record(17, 0.0)});
        CHECK(trim(f, seeds).empty());
    }
    SUBCASE("trim is idempotent") {
        StepBatch again;
        again.step = 1;
        again.records = kept;
        const auto twice = trim(to_frame(again), seeds);
        REQUIRE(twice.size() == kept.size());
        for (size_t i = 0; i < kept.size(); ++i)
            CHECK(twice[i].id == kept[i].id);
    }
    SUBCASE("duplicate id in a frame is corruption") {
        const auto f = frame_of(1, {record(2, 0.0), record(3, 0.0), record(2, 0.0)});
        CHECK_THROWS_WITH_AS(trim(f, seeds), doctest::Contains("duplicate id"),
                             IntegrityError);
    }
    SUBCASE("kept + dropped = frame size on random frames") {
        std::mt19937_64 rng(5);
        for (int round = 0; round < 20; ++round) {
            std::vector<uint64_t> ids(60);
            std::iota(ids.begin(), ids.end(), 0);
            std::shuffle(ids.begin(), ids.end(), rng);
            ids.resize(25);
            std::vector<ParticleRecord> recs;
            for (uint64_t id : ids)
                recs.push_back(record(id, 0.0));
            const auto f = frame_of(1, recs);
            const auto out = trim(f, seeds);
            size_t member = 0;
            for (uint64_t id : ids)
                member += (id == 2 || id == 9) ? 1 : 0;
            CHECK(out.size() == member);
            CHECK(out.size() + (ids.size() - member) == ids.size());
        }
    }
}

TEST_CASE("shard assignment is contiguous and near-equal") {
    auto seeds_of = [](size_t n) {
        SeedSet s;
        for (size_t i = 0; i < n; ++i) {
            s.ids.push_back(100 + 2 * i);  // gaps on purpose
            ParticleRecord p;
            p.id = s.ids.back();
            s.initial.push_back(p);
        }
        return s;
    };

    SUBCASE("6 ids over 3 workers: 2+2+2") {
        const Partition part = assign_shards(seeds_of(6), 3);
        CHECK(part.offsets == std::vector<size_t>{0, 2, 4, 6});
    }
    SUBCASE("7 ids over 3 workers: 3+2+2") {
        const Partition part = assign_shards(seeds_of(7), 3);
        CHECK(part.offsets == std::vector<size_t>{0, 3, 5, 7});
    }
    SUBCASE("one worker owns everything") {
        const Partition part = assign_shards(seeds_of(5), 1);
        CHECK(part.offsets == std::vector<size_t>{0, 5});
    }
    SUBCASE("invalid worker counts") {
        CHECK_THROWS_AS(assign_shards(seeds_of(5), 0), ConfigError);
        CHECK_THROWS_AS(assign_shards(seeds_of(5), 6), ConfigError);
    }
    SUBCASE("concatenating shards reproduces the sorted seed ids") {
        for (size_t n : {1u, 2u, 7u, 24u, 97u}) {
            const SeedSet seeds = seeds_of(n);
            for (size_t w = 1; w <= n; ++w) {
                const Partition part = assign_shards(seeds, w);
                REQUIRE(part.offsets.size() == w + 1);
                REQUIRE(part.boundaries.size() == w + 1);
                CHECK(part.offsets.front() == 0);
                CHECK(part.offsets.back() == n);
                size_t smallest = n, largest = 0;
                for (size_t k = 0; k < w; ++k) {
                    const size_t size = part.offsets[k + 1] - part.offsets[k];
                    smallest = std::min(smallest, size);
                    largest = std::max(largest, size);
                    CHECK(part.boundaries[k] == seeds.ids[part.offsets[k]]);
                    // every id in the shard range falls inside its boundary window
                    for (size_t i = part.offsets[k]; i < part.offsets[k + 1]; ++i) {
                        CHECK(seeds.ids[i] >= part.boundaries[k]);
                        CHECK(seeds.ids[i] < part.boundaries[k + 1]);
                    }
                }
                CHECK(largest - smallest <= 1);
                CHECK(part.boundaries.back() > seeds.ids.back());
            }
        }
    }
}

TEST_CASE("trajectory block placement, absence, and lifecycle") {
    TrajectoryBlock block(0, {2, 9}, {"E"});

    std::vector<ParticleRecord> step0 = {record(2, 0, 1, 5.0), record(9, 0, 1, 7.0)};
    block.append_step(step0, 0, 0.0);
    CHECK(block.value("E", 0, 0) == 5.0);
    CHECK(block.value("E", 1, 0) == 7.0);
    CHECK(block.present(0, 0));
    CHECK(block.present(1, 0));

    // id 9 goes missing: presence false, NaN fill, and the absence sticks
    std::vector<ParticleRecord> step1 = {record(2, 0, 1, 6.0)};
    block.append_step(step1, 1, 1.0);
    CHECK(block.present(0, 1));
    CHECK(!block.present(1, 1));
    CHECK(std::isnan(block.value("E", 1, 1)));

    std::vector<ParticleRecord> empty;
    block.append_step(empty, 2, 2.0);
    CHECK(block.steps_filled() == 3);
    CHECK(!block.present(0, 2));
    CHECK(!block.present(1, 2));

    SUBCASE("a vanished particle may not reappear") {
        std::vector<ParticleRecord> back = {record(9, 0, 1, 7.5)};
        CHECK_THROWS_WITH_AS(block.append_step(back, 3, 3.0),
                             doctest::Contains("reappeared"), IntegrityError);
    }
    SUBCASE("steps append strictly in order") {
        std::vector<ParticleRecord> next = {record(2, 0, 1, 6.5)};
        CHECK_THROWS_AS(block.append_step(next, 5, 5.0), ProtocolError);
        CHECK_THROWS_AS(block.append_step(next, 2, 2.0), ProtocolError);
    }
    SUBCASE("records outside the shard are a routing error") {
        std::vector<ParticleRecord> stray = {record(4, 0, 1, 1.0)};
        CHECK_THROWS_WITH_AS(block.append_step(stray, 3, 3.0),
                             doctest::Contains("shard"), IntegrityError);
    }
    SUBCASE("unsorted input is rejected") {
        TrajectoryBlock b(0, {2, 9}, {"E"});
        std::vector<ParticleRecord> backwards = {record(9, 0), record(2, 0)};
        CHECK_THROWS_AS(b.append_step(backwards, 0, 0.0), IntegrityError);
    }
    SUBCASE("finalize freezes the block") {
        block.finalize();
        CHECK(block.finalized());
        CHECK(block.value("E", 0, 1) == 6.0);  // survives the transpose
        CHECK(std::isnan(block.value("E", 1, 2)));
        const auto row = block.series("E", 0);
        REQUIRE(row.size() == 3);
        CHECK(row[0] == 5.0);
        CHECK(row[1] == 6.0);
        std::vector<ParticleRecord> more = {record(2, 0)};
        CHECK_THROWS_AS(block.append_step(more, 3, 3.0), ProtocolError);
        CHECK_THROWS_AS(block.finalize(), ProtocolError);
    }
}

namespace {

// Full-retention oracle: hold every batch, then filter/sort/transpose
// once. Completely independent of the streaming implementation.
struct OracleTrajectories {
    std::vector<uint64_t> ids;
    // [id index][step] -> value; NaN for absent
    std::map<std::string, std::vector<std::vector<double>>> grids;
    std::vector<std::vector<bool>> present;
};

OracleTrajectories batch_oracle(const std::vector<StepBatch>& batches,
                                double threshold,
                                const std::vector<std::string>& props) {
    OracleTrajectories out;
    for (const auto& rec : batches[0].records)
        if (rec.sep_flag <= threshold && rec.w0 != -1.0)
            out.ids.push_back(rec.id);
    std::sort(out.ids.begin(), out.ids.end());
    out.ids.erase(std::unique(out.ids.begin(), out.ids.end()), out.ids.end());

    const size_t steps = batches.size();
    out.present.assign(out.ids.size(), std::vector<bool>(steps, false));
    for (const auto& name : props)
        out.grids[name].assign(
            out.ids.size(),
            std::vector<double>(steps, std::numeric_limits<double>::quiet_NaN()));

    std::vector<bool> gone(out.ids.size(), false);
    for (size_t s = 0; s < steps; ++s) {
        std::map<uint64_t, const ParticleRecord*> by_id;
        for (const auto& rec : batches[s].records)
            by_id[rec.id] = &rec;
        for (size_t i = 0; i < out.ids.size(); ++i) {
            const auto it = by_id.find(out.ids[i]);
            if (it == by_id.end() || gone[i]) {
                gone[i] = true;
                continue;
            }
            out.present[i][s] = true;
            for (const auto& name : props)
                out.grids[name][i][s] = property_value(*it->second, name);
        }
    }
    return out;
}

PipelineResult run_streaming(const std::vector<StepBatch>& batches,
                             const PipelineConfig& config) {
    StageEndpoint endpoint;
    endpoint.capacity = 3;
    auto pair = open_endpoint(endpoint);
    std::thread producer([&] {
        for (const auto& batch : batches)
            write_batch(*pair.writer, batch);
        pair.writer->close();
    });
    PipelineResult result;
    try {
        result = run_pipeline(*pair.reader, config);
    } catch (...) {
        close_channel(*pair.channel);
        producer.join();
        throw;
    }
    producer.join();
    return result;
}

} // namespace

TEST_CASE("streaming pipeline equals the full-retention batch oracle") {
    SourceConfig src;
    src.n_particles = 300;
    src.n_steps = 40;
    src.sigma_psi = 0.012;
    src.sigma_energy = 3.0;
    src.sigma_vpar = 40.0;
    src.drift_psi = 0.002;
    src.loss_psi = 1.06;  // guarantees mid-run losses
    src.growth_rate = 0.05;
    src.seed = 777;

    SynthSource source(src);
    std::vector<StepBatch> batches;
    batches.push_back(source.init_population());
    while (!source.done(batches.back()))
        batches.push_back(source.advance(batches.back()));

    PipelineConfig config;
    config.threshold = 0.04;
    config.worker_count = 3;
    config.properties = {"psi", "E", "vPar", "w0"};
    const PipelineResult result = run_streaming(batches, config);

    const OracleTrajectories oracle =
        batch_oracle(batches, config.threshold, config.properties);
    REQUIRE(oracle.ids.size() >= static_cast<size_t>(config.worker_count));

    // blocks concatenate to the oracle's id list
    std::vector<uint64_t> streamed_ids;
    for (const auto& block : result.blocks) {
        CHECK(block.finalized());
        CHECK(block.steps_filled() == src.n_steps);
        streamed_ids.insert(streamed_ids.end(), block.ids().begin(),
                            block.ids().end());
    }
    REQUIRE(streamed_ids == oracle.ids);

    size_t row_base = 0;
    for (const auto& block : result.blocks) {
        for (size_t r = 0; r < block.ids().size(); ++r) {
            const size_t oracle_row = row_base + r;
            for (size_t s = 0; s < src.n_steps; ++s) {
                REQUIRE(block.present(r, s) == oracle.present[oracle_row][s]);
                for (const auto& name : config.properties) {
                    const double ours = block.value(name, r, s);
                    const double want = oracle.grids.at(name)[oracle_row][s];
                    if (std::isnan(want))
                        REQUIRE(std::isnan(ours));
                    else
                        REQUIRE(same_bits(ours, want));
                }
            }
        }
        row_base += block.ids().size();
    }

    // accounting invariants
    uint64_t total_records = 0;
    uint64_t max_frame = 0;
    for (const auto& batch : batches) {
        total_records += batch.records.size();
        max_frame = std::max<uint64_t>(max_frame, batch.records.size());
    }
    const PipelineStats& stats = result.stats;
    CHECK(stats.frames_consumed == src.n_steps);
    CHECK(stats.seed_count == oracle.ids.size());
    CHECK(stats.first_frame_records == batches.front().records.size());
    CHECK(stats.last_frame_records == batches.back().records.size());
    CHECK(stats.max_frame_records == max_frame);
    CHECK(stats.records_kept_total + stats.records_dropped_total == total_records);
    CHECK(stats.peak_retained_records <= stats.seed_count + stats.max_frame_records);
}

TEST_CASE("retained records stay bounded while the population grows") {
    SourceConfig src;
    src.n_particles = 150;
    src.n_steps = 45;
    src.growth_rate = 0.06;  // ~13x growth over the run
    src.seed = 31337;

    SynthSource source(src);
    std::vector<StepBatch> batches;
    batches.push_back(source.init_population());
    while (!source.done(batches.back()))
        batches.push_back(source.advance(batches.back()));

    uint64_t total = 0, max_frame = 0;
    for (const auto& batch : batches) {
        total += batch.records.size();
        max_frame = std::max<uint64_t>(max_frame, batch.records.size());
    }
    REQUIRE(batches.back().records.size() >= 10 * src.n_particles);

    PipelineConfig config;
    config.threshold = 0.02;
    config.worker_count = 2;
    config.properties = {"psi"};
    const PipelineResult result = run_streaming(batches, config);

    CHECK(result.stats.peak_retained_records <=
          result.stats.seed_count + max_frame);
    // far below full retention
    CHECK(result.stats.peak_retained_records < total / 5);
}

TEST_CASE("pipeline bookkeeping over a tiny hand-built stream") {
    std::vector<StepBatch> batches;
    for (uint64_t s = 0; s < 3; ++s) {
        StepBatch batch;
        batch.step = s;
        batch.time = static_cast<double>(s);
        for (uint64_t id : {11, 22, 33, 44})
            batch.records.push_back(record(id, 0.0, 1.0, static_cast<double>(id + s)));
        batches.push_back(batch);
    }

    PipelineConfig config;
    config.threshold = 1.0;
    config.worker_count = 2;
    config.properties = {"E"};
    const PipelineResult result = run_streaming(batches, config);
    REQUIRE(result.blocks.size() == 2);
    for (const auto& block : result.blocks) {
        CHECK(block.steps_filled() == 3);
        CHECK(block.ids().size() == 2);
    }
    CHECK(result.blocks[0].value("E", 0, 2) == 13.0);   // id 11 at step 2
    CHECK(result.blocks[1].value("E", 1, 1) == 45.0);   // id 44 at step 1
}

TEST_CASE("stream protocol violations surface as typed errors") {
    SUBCASE("stream ends before step 0") {
        StageEndpoint endpoint;
        auto pair = open_endpoint(endpoint);
        pair.writer->close();
        PipelineConfig config;
        CHECK_THROWS_AS(run_pipeline(*pair.reader, config), ProtocolError);
    }
    SUBCASE("first frame must be step 0") {
        std::vector<StepBatch> batches(1);
        batches[0].step = 2;
        batches[0].records.push_back(record(1, 0.0));
        PipelineConfig config;
        CHECK_THROWS_AS(run_streaming(batches, config), IntegrityError);
    }
    SUBCASE("a skipped step index is detected") {
        std::vector<StepBatch> batches(2);
        batches[0].step = 0;
        batches[0].records.push_back(record(1, 0.0));
        batches[1].step = 2;  // gap: step 1 missing
        batches[1].records.push_back(record(1, 0.0));
        PipelineConfig config;
        CHECK_THROWS_WITH_AS(run_streaming(batches, config),
                             doctest::Contains("step gap"), IntegrityError);
    }
    SUBCASE("silence beyond the read timeout") {
        StageEndpoint endpoint;
        auto pair = open_endpoint(endpoint);
        PipelineConfig config;
        config.read_timeout_s = 0.05;
        CHECK_THROWS_AS(run_pipeline(*pair.reader, config), ProtocolError);
        pair.writer->close();
    }
    SUBCASE("duplicate id in a later frame aborts the run") {
        std::vector<StepBatch> batches(2);
        batches[0].step = 0;
        batches[0].records = {record(1, 0.0), record(2, 0.0)};
        batches[1].step = 1;
        batches[1].records = {record(1, 0.0), record(1, 0.0), record(2, 0.0)};
        PipelineConfig config;
        CHECK_THROWS_AS(run_streaming(batches, config), IntegrityError);
    }
    SUBCASE("a seed reappearing after an absence aborts the run") {
        std::vector<StepBatch> batches(3);
        batches[0].step = 0;
        batches[0].records = {record(1, 0.0), record(2, 0.0)};
        batches[1].step = 1;
        batches[1].records = {record(2, 0.0)};  // id 1 absent
        batches[2].step = 2;
        batches[2].records = {record(1, 0.0), record(2, 0.0)};
        PipelineConfig config;
        CHECK_THROWS_WITH_AS(run_streaming(batches, config),
                             doctest::Contains("reappeared"), IntegrityError);
    }
}
