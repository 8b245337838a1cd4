#include "sepstream/pipeline.hpp"

#include <algorithm>
#include <condition_variable>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <utility>

#include "sepstream/errors.hpp"

namespace sepstream {

std::vector<std::string> default_trajectory_properties() {
    std::vector<std::string> props;
    for (std::string_view name : kAllProperties)
        if (name != "id")
            props.emplace_back(name);
    return props;
}

namespace {

const std::vector<uint64_t>& id_column(const StepFrame& frame) {
    const PropertyColumn& c = frame.require("id");
    if (c.type != ElementType::u64)
        throw IntegrityError("step " + std::to_string(frame.step) +
                             ": id column is not u64");
    return c.u64;
}

// Record materialized from one frame row: defaults plus whatever
// float columns the frame carries.
ParticleRecord record_at(const StepFrame& frame, size_t row, uint64_t id) {
    ParticleRecord rec;
    rec.id = id;
    for (const auto& c : frame.columns) {
        if (c.name == "id" || !is_known_property(c.name))
            continue;
        if (c.type != ElementType::f64)
            throw IntegrityError("step " + std::to_string(frame.step) + ": column '" +
                                 c.name + "' is not f64");
        set_property(rec, c.name, c.f64[row]);
    }
    return rec;
}

void check_unique_ids(const StepFrame& frame, const std::vector<uint64_t>& ids) {
    std::vector<uint64_t> sorted(ids);
    std::sort(sorted.begin(), sorted.end());
    const auto dup = std::adjacent_find(sorted.begin(), sorted.end());
    if (dup != sorted.end())
        throw IntegrityError("step " + std::to_string(frame.step) + ": duplicate id " +
                             std::to_string(*dup) + " in one frame");
}

} // namespace

SeedSet build_seed_set(const StepFrame& frame0, double threshold) {
    if (frame0.step != 0)
        throw ProtocolError("seed selection needs the step-0 frame, got step " +
                            std::to_string(frame0.step));
    const auto& ids = id_column(frame0);
    const auto& sep = frame0.require("sep_flag");
    const auto& w0 = frame0.require("w0");

    // (id, row) pairs for matching records; sort, then first row wins
    // among duplicate ids
    std::vector<std::pair<uint64_t, size_t>> picked;
    for (size_t row = 0; row < ids.size(); ++row)
        if (sep.f64[row] <= threshold && w0.f64[row] != -1.0)
            picked.emplace_back(ids[row], row);
    std::sort(picked.begin(), picked.end());
    picked.erase(std::unique(picked.begin(), picked.end(),
                             [](const auto& a, const auto& b) { return a.first == b.first; }),
                 picked.end());
    if (picked.empty())
        throw ConfigError("seed selection is empty: no step-0 record has sep_flag <= " +
                          std::to_string(threshold) + " with w0 != -1");

    SeedSet seeds;
    seeds.threshold = threshold;
    seeds.ids.reserve(picked.size());
    seeds.initial.reserve(picked.size());
    for (const auto& [id, row] : picked) {
        seeds.ids.push_back(id);
        seeds.initial.push_back(record_at(frame0, row, id));
    }
    return seeds;
}

std::vector<ParticleRecord> trim(const StepFrame& frame, const SeedSet& seeds) {
    const auto& ids = id_column(frame);
    check_unique_ids(frame, ids);

    std::vector<std::pair<uint64_t, size_t>> keep;
    for (size_t row = 0; row < ids.size(); ++row)
        if (std::binary_search(seeds.ids.begin(), seeds.ids.end(), ids[row]))
            keep.emplace_back(ids[row], row);
    std::sort(keep.begin(), keep.end());

    std::vector<ParticleRecord> out;
    out.reserve(keep.size());
    for (const auto& [id, row] : keep)
        out.push_back(record_at(frame, row, id));
    return out;
}

Partition assign_shards(const SeedSet& seeds, size_t worker_count) {
    const size_t n = seeds.ids.size();
    if (worker_count < 1)
        throw ConfigError("worker_count must be >= 1");
    if (worker_count > n)
        throw ConfigError("worker_count " + std::to_string(worker_count) +
                          " exceeds seed count " + std::to_string(n));
    Partition part;
    part.worker_count = worker_count;
    part.offsets.reserve(worker_count + 1);
    part.boundaries.reserve(worker_count + 1);
    const size_t base = n / worker_count;
    const size_t extra = n % worker_count;
    size_t pos = 0;
    for (size_t k = 0; k < worker_count; ++k) {
        part.offsets.push_back(pos);
        part.boundaries.push_back(seeds.ids[pos]);
        pos += base + (k < extra ? 1 : 0);
    }
    part.offsets.push_back(n);
    part.boundaries.push_back(seeds.ids.back() + 1);
    return part;
}

// ---------------------------------------------------------------------------
// TrajectoryBlock

TrajectoryBlock::TrajectoryBlock(size_t worker, std::vector<uint64_t> ids,
                                 std::vector<std::string> properties, double fill_value)
    : worker_(worker),
      ids_(std::move(ids)),
      properties_(std::move(properties)),
      fill_value_(fill_value),
      data_(properties_.size()),
      seen_absent_(ids_.size(), 0) {
    for (size_t i = 1; i < ids_.size(); ++i)
        if (ids_[i] <= ids_[i - 1])
            throw IntegrityError("trajectory block ids must be strictly increasing");
}

size_t TrajectoryBlock::property_index(std::string_view name) const {
    for (size_t p = 0; p < properties_.size(); ++p)
        if (properties_[p] == name)
            return p;
    throw ConfigError("trajectory block does not track property '" + std::string(name) +
                      "'");
}

// step-major while filling (step strides by row count), particle-major
// once finalized (row strides by step count)
size_t TrajectoryBlock::cell(size_t row, size_t step) const {
    return finalized_ ? row * times_.size() + step : step * ids_.size() + row;
}

void TrajectoryBlock::append_step(std::span<const ParticleRecord> records,
                                  uint64_t step_index, double time) {
    if (finalized_)
        throw ProtocolError("append_step on a finalized block");
    if (step_index != times_.size())
        throw ProtocolError("worker " + std::to_string(worker_) + ": expected step " +
                            std::to_string(times_.size()) + ", got " +
                            std::to_string(step_index));
    const size_t n = ids_.size();
    const size_t s = times_.size();
    presence_.resize((s + 1) * n, 0);
    for (auto& grid : data_)
        grid.resize((s + 1) * n, fill_value_);

    uint64_t prev_id = 0;
    bool first = true;
    for (const auto& rec : records) {
        if (!first && rec.id <= prev_id)
            throw IntegrityError("worker " + std::to_string(worker_) +
                                 ": shard records out of order at id " +
                                 std::to_string(rec.id));
        first = false;
        prev_id = rec.id;
        const auto it = std::lower_bound(ids_.begin(), ids_.end(), rec.id);
        if (it == ids_.end() || *it != rec.id)
            throw IntegrityError("worker " + std::to_string(worker_) + ": id " +
                                 std::to_string(rec.id) + " does not belong to this shard");
        const size_t row = static_cast<size_t>(it - ids_.begin());
        if (seen_absent_[row])
            throw IntegrityError("particle " + std::to_string(rec.id) +
                                 " reappeared at step " + std::to_string(step_index) +
                                 " after an absence");
        presence_[s * n + row] = 1;
        for (size_t p = 0; p < properties_.size(); ++p)
            data_[p][s * n + row] = property_value(rec, properties_[p]);
    }
    for (size_t row = 0; row < n; ++row)
        if (!presence_[s * n + row])
            seen_absent_[row] = 1;
    times_.push_back(time);
}

void TrajectoryBlock::finalize() {
    if (finalized_)
        throw ProtocolError("finalize called twice");
    const size_t n = ids_.size();
    const size_t steps = times_.size();
    const auto transpose = [&](auto& grid) {
        std::remove_reference_t<decltype(grid)> out(grid.size());
        for (size_t s = 0; s < steps; ++s)
            for (size_t row = 0; row < n; ++row)
                out[row * steps + s] = grid[s * n + row];
        grid = std::move(out);
    };
    for (auto& grid : data_)
        transpose(grid);
    transpose(presence_);
    finalized_ = true;
}

bool TrajectoryBlock::present(size_t row, size_t step) const {
    return presence_[cell(row, step)] != 0;
}

double TrajectoryBlock::value(std::string_view property, size_t row, size_t step) const {
    return data_[property_index(property)][cell(row, step)];
}

std::span<const double> TrajectoryBlock::series(std::string_view property,
                                                size_t row) const {
    if (!finalized_)
        throw ProtocolError("series needs a finalized block");
    const auto& grid = data_[property_index(property)];
    return {grid.data() + row * times_.size(), times_.size()};
}

std::vector<double> TrajectoryBlock::release_property(std::string_view name) {
    if (!finalized_)
        throw ProtocolError("release_property needs a finalized block");
    return std::move(data_[property_index(name)]);
}

std::vector<uint8_t> TrajectoryBlock::release_presence() {
    if (!finalized_)
        throw ProtocolError("release_presence needs a finalized block");
    return std::move(presence_);
}

// ---------------------------------------------------------------------------
// run_pipeline

namespace {

// Live particle-record count across the reader and workers. Trimmed
// records are released by workers, so the reader blocks on the ledger
// before materializing the next trim output.
class RetainedLedger {
public:
    void add_frame(uint64_t n) { add(frame_, n); }
    void drop_frame(uint64_t n) { sub(frame_, n); }
    void add_seeds(uint64_t n) { add(seeds_, n); }
    void drop_seeds(uint64_t n) { sub(seeds_, n); }
    void add_trimmed(uint64_t n) { add(trimmed_, n); }
    void drop_trimmed(uint64_t n) { sub(trimmed_, n); }

    // a failed worker can no longer drain, so the wait also ends on abort
    void mark_abort() {
        std::lock_guard lock(mutex_);
        aborted_ = true;
        drained_.notify_all();
    }

    void wait_trimmed_drained() {
        std::unique_lock lock(mutex_);
        drained_.wait(lock, [&] { return trimmed_ == 0 || aborted_; });
    }

    uint64_t peak() const {
        std::lock_guard lock(mutex_);
        return peak_;
    }

private:
    void add(uint64_t& slot, uint64_t n) {
        std::lock_guard lock(mutex_);
        slot += n;
        peak_ = std::max(peak_, frame_ + seeds_ + trimmed_);
    }
    void sub(uint64_t& slot, uint64_t n) {
        std::lock_guard lock(mutex_);
        slot -= n;
        if (trimmed_ == 0)
            drained_.notify_all();
    }

    mutable std::mutex mutex_;
    std::condition_variable drained_;
    uint64_t frame_ = 0;
    uint64_t seeds_ = 0;
    uint64_t trimmed_ = 0;
    uint64_t peak_ = 0;
    bool aborted_ = false;
};

using TrimmedPtr = std::shared_ptr<const std::vector<ParticleRecord>>;

struct WorkerTask {
    uint64_t step = 0;
    double time = 0.0;
    TrimmedPtr trimmed;
    size_t begin = 0;
    size_t end = 0;
};

// Single-slot handoff. The ledger gating keeps the slot free when the
// reader posts the next step; close() unblocks both sides and drops
// any undelivered task so its trimmed reference dies.
class Mailbox {
public:
    void post(WorkerTask task) {
        std::unique_lock lock(mutex_);
        empty_.wait(lock, [&] { return !task_.has_value() || closed_; });
        if (closed_)
            return;
        task_ = std::move(task);
        filled_.notify_one();
    }

    // nullopt means end of stream
    std::optional<WorkerTask> take() {
        std::unique_lock lock(mutex_);
        filled_.wait(lock, [&] { return task_.has_value() || closed_; });
        if (!task_)
            return std::nullopt;
        std::optional<WorkerTask> task = std::move(task_);
        task_.reset();
        empty_.notify_one();
        return task;
    }

    void close() {
        std::lock_guard lock(mutex_);
        closed_ = true;
        task_.reset();
        filled_.notify_all();
        empty_.notify_all();
    }

private:
    std::mutex mutex_;
    std::condition_variable filled_;
    std::condition_variable empty_;
    std::optional<WorkerTask> task_;
    bool closed_ = false;
};

struct WorkerFailure {
    std::mutex mutex;
    std::exception_ptr first;

    void store(std::exception_ptr e) {
        std::lock_guard lock(mutex);
        if (!first)
            first = e;
    }
    void rethrow_if_set() {
        std::lock_guard lock(mutex);
        if (first)
            std::rethrow_exception(first);
    }
};

void worker_main(TrajectoryBlock& block, Mailbox& mailbox, WorkerFailure& failure,
                 RetainedLedger& ledger) {
    while (auto task = mailbox.take()) {
        try {
            block.append_step({task->trimmed->data() + task->begin,
                               task->end - task->begin},
                              task->step, task->time);
        } catch (...) {
            failure.store(std::current_exception());
            ledger.mark_abort();
            return;
        }
    }
}

} // namespace

PipelineResult run_pipeline(StepReader& reader, const PipelineConfig& config) {
    auto read_frame = [&](StepFrame& frame) {
        const ReadStatus status = reader.next_step(frame, config.read_timeout_s);
        if (status == ReadStatus::timeout)
            throw ProtocolError("no frame arrived within " +
                                std::to_string(config.read_timeout_s) + " s");
        return status == ReadStatus::frame;
    };

    RetainedLedger ledger;
    PipelineStats stats;

    StepFrame frame;
    if (!read_frame(frame))
        throw ProtocolError("stream ended before the step-0 frame");
    if (frame.step != 0)
        throw IntegrityError("expected step 0 first, got step " +
                             std::to_string(frame.step));
    const Species species = frame.species;
    ledger.add_frame(frame.record_count);
    stats.frames_consumed = 1;
    stats.first_frame_records = frame.record_count;
    stats.last_frame_records = frame.record_count;
    stats.max_frame_records = frame.record_count;

    SeedSet seeds = build_seed_set(frame, config.threshold);
    ledger.add_seeds(seeds.ids.size());
    stats.seed_count = seeds.ids.size();
    stats.records_kept_total = seeds.ids.size();
    stats.records_dropped_total = frame.record_count - seeds.ids.size();
    const double time0 = frame.time;
    ledger.drop_frame(frame.record_count);
    frame = StepFrame{};

    const size_t workers = config.worker_count;
    Partition part = assign_shards(seeds, workers);

    std::vector<TrajectoryBlock> blocks;
    blocks.reserve(workers);
    for (size_t k = 0; k < workers; ++k) {
        std::vector<uint64_t> shard_ids(seeds.ids.begin() + part.offsets[k],
                                        seeds.ids.begin() + part.offsets[k + 1]);
        blocks.emplace_back(k, std::move(shard_ids), config.properties,
                            config.fill_value);
        blocks[k].append_step({seeds.initial.data() + part.offsets[k],
                               part.offsets[k + 1] - part.offsets[k]},
                              0, time0);
    }
    ledger.drop_seeds(seeds.initial.size());
    seeds.initial.clear();
    seeds.initial.shrink_to_fit();

    std::vector<Mailbox> mailboxes(workers);
    WorkerFailure failure;
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (size_t k = 0; k < workers; ++k)
        threads.emplace_back(worker_main, std::ref(blocks[k]), std::ref(mailboxes[k]),
                             std::ref(failure), std::ref(ledger));
    const auto shutdown = [&] {
        for (auto& mb : mailboxes)
            mb.close();
        for (auto& t : threads)
            t.join();
    };

    uint64_t expected_step = 1;
    try {
        // workers chew on step N while this loop fetches step N+1
        while (read_frame(frame)) {
            if (frame.step != expected_step)
                throw IntegrityError("step gap: expected " +
                                     std::to_string(expected_step) + ", got " +
                                     std::to_string(frame.step));
            ++expected_step;
            ++stats.frames_consumed;
            stats.last_frame_records = frame.record_count;
            stats.max_frame_records = std::max(stats.max_frame_records,
                                               frame.record_count);
            ledger.add_frame(frame.record_count);

            // previous trimmed batch must be consumed before the next
            // one materializes, or retention would double-count seeds
            ledger.wait_trimmed_drained();
            failure.rethrow_if_set();

            std::vector<ParticleRecord> trimmed = trim(frame, seeds);
            stats.records_kept_total += trimmed.size();
            stats.records_dropped_total += frame.record_count - trimmed.size();
            ledger.add_trimmed(trimmed.size());
            ledger.drop_frame(frame.record_count);
            const uint64_t step = frame.step;
            const double time = frame.time;
            frame = StepFrame{};

            const uint64_t live = trimmed.size();
            TrimmedPtr shared(new std::vector<ParticleRecord>(std::move(trimmed)),
                              [&ledger, live](const std::vector<ParticleRecord>* p) {
                                  delete p;
                                  ledger.drop_trimmed(live);
                              });
            for (size_t k = 0; k < workers; ++k) {
                const auto lo = std::lower_bound(
                    shared->begin(), shared->end(), part.boundaries[k],
                    [](const ParticleRecord& r, uint64_t id) { return r.id < id; });
                const auto hi = std::lower_bound(
                    shared->begin(), shared->end(), part.boundaries[k + 1],
                    [](const ParticleRecord& r, uint64_t id) { return r.id < id; });
                mailboxes[k].post(WorkerTask{
                    .step = step,
                    .time = time,
                    .trimmed = shared,
                    .begin = static_cast<size_t>(lo - shared->begin()),
                    .end = static_cast<size_t>(hi - shared->begin()),
                });
            }
            shared.reset();
        }
        ledger.wait_trimmed_drained();
    } catch (...) {
        shutdown();
        throw;
    }
    shutdown();
    failure.rethrow_if_set();

    for (auto& block : blocks)
        block.finalize();

    stats.peak_retained_records = ledger.peak();
    PipelineResult result;
    result.species = species;
    result.blocks = std::move(blocks);
    result.stats = stats;
    return result;
}

} // namespace sepstream
