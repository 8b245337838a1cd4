#include "sepstream/batch_frame.hpp"

#include <string>

#include "sepstream/errors.hpp"

namespace sepstream {

StepFrame to_frame(const StepBatch& batch, std::span<const std::string_view> props) {
    StepFrame frame;
    frame.step = batch.step;
    frame.time = batch.time;
    frame.species = batch.species;
    frame.record_count = batch.records.size();
    frame.columns.reserve(props.size());
    for (std::string_view name : props) {
        if (name == "id") {
            std::vector<uint64_t> ids;
            ids.reserve(batch.records.size());
            for (const auto& rec : batch.records)
                ids.push_back(rec.id);
            frame.columns.push_back(PropertyColumn::of_u64("id", std::move(ids)));
        } else {
            std::vector<double> values;
            values.reserve(batch.records.size());
            for (const auto& rec : batch.records)
                values.push_back(property_value(rec, name));
            frame.columns.push_back(
                PropertyColumn::of_f64(std::string(name), std::move(values)));
        }
    }
    return frame;
}

void write_batch(StepWriter& writer, const StepBatch& batch,
                 std::span<const std::string_view> props) {
    writer.begin_step(batch.step, batch.time, batch.species);
    for (std::string_view name : props) {
        if (name == "id") {
            std::vector<uint64_t> ids;
            ids.reserve(batch.records.size());
            for (const auto& rec : batch.records)
                ids.push_back(rec.id);
            writer.put_u64("id", ids);
        } else {
            std::vector<double> values;
            values.reserve(batch.records.size());
            for (const auto& rec : batch.records)
                values.push_back(property_value(rec, name));
            writer.put_f64(name, values);
        }
    }
    writer.end_step();
}

StepBatch batch_from_frame(const StepFrame& frame) {
    StepBatch batch;
    batch.step = frame.step;
    batch.time = frame.time;
    batch.species = frame.species;

    const PropertyColumn& ids = frame.require("id");
    if (ids.type != ElementType::u64)
        throw IntegrityError("step " + std::to_string(frame.step) +
                             ": id column is not u64");
    batch.records.resize(ids.u64.size());
    for (size_t i = 0; i < ids.u64.size(); ++i)
        batch.records[i].id = ids.u64[i];

    for (const auto& c : frame.columns) {
        if (c.name == "id")
            continue;
        if (!is_known_property(c.name))
            continue;  // extra columns pass through unread
        if (c.type != ElementType::f64)
            throw IntegrityError("step " + std::to_string(frame.step) + ": column '" +
                                 c.name + "' is not f64");
        for (size_t i = 0; i < c.f64.size(); ++i)
            set_property(batch.records[i], c.name, c.f64[i]);
    }
    return batch;
}

uint64_t run_source(SynthSource& source, StepWriter& writer,
                    std::span<const std::string_view> props,
                    const std::atomic<bool>* stop) {
    StepBatch batch = source.init_population();
    for (;;) {
        if (stop && stop->load(std::memory_order_relaxed))
            break;
        write_batch(writer, batch, props);
        if (source.done(batch))
            break;
        batch = source.advance(batch);
    }
    const uint64_t published = writer.frames_published();
    writer.close();
    return published;
}

} // namespace sepstream
