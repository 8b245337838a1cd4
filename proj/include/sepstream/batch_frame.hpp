#pragma once

#include <atomic>
#include <span>
#include <string_view>

#include "sepstream/particle.hpp"
#include "sepstream/staging.hpp"
#include "sepstream/synth_source.hpp"

namespace sepstream {

// Conversions between in-memory step batches and wire frames. The id
// column is mandatory; any other property may be left out of a frame,
// in which case records decoded from it carry the field's default.

StepFrame to_frame(const StepBatch& batch,
                   std::span<const std::string_view> props = kAllProperties);

void write_batch(StepWriter& writer, const StepBatch& batch,
                 std::span<const std::string_view> props = kAllProperties);

StepBatch batch_from_frame(const StepFrame& frame);

// Drives a source to completion: emits the step-0 population and every
// subsequent batch through the writer, then closes it. A set stop flag
// ends the stream early (the writer is still closed cleanly). Returns
// the number of frames published.
uint64_t run_source(SynthSource& source, StepWriter& writer,
                    std::span<const std::string_view> props = kAllProperties,
                    const std::atomic<bool>* stop = nullptr);

} // namespace sepstream
