#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sepstream/particle.hpp"

namespace sepstream {

// Step-framed transport between one producer and one consumer,
// mirroring the step contract of a staging I/O library in two
// interchangeable modes: an in-process bounded channel and one frame
// file per step in a directory.
//
// Frame wire format (all integers little-endian):
//   magic            4 bytes "SSF1"
//   step             u64
//   time             f64
//   species          u8 (0 electron, 1 ion)
//   record_count     u64
//   property_count   u16
//   directory        per property:
//     name_len       u16
//     name           name_len bytes
//     element_type   u8 (0 u64, 1 f64)
//     byte_length    u64 (== record_count * 8)
//   payload          per property, contiguous little-endian array,
//                    directory order

enum class ElementType : uint8_t { u64 = 0, f64 = 1 };

struct PropertyColumn {
    std::string name;
    ElementType type = ElementType::f64;
    std::vector<uint64_t> u64;  // used when type == u64
    std::vector<double> f64;    // used when type == f64

    size_t size() const {
        return type == ElementType::u64 ? u64.size() : f64.size();
    }
    static PropertyColumn of_u64(std::string name, std::vector<uint64_t> values);
    static PropertyColumn of_f64(std::string name, std::vector<double> values);
};

struct StepFrame {
    uint64_t step = 0;
    double time = 0.0;
    Species species = Species::electron;
    uint64_t record_count = 0;
    std::vector<PropertyColumn> columns;

    const PropertyColumn* find(std::string_view name) const;
    // throws IntegrityError when the column is missing
    const PropertyColumn& require(std::string_view name) const;
};

// Frame codec. decode_frame validates magic, bounds, type codes and
// exact encoded length, and throws IntegrityError naming the problem.
std::vector<std::byte> encode_frame(const StepFrame& frame);
StepFrame decode_frame(std::span<const std::byte> bytes);
size_t encoded_frame_size(const StepFrame& frame);

struct StageEndpoint {
    enum class Mode { in_process, file };
    Mode mode = Mode::in_process;
    size_t capacity = 4;          // in-process: max frames buffered
    std::filesystem::path path;   // file mode: frame directory
};

// Producer side. One step at a time: begin_step, put arrays, end_step.
// The frame becomes visible to the reader atomically on end_step;
// partially written steps never surface. Step indices must strictly
// increase within a stream.
class StepWriter {
public:
    virtual ~StepWriter() = default;

    void begin_step(uint64_t step, double time, Species species);
    void put_u64(std::string_view name, std::span<const uint64_t> values);
    void put_f64(std::string_view name, std::span<const double> values);
    void end_step();

    // Ends the stream; the reader observes end-of-stream afterwards.
    // Idempotent. Throws ProtocolError when a step is still open.
    void close();

    uint64_t frames_published() const { return frames_published_; }

protected:
    virtual void publish(StepFrame&& frame) = 0;
    virtual void finish() = 0;

private:
    void check_open(const char* op) const;

    bool step_open_ = false;
    bool closed_ = false;
    int64_t last_step_ = -1;
    uint64_t frames_published_ = 0;
    StepFrame pending_;
};

enum class ReadStatus { frame, end_of_stream, timeout };

// Consumer side: frames exactly once each, in step order.
class StepReader {
public:
    virtual ~StepReader() = default;
    virtual ReadStatus next_step(StepFrame& out, double timeout_s) = 0;
};

// Instrumentation counters for the in-process channel.
struct ChannelStats {
    size_t peak_buffered = 0;
    uint64_t blocked_pushes = 0;  // end_step calls that had to wait for space
};

class StageChannel;  // internal to the in-process mode

struct StagePair {
    std::unique_ptr<StepWriter> writer;
    std::unique_ptr<StepReader> reader;
    // non-null for in-process endpoints; exposes buffering counters
    std::shared_ptr<StageChannel> channel;
};

ChannelStats channel_stats(const StageChannel& channel);

// Consumer-side teardown: unblocks a producer waiting for space and
// makes further pushes no-ops, so an aborted reader never strands the
// writer. The writer's own close() uses the same path.
void close_channel(StageChannel& channel);

// Opens both ends of an endpoint. In-process endpoints share a bounded
// channel; file endpoints create/scan one file per step named
// step_%08d.ssf under endpoint.path.
StagePair open_endpoint(const StageEndpoint& endpoint);

std::unique_ptr<StepWriter> make_file_writer(const std::filesystem::path& dir);
std::unique_ptr<StepReader> make_file_reader(const std::filesystem::path& dir);

} // namespace sepstream
