#include "sepstream/staging.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <deque>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>

#include "sepstream/errors.hpp"
#include "wire.hpp"

namespace sepstream {

namespace {

using wire::store_f64;
using wire::store_u16;
using wire::store_u64;

constexpr char kMagic[4] = {'S', 'S', 'F', '1'};
constexpr size_t kElementSize = 8;  // u64 and f64 alike
constexpr const char* kEndMarker = "stream.end";

} // namespace

PropertyColumn PropertyColumn::of_u64(std::string name, std::vector<uint64_t> values) {
    PropertyColumn c;
    c.name = std::move(name);
    c.type = ElementType::u64;
    c.u64 = std::move(values);
    return c;
}

PropertyColumn PropertyColumn::of_f64(std::string name, std::vector<double> values) {
    PropertyColumn c;
    c.name = std::move(name);
    c.type = ElementType::f64;
    c.f64 = std::move(values);
    return c;
}

const PropertyColumn* StepFrame::find(std::string_view name) const {
    for (const auto& c : columns)
        if (c.name == name)
            return &c;
    return nullptr;
}

const PropertyColumn& StepFrame::require(std::string_view name) const {
    if (const PropertyColumn* c = find(name))
        return *c;
    throw IntegrityError("step " + std::to_string(step) + ": frame lacks property '" +
                         std::string(name) + "'");
}

size_t encoded_frame_size(const StepFrame& frame) {
    size_t n = 4 + 8 + 8 + 1 + 8 + 2;
    for (const auto& c : frame.columns)
        n += 2 + c.name.size() + 1 + 8 + c.size() * kElementSize;
    return n;
}

std::vector<std::byte> encode_frame(const StepFrame& frame) {
    std::vector<std::byte> out;
    out.reserve(encoded_frame_size(frame));
    out.insert(out.end(), reinterpret_cast<const std::byte*>(kMagic),
               reinterpret_cast<const std::byte*>(kMagic) + 4);
    store_u64(out, frame.step);
    store_f64(out, frame.time);
    out.push_back(std::byte(static_cast<uint8_t>(frame.species)));
    store_u64(out, frame.record_count);
    store_u16(out, static_cast<uint16_t>(frame.columns.size()));
    for (const auto& c : frame.columns) {
        store_u16(out, static_cast<uint16_t>(c.name.size()));
        out.insert(out.end(), reinterpret_cast<const std::byte*>(c.name.data()),
                   reinterpret_cast<const std::byte*>(c.name.data()) + c.name.size());
        out.push_back(std::byte(static_cast<uint8_t>(c.type)));
        store_u64(out, c.size() * kElementSize);
    }
    for (const auto& c : frame.columns) {
        if (c.type == ElementType::u64) {
            for (uint64_t v : c.u64)
                store_u64(out, v);
        } else {
            for (double v : c.f64)
                store_f64(out, v);
        }
    }
    return out;
}

StepFrame decode_frame(std::span<const std::byte> bytes) {
    wire::ByteCursor cur(bytes, "frame payload is shorter than its directory claims");
    char magic[4];
    cur.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw IntegrityError("bad frame magic");

    StepFrame frame;
    frame.step = cur.u64();
    frame.time = cur.f64();
    const uint8_t species = cur.u8();
    if (species > 1)
        throw IntegrityError("bad species code " + std::to_string(species));
    frame.species = static_cast<Species>(species);
    frame.record_count = cur.u64();
    const uint16_t property_count = cur.u16();

    std::vector<uint64_t> byte_lengths;
    frame.columns.reserve(property_count);
    byte_lengths.reserve(property_count);
    for (uint16_t i = 0; i < property_count; ++i) {
        PropertyColumn c;
        c.name = cur.str(cur.u16());
        const uint8_t type = cur.u8();
        if (type > 1)
            throw IntegrityError("bad element type code " + std::to_string(type));
        c.type = static_cast<ElementType>(type);
        const uint64_t byte_len = cur.u64();
        if (byte_len != frame.record_count * kElementSize)
            throw IntegrityError("property '" + c.name +
                                 "' byte length does not match record count");
        byte_lengths.push_back(byte_len);
        frame.columns.push_back(std::move(c));
    }
    for (uint16_t i = 0; i < property_count; ++i) {
        PropertyColumn& c = frame.columns[i];
        const size_t n = byte_lengths[i] / kElementSize;
        if (c.type == ElementType::u64) {
            c.u64.resize(n);
            for (size_t k = 0; k < n; ++k)
                c.u64[k] = cur.u64();
        } else {
            c.f64.resize(n);
            for (size_t k = 0; k < n; ++k)
                c.f64[k] = cur.f64();
        }
    }
    if (cur.remaining() != 0)
        throw IntegrityError("frame has trailing bytes");
    return frame;
}

// ---------------------------------------------------------------------------
// writer protocol

void StepWriter::check_open(const char* op) const {
    if (closed_)
        throw ProtocolError(std::string(op) + " on a closed writer");
}

void StepWriter::begin_step(uint64_t step, double time, Species species) {
    check_open("begin_step");
    if (step_open_)
        throw ProtocolError("begin_step while step " + std::to_string(pending_.step) +
                            " is still open");
    if (static_cast<int64_t>(step) <= last_step_)
        throw ProtocolError("step indices must strictly increase (got " +
                            std::to_string(step) + " after " + std::to_string(last_step_) + ")");
    pending_ = StepFrame{};
    pending_.step = step;
    pending_.time = time;
    pending_.species = species;
    step_open_ = true;
}

void StepWriter::put_u64(std::string_view name, std::span<const uint64_t> values) {
    check_open("put");
    if (!step_open_)
        throw ProtocolError("put without begin_step");
    if (pending_.find(name))
        throw IntegrityError("duplicate property '" + std::string(name) + "' in one step");
    pending_.columns.push_back(
        PropertyColumn::of_u64(std::string(name), {values.begin(), values.end()}));
}

void StepWriter::put_f64(std::string_view name, std::span<const double> values) {
    check_open("put");
    if (!step_open_)
        throw ProtocolError("put without begin_step");
    if (pending_.find(name))
        throw IntegrityError("duplicate property '" + std::string(name) + "' in one step");
    pending_.columns.push_back(
        PropertyColumn::of_f64(std::string(name), {values.begin(), values.end()}));
}

void StepWriter::end_step() {
    check_open("end_step");
    if (!step_open_)
        throw ProtocolError("end_step without begin_step");
    if (!pending_.columns.empty()) {
        const size_t n = pending_.columns.front().size();
        for (const auto& c : pending_.columns)
            if (c.size() != n)
                throw IntegrityError("step " + std::to_string(pending_.step) +
                                     ": property arrays have mismatched lengths");
        pending_.record_count = n;
    } else {
        pending_.record_count = 0;
    }
    last_step_ = static_cast<int64_t>(pending_.step);
    step_open_ = false;
    ++frames_published_;
    publish(std::move(pending_));
    pending_ = StepFrame{};
}

void StepWriter::close() {
    if (closed_)
        return;
    if (step_open_)
        throw ProtocolError("close with step " + std::to_string(pending_.step) + " still open");
    closed_ = true;
    finish();
}

// ---------------------------------------------------------------------------
// in-process mode

class StageChannel {
public:
    explicit StageChannel(size_t capacity) : capacity_(capacity) {}

    void push(StepFrame&& frame) {
        std::unique_lock lock(mutex_);
        if (frames_.size() >= capacity_ && !closed_)
            ++stats_.blocked_pushes;
        writable_.wait(lock, [&] { return frames_.size() < capacity_ || closed_; });
        if (closed_)
            return;  // reader gave up; drop so the producer can wind down
        frames_.push_back(std::move(frame));
        stats_.peak_buffered = std::max(stats_.peak_buffered, frames_.size());
        readable_.notify_one();
    }

    void close() {
        std::lock_guard lock(mutex_);
        closed_ = true;
        readable_.notify_all();
        writable_.notify_all();
    }

    ReadStatus pop(StepFrame& out, double timeout_s) {
        std::unique_lock lock(mutex_);
        const auto deadline = std::chrono::steady_clock::now() +
                              std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                  std::chrono::duration<double>(timeout_s));
        if (!readable_.wait_until(lock, deadline,
                                  [&] { return !frames_.empty() || closed_; }))
            return ReadStatus::timeout;
        if (frames_.empty())
            return ReadStatus::end_of_stream;
        out = std::move(frames_.front());
        frames_.pop_front();
        writable_.notify_one();
        return ReadStatus::frame;
    }

    ChannelStats stats() const {
        std::lock_guard lock(mutex_);
        return stats_;
    }

private:
    mutable std::mutex mutex_;
    std::condition_variable readable_;
    std::condition_variable writable_;
    std::deque<StepFrame> frames_;
    size_t capacity_;
    bool closed_ = false;
    ChannelStats stats_;
};

ChannelStats channel_stats(const StageChannel& channel) {
    return channel.stats();
}

void close_channel(StageChannel& channel) {
    channel.close();
}

namespace {

class InProcessWriter final : public StepWriter {
public:
    explicit InProcessWriter(std::shared_ptr<StageChannel> channel)
        : channel_(std::move(channel)) {}
    ~InProcessWriter() override {
        try {
            close();
        } catch (...) {
        }
    }

protected:
    void publish(StepFrame&& frame) override { channel_->push(std::move(frame)); }
    void finish() override { channel_->close(); }

private:
    std::shared_ptr<StageChannel> channel_;
};

class InProcessReader final : public StepReader {
public:
    explicit InProcessReader(std::shared_ptr<StageChannel> channel)
        : channel_(std::move(channel)) {}

    ReadStatus next_step(StepFrame& out, double timeout_s) override {
        return channel_->pop(out, timeout_s);
    }

private:
    std::shared_ptr<StageChannel> channel_;
};

// ---------------------------------------------------------------------------
// file mode: one step_%08d.ssf per step, temp file + rename on end_step

std::string frame_file_name(uint64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "step_%08llu.ssf",
                  static_cast<unsigned long long>(step));
    return buf;
}

std::optional<uint64_t> parse_frame_file_name(const std::string& name) {
    if (name.size() != 17 || name.rfind("step_", 0) != 0 ||
        name.substr(13) != ".ssf")
        return std::nullopt;
    uint64_t step = 0;
    for (size_t i = 5; i < 13; ++i) {
        const char c = name[i];
        if (c < '0' || c > '9')
            return std::nullopt;
        step = step * 10 + static_cast<uint64_t>(c - '0');
    }
    return step;
}

class FileWriter final : public StepWriter {
public:
    explicit FileWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec)
            throw IoError("cannot create staging directory " + dir_.string() + ": " +
                          ec.message());
    }
    ~FileWriter() override {
        try {
            close();
        } catch (...) {
        }
    }

protected:
    void publish(StepFrame&& frame) override {
        const auto bytes = encode_frame(frame);
        write_atomic(dir_ / frame_file_name(frame.step),
                     std::span<const std::byte>(bytes));
    }

    void finish() override {
        write_atomic(dir_ / kEndMarker, std::span<const std::byte>());
    }

private:
    void write_atomic(const std::filesystem::path& target,
                      std::span<const std::byte> bytes) {
        const std::filesystem::path tmp = target.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out)
                throw IoError("cannot open " + tmp.string() + " for writing");
            out.write(reinterpret_cast<const char*>(bytes.data()),
                      static_cast<std::streamsize>(bytes.size()));
            if (!out)
                throw IoError("short write to " + tmp.string());
        }
        std::error_code ec;
        std::filesystem::rename(tmp, target, ec);
        if (ec)
            throw IoError("cannot publish " + target.string() + ": " + ec.message());
    }

    std::filesystem::path dir_;
};

class FileReader final : public StepReader {
public:
    explicit FileReader(std::filesystem::path dir) : dir_(std::move(dir)) {}

    ReadStatus next_step(StepFrame& out, double timeout_s) override {
        const auto deadline =
            std::chrono::steady_clock::now() +
            std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                std::chrono::duration<double>(timeout_s));
        for (;;) {
            // end marker first, so a scan after it finds any frame that
            // was published before the stream closed
            const bool ended = std::filesystem::exists(dir_ / kEndMarker);
            if (auto step = scan_next())
                return load(*step, out);
            if (ended)
                return ReadStatus::end_of_stream;
            if (std::chrono::steady_clock::now() >= deadline)
                return ReadStatus::timeout;
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
    }

private:
    std::optional<uint64_t> scan_next() const {
        std::optional<uint64_t> best;
        std::error_code ec;
        for (const auto& entry : std::filesystem::directory_iterator(dir_, ec)) {
            const auto step = parse_frame_file_name(entry.path().filename().string());
            if (!step)
                continue;
            if (static_cast<int64_t>(*step) <= last_step_)
                continue;
            if (!best || *step < *best)
                best = step;
        }
        return best;
    }

    ReadStatus load(uint64_t step, StepFrame& out) {
        const auto path = dir_ / frame_file_name(step);
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in)
            throw IoError("cannot open frame file " + path.string());
        std::vector<std::byte> bytes(static_cast<size_t>(in.tellg()));
        in.seekg(0);
        in.read(reinterpret_cast<char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
        if (!in)
            throw IoError("short read from " + path.string());
        try {
            out = decode_frame(bytes);
        } catch (const IntegrityError& e) {
            throw IntegrityError("step " + std::to_string(step) + ": " + e.what());
        }
        if (out.step != step)
            throw IntegrityError("step " + std::to_string(step) +
                                 ": frame header step field disagrees with file name");
        last_step_ = static_cast<int64_t>(step);
        return ReadStatus::frame;
    }

    std::filesystem::path dir_;
    int64_t last_step_ = -1;
};

} // namespace

std::unique_ptr<StepWriter> make_file_writer(const std::filesystem::path& dir) {
    return std::make_unique<FileWriter>(dir);
}

std::unique_ptr<StepReader> make_file_reader(const std::filesystem::path& dir) {
    return std::make_unique<FileReader>(dir);
}

StagePair open_endpoint(const StageEndpoint& endpoint) {
    if (endpoint.capacity < 1)
        throw ConfigError("staging: capacity must be >= 1");
    StagePair pair;
    if (endpoint.mode == StageEndpoint::Mode::in_process) {
        pair.channel = std::make_shared<StageChannel>(endpoint.capacity);
        pair.writer = std::make_unique<InProcessWriter>(pair.channel);
        pair.reader = std::make_unique<InProcessReader>(pair.channel);
    } else {
        if (endpoint.path.empty())
            throw ConfigError("staging: file mode requires a directory path");
        pair.writer = make_file_writer(endpoint.path);
        pair.reader = make_file_reader(endpoint.path);
    }
    return pair;
}

} // namespace sepstream
