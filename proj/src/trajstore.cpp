#include "sepstream/trajstore.hpp"

#include <fstream>
#include <limits>
#include <string>
#include <utility>

#include <json.hpp>

#include "sepstream/errors.hpp"
#include "wire.hpp"

namespace sepstream {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'R', 'J'};

uint64_t presence_bytes(uint64_t particle_count, uint64_t step_count) {
    return (particle_count * step_count + 7) / 8;
}

void check_increasing(const std::vector<uint64_t>& ids, const std::string& what) {
    for (size_t i = 1; i < ids.size(); ++i)
        if (ids[i] <= ids[i - 1])
            throw IntegrityError(what + ": ids not strictly increasing at " +
                                 std::to_string(ids[i]));
}

void write_file_atomic(const std::filesystem::path& target,
                       const void* bytes, size_t count) {
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(count));
        if (!out)
            throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec)
        throw IoError("cannot publish " + target.string() + ": " + ec.message());
}

} // namespace

bool TrajectoryDataset::present(size_t row, size_t step) const {
    const size_t bit = row * step_count() + step;
    return (presence[bit >> 3] >> (bit & 7)) & 1;
}

size_t TrajectoryDataset::property_index(std::string_view name) const {
    for (size_t p = 0; p < properties.size(); ++p)
        if (properties[p] == name)
            return p;
    throw ConfigError("trajectory dataset has no property '" + std::string(name) + "'");
}

std::span<const double> TrajectoryDataset::series(std::string_view property,
                                                  size_t row) const {
    const auto& grid = data[property_index(property)];
    return {grid.data() + row * step_count(), step_count()};
}

TrajectoryDataset merge_blocks(std::vector<TrajectoryBlock>&& blocks, Species species) {
    if (blocks.empty())
        throw IntegrityError("merge needs at least one block");
    for (const auto& b : blocks)
        if (!b.finalized())
            throw ProtocolError("merge needs finalized blocks");
    const std::vector<double>& times = blocks.front().times();
    const std::vector<std::string>& props = blocks.front().properties();
    for (const auto& b : blocks) {
        if (b.times() != times)
            throw IntegrityError("blocks disagree on step count or times");
        if (b.properties() != props)
            throw IntegrityError("blocks disagree on property lists");
    }

    TrajectoryDataset ds;
    ds.species = species;
    ds.times = times;
    ds.dt = times.size() >= 2 ? times[1] - times[0] : 0.0;
    ds.properties = props;
    size_t total_rows = 0;
    for (const auto& b : blocks)
        total_rows += b.ids().size();
    ds.ids.reserve(total_rows);
    for (const auto& b : blocks)
        ds.ids.insert(ds.ids.end(), b.ids().begin(), b.ids().end());
    check_increasing(ds.ids, "merge");

    const size_t S = times.size();
    ds.presence.assign(presence_bytes(total_rows, S), 0);
    size_t row0 = 0;
    for (auto& b : blocks) {
        const size_t rows = b.ids().size();
        const std::vector<uint8_t> pres = b.release_presence();
        for (size_t r = 0; r < rows; ++r)
            for (size_t s = 0; s < S; ++s)
                if (pres[r * S + s]) {
                    const size_t bit = (row0 + r) * S + s;
                    ds.presence[bit >> 3] |= uint8_t(1u << (bit & 7));
                }
        row0 += rows;
    }

    ds.data.resize(props.size());
    for (size_t p = 0; p < props.size(); ++p) {
        ds.data[p].resize(total_rows * S);
        row0 = 0;
        for (auto& b : blocks) {
            const size_t rows = b.ids().size();
            // grid frees on scope exit, so at most one extra copy of
            // one block's property is alive
            const std::vector<double> grid = b.release_property(props[p]);
            std::copy(grid.begin(), grid.end(), ds.data[p].begin() + row0 * S);
            row0 += rows;
        }
    }
    return ds;
}

uint64_t trajectory_file_size(uint64_t particle_count, uint64_t step_count,
                              std::span<const std::string> properties) {
    uint64_t n = 4 + 2 + 1 + 8 + 8 + 8 + 2;
    for (const auto& name : properties)
        n += 2 + name.size() + 1 + 8;
    n += particle_count * 8;
    n += step_count * 8;
    n += presence_bytes(particle_count, step_count);
    n += properties.size() * particle_count * step_count * 8;
    return n;
}

void write_trajectory_file(const TrajectoryDataset& dataset,
                           const std::filesystem::path& path,
                           const std::string& config_digest) {
    const uint64_t P = dataset.ids.size();
    const uint64_t S = dataset.times.size();
    if (dataset.data.size() != dataset.properties.size())
        throw IntegrityError("dataset property arrays do not match the property list");
    for (const auto& grid : dataset.data)
        if (grid.size() != P * S)
            throw IntegrityError("dataset property grid has the wrong shape");
    if (dataset.presence.size() != presence_bytes(P, S))
        throw IntegrityError("dataset presence bitmap has the wrong size");
    check_increasing(dataset.ids, "write " + path.string());

    std::vector<std::byte> out;
    out.reserve(trajectory_file_size(P, S, dataset.properties));
    out.insert(out.end(), reinterpret_cast<const std::byte*>(kMagic),
               reinterpret_cast<const std::byte*>(kMagic) + 4);
    wire::store_u16(out, kTrajectoryFormatVersion);
    out.push_back(std::byte(static_cast<uint8_t>(dataset.species)));
    wire::store_u64(out, P);
    wire::store_u64(out, S);
    wire::store_f64(out, dataset.dt);
    wire::store_u16(out, static_cast<uint16_t>(dataset.properties.size()));
    for (const auto& name : dataset.properties) {
        wire::store_u16(out, static_cast<uint16_t>(name.size()));
        out.insert(out.end(), reinterpret_cast<const std::byte*>(name.data()),
                   reinterpret_cast<const std::byte*>(name.data()) + name.size());
        out.push_back(std::byte(1));  // f64
        wire::store_u64(out, P * S * 8);
    }
    for (uint64_t id : dataset.ids)
        wire::store_u64(out, id);
    for (double t : dataset.times)
        wire::store_f64(out, t);
    out.insert(out.end(), reinterpret_cast<const std::byte*>(dataset.presence.data()),
               reinterpret_cast<const std::byte*>(dataset.presence.data()) +
                   dataset.presence.size());
    for (const auto& grid : dataset.data)
        for (double v : grid)
            wire::store_f64(out, v);
    write_file_atomic(path, out.data(), out.size());

    nlohmann::json manifest;
    manifest["format"] = "STRJ";
    manifest["version"] = kTrajectoryFormatVersion;
    manifest["species"] = to_string(dataset.species);
    manifest["particle_count"] = P;
    manifest["step_count"] = S;
    manifest["dt"] = dataset.dt;
    manifest["properties"] = dataset.properties;
    manifest["file_bytes"] = out.size();
    manifest["config_digest"] = config_digest;
    const std::string text = manifest.dump(2) + "\n";
    write_file_atomic(path.string() + ".manifest.json", text.data(), text.size());
}

TrajectoryDataset read_trajectory_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in)
        throw IoError("cannot open trajectory file " + path.string());
    std::vector<std::byte> bytes(static_cast<size_t>(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!in)
        throw IoError("short read from " + path.string());

    wire::ByteCursor cur(bytes, path.string() + ": trajectory file truncated");
    char magic[4];
    cur.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(path.string() + ": not a trajectory file (bad magic)");
    const uint16_t version = cur.u16();
    if (version != kTrajectoryFormatVersion)
        throw FormatError(path.string() + ": unsupported format version " +
                          std::to_string(version));
    const uint8_t species = cur.u8();
    if (species > 1)
        throw FormatError(path.string() + ": bad species code " + std::to_string(species));

    TrajectoryDataset ds;
    ds.species = static_cast<Species>(species);
    const uint64_t P = cur.u64();
    const uint64_t S = cur.u64();
    if (P > (uint64_t(1) << 40) || S > (uint64_t(1) << 32))
        throw IntegrityError(path.string() + ": implausible header counts");
    ds.dt = cur.f64();
    const uint16_t property_count = cur.u16();
    ds.properties.reserve(property_count);
    for (uint16_t p = 0; p < property_count; ++p) {
        const std::string name = cur.str(cur.u16());
        const uint8_t type = cur.u8();
        if (type != 1)
            throw IntegrityError(path.string() + ": property '" + name +
                                 "' is not f64");
        if (cur.u64() != P * S * 8)
            throw IntegrityError(path.string() + ": property '" + name +
                                 "' byte length disagrees with header counts");
        ds.properties.push_back(name);
    }
    const uint64_t body = P * 8 + S * 8 + presence_bytes(P, S) +
                          property_count * P * S * 8;
    if (cur.remaining() != body)
        throw IntegrityError(path.string() + ": file length " +
                             std::to_string(bytes.size()) + " does not match header (" +
                             std::to_string(bytes.size() - cur.remaining() + body) +
                             " expected)");

    ds.ids.resize(P);
    for (auto& id : ds.ids)
        id = cur.u64();
    check_increasing(ds.ids, "read " + path.string());
    ds.times.resize(S);
    for (auto& t : ds.times)
        t = cur.f64();
    ds.presence.resize(presence_bytes(P, S));
    cur.raw(ds.presence.data(), ds.presence.size());
    ds.data.resize(property_count);
    for (auto& grid : ds.data) {
        grid.resize(P * S);
        for (auto& v : grid)
            v = cur.f64();
    }
    return ds;
}

} // namespace sepstream
