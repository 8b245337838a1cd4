#include "sepstream/runner.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "sepstream/batch_frame.hpp"
#include "sepstream/diffusion.hpp"
#include "sepstream/errors.hpp"
#include "sepstream/export.hpp"
#include "sepstream/log.hpp"
#include "sepstream/trajstore.hpp"

namespace sepstream {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// frames must carry the id plus everything the pipeline tracks, and
// sep_flag for seed selection even when it is not tracked
std::vector<std::string> frame_properties(const PipelineConfig& pipeline) {
    std::vector<std::string> props{"id"};
    for (const auto& p : pipeline.properties)
        props.push_back(p);
    if (std::find(props.begin(), props.end(), "sep_flag") == props.end())
        props.push_back("sep_flag");
    return props;
}

StageEndpoint species_endpoint(const RunConfig& cfg, Species species) {
    StageEndpoint endpoint = cfg.staging;
    if (endpoint.mode == StageEndpoint::Mode::file) {
        endpoint.path = cfg.staging.path / to_string(species);
        // stale frames from an earlier run would corrupt step ordering
        std::error_code ec;
        std::filesystem::remove_all(endpoint.path, ec);
        if (ec)
            throw IoError("cannot clear staging directory " + endpoint.path.string() +
                          ": " + ec.message());
    }
    return endpoint;
}

SpeciesOutcome run_species(const RunConfig& cfg, const SourceConfig& src,
                           const std::string& digest,
                           const std::atomic<bool>* stop) {
    const std::string name = to_string(src.species);
    log_info("species " + name + ": " + std::to_string(src.n_particles) +
             " particles, " + std::to_string(src.n_steps) + " steps");

    SpeciesOutcome outcome;
    outcome.species = src.species;

    StagePair stage = open_endpoint(species_endpoint(cfg, src.species));

    const std::vector<std::string> props = frame_properties(cfg.pipeline);
    const std::vector<std::string_view> prop_views(props.begin(), props.end());

    std::exception_ptr producer_error;
    std::atomic<uint64_t> frames_published{0};
    std::atomic<double> source_seconds{0.0};
    std::thread producer([&] {
        const auto start = Clock::now();
        try {
            SynthSource source(src);
            frames_published = run_source(source, *stage.writer, prop_views, stop);
        } catch (...) {
            producer_error = std::current_exception();
            // unblock a reader waiting for more frames
            try {
                stage.writer->close();
            } catch (...) {
            }
        }
        source_seconds = seconds_since(start);
    });

    PipelineResult result;
    const auto analysis_start = Clock::now();
    try {
        result = run_pipeline(*stage.reader, cfg.pipeline);
    } catch (...) {
        if (stage.channel)
            close_channel(*stage.channel);  // never strand the producer
        producer.join();
        throw;
    }
    outcome.analysis_seconds = seconds_since(analysis_start);
    producer.join();
    if (producer_error)
        std::rethrow_exception(producer_error);
    outcome.frames_published = frames_published;
    outcome.source_seconds = source_seconds;
    outcome.stats = result.stats;
    log_info("species " + name + ": " + std::to_string(result.stats.frames_consumed) +
             " frames, " + std::to_string(result.stats.seed_count) + " seeds, peak " +
             std::to_string(result.stats.peak_retained_records) + " records retained");

    const auto write_start = Clock::now();
    TrajectoryDataset dataset = merge_blocks(std::move(result.blocks), result.species);
    outcome.trajectory_path = cfg.out_dir / ("trajectory_" + name + ".strj");
    write_trajectory_file(dataset, outcome.trajectory_path, digest);
    outcome.trajectory_bytes = std::filesystem::file_size(outcome.trajectory_path);
    outcome.write_seconds = seconds_since(write_start);

    const auto diffusion_start = Clock::now();
    DiffusionConfig dc;
    dc.regions = cfg.regions;
    dc.properties = cfg.diffusion_properties;
    dc.dt = src.dt;
    dc.dpdrs = cfg.dpdrs;
    dc.model = cfg.model;
    dc.worker_count = cfg.diffusion_workers;
    const DiffusionSeries series = compute_series(dataset, dc);
    outcome.csv_path = cfg.out_dir / ("diffusion_" + name + ".csv");
    outcome.json_path = cfg.out_dir / ("diffusion_" + name + ".json");
    write_diffusion_csv(series, src.species, outcome.csv_path);
    write_diffusion_json(series, src.species, outcome.json_path);
    outcome.diffusion_seconds = seconds_since(diffusion_start);
    log_info("species " + name + ": wrote " + outcome.trajectory_path.string() + ", " +
             outcome.csv_path.string());
    return outcome;
}

} // namespace

RunOutcome run_workflow(const RunConfig& cfg, const std::atomic<bool>* stop) {
    require_valid(cfg);
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec)
        throw IoError("cannot create output directory " + cfg.out_dir.string() + ": " +
                      ec.message());
    const std::string digest = "fnv1a64:" + hex64(fnv1a64(cfg.canonical_json));

    const auto start = Clock::now();
    RunOutcome outcome;
    for (const SourceConfig& src : cfg.species_runs)
        outcome.species.push_back(run_species(cfg, src, digest, stop));
    outcome.total_seconds = seconds_since(start);

    nlohmann::json report;
    report["config_digest"] = digest;
    report["total_seconds"] = outcome.total_seconds;
    nlohmann::json species_reports = nlohmann::json::array();
    for (const SpeciesOutcome& s : outcome.species) {
        nlohmann::json r;
        r["species"] = to_string(s.species);
        r["trajectory_file"] = s.trajectory_path.filename().string();
        r["trajectory_bytes"] = s.trajectory_bytes;
        r["csv_file"] = s.csv_path.filename().string();
        r["json_file"] = s.json_path.filename().string();
        r["frames_published"] = s.frames_published;
        r["frames_consumed"] = s.stats.frames_consumed;
        r["seed_count"] = s.stats.seed_count;
        r["initial_population"] = s.stats.first_frame_records;
        r["final_population"] = s.stats.last_frame_records;
        r["max_frame_records"] = s.stats.max_frame_records;
        r["peak_retained_records"] = s.stats.peak_retained_records;
        r["retained_bound"] = s.stats.seed_count + s.stats.max_frame_records;
        r["records_kept_total"] = s.stats.records_kept_total;
        r["records_dropped_total"] = s.stats.records_dropped_total;
        r["source_seconds"] = s.source_seconds;
        r["analysis_seconds"] = s.analysis_seconds;
        r["trajectory_write_seconds"] = s.write_seconds;
        r["diffusion_seconds"] = s.diffusion_seconds;
        species_reports.push_back(std::move(r));
    }
    report["species"] = std::move(species_reports);

    outcome.report_path = cfg.out_dir / "run_report.json";
    std::ofstream out(outcome.report_path, std::ios::trunc);
    if (!out)
        throw IoError("cannot open " + outcome.report_path.string() + " for writing");
    out << report.dump(2) << '\n';
    out.flush();
    if (!out)
        throw IoError("short write to " + outcome.report_path.string());
    return outcome;
}

} // namespace sepstream
