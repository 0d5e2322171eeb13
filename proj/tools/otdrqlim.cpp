// otdrqlim: quantum-limit benchmarking of a simulated coherent phase-OTDR.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "otdrq/config_file.hpp"
#include "otdrq/experiment.hpp"
#include "otdrq/report.hpp"
#include "otdrq/trace_io.hpp"

namespace fs = std::filesystem;
using namespace otdrq;

namespace {

struct Options {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> fibers;
    std::optional<std::size_t> frames;
    std::string out;
    std::string format = "csv";
    bool no_noise = false;
    std::optional<std::size_t> threads;
    bool gnuplot = false;
    bool record_timing = false;
    bool tracks = false;
    std::size_t trial = 0;
    std::size_t frame = 0;
    bool binary = false;
};

ConfigFile build_config(const Options& o)
{
    ConfigFile cfg = o.config_path.empty() ? ConfigFile{} : load_config(o.config_path);
    for (const auto& s : o.overrides)
        apply_override(cfg, s);
    if (o.seed)
        cfg.system.rng_seed = *o.seed;
    if (o.fibers)
        cfg.sweep.fibers = *o.fibers;
    if (o.frames)
        cfg.system.frames = *o.frames;
    return cfg;
}

std::size_t thread_count(const Options& o)
{
    if (o.threads)
        return *o.threads;
    if (const char* env = std::getenv("OTDRQLIM_THREADS")) {
        try {
            return static_cast<std::size_t>(std::stoul(env));
        } catch (const std::exception&) {
            throw ConfigError("threads", fmt::format("OTDRQLIM_THREADS='{}' is not a number", env));
        }
    }
    return 0;
}

fs::path prepare_out(const Options& o)
{
    if (o.out.empty())
        throw ConfigError("out-dir", "this command needs --out DIR");
    fs::create_directories(o.out);
    return o.out;
}

void print_warnings(const std::vector<std::string>& w)
{
    for (const auto& s : w)
        std::cerr << "warning: " << s << '\n';
}

int cmd_validate(const Options& o)
{
    const auto cfg = build_config(o);
    const auto vc = validate(cfg.system);
    print_warnings(vc.warnings);
    const auto grid = derive_grid(vc);
    const auto ctx = SimulationContext::make(vc);
    fmt::print("config: ok\n");
    fmt::print("fast_time_samples_K = {}\n", grid.total_fast_samples);
    fmt::print("sample_rate_hz = {}\n", grid.sample_rate);
    fmt::print("meters_per_sample = {}\n", grid.distance_of_sample(1.0));
    fmt::print("resolution_cell_m = {}\n", grid.resolution_cell_length);
    fmt::print("group_velocity_m_per_s = {}\n", grid.group_velocity);
    fmt::print("scatterers = {}\n", scatterer_count(cfg.system.scatterers_per_cell, cfg.system.fiber_length_m,
                                                    grid.resolution_cell_length));
    fmt::print("conversion_constant_cf = {}\n", ctx.cf);
    fmt::print("ase_psd_w_per_hz = {}\n", ctx.preamp.psd_per_pol);
    fmt::print("noise_power_per_sample_w = {}\n", ctx.unit_noise_power);
    if (!o.out.empty()) {
        const auto dir = prepare_out(o);
        RunInfo info{"validate-config", {}, vc.warnings, std::nullopt};
        info.extra["fast_time_samples_K"] = grid.total_fast_samples;
        info.outputs.push_back(write_text(dir, "config.conf", write_config(cfg)));
        write_text(dir, "manifest.json", manifest_json(cfg, info));
    }
    return 0;
}

int cmd_limits(const Options& o)
{
    const auto cfg = build_config(o);
    const double cf = cfg.system.conversion_constant_cf.value_or(
        cf_from_constants(cfg.system.wavelength_m, cfg.system.constants));
    const auto snr = limits_csv(cfg, cf);
    if (o.out.empty()) {
        std::cout << snr;
        return 0;
    }
    const auto dir = prepare_out(o);
    RunInfo info{"limits", {}, {}, std::nullopt};
    info.outputs.push_back(write_text(dir, "limits_vs_snr.csv", snr));
    info.outputs.push_back(write_text(dir, "limits_vs_length.csv", limits_length_csv(cfg, cf)));
    write_text(dir, "manifest.json", manifest_json(cfg, info));
    return 0;
}

int cmd_trace(const Options& o)
{
    const auto cfg = build_config(o);
    const auto vc = validate(cfg.system);
    print_warnings(vc.warnings);
    const auto dir = prepare_out(o);
    const auto ctx = SimulationContext::make(vc);
    if (o.frame >= ctx.profile.frames())
        throw ConfigError("frame-index", fmt::format("--frame {} is beyond frames = {}", o.frame, cfg.system.frames));

    const auto ch = prepare_channel(ctx, o.trial);
    const bool noise = !o.no_noise;
    const auto f = simulate_frame(ctx, ch, o.frame, cfg.system.noise_scale, noise);

    std::string csv = "k,distance_m,power_w,phase_rad,power_truth_w,phase_truth_rad,snr_db,fade\n";
    for (std::size_t k = 0; k < f.noisy.size(); ++k) {
        const auto y = f.noisy.samples[k];
        const auto t = f.truth.samples[k];
        const bool fade = ch.amplitude[k] <= 0.0 || ch.amplitude[k] < ch.fades.floor(k);
        csv += fmt::format("{},{},{},{},{},{},{},{}\n", k, ctx.distance(k), std::norm(y),
                           estimate_phase(y).value_or(0.0), std::norm(t), estimate_phase(t).value_or(0.0),
                           linear_to_db(std::norm(t) / ctx.unit_noise_power), fade ? 1 : 0);
    }
    RunInfo info{"simulate-trace", {}, vc.warnings, std::nullopt};
    info.extra["trial"] = o.trial;
    info.extra["frame"] = o.frame;
    info.extra["noise"] = noise;
    info.outputs.push_back(write_text(dir, "trace.csv", csv));
    if (o.binary) {
        write_trace(dir / "trace.bin", f.noisy);
        write_trace_sidecar(dir / "trace.txt", f.noisy, cfg.system.rng_seed, o.trial, ctx.distance(1), noise);
        info.outputs.push_back("trace.bin");
        info.outputs.push_back("trace.txt");
    }
    write_text(dir, "manifest.json", manifest_json(cfg, info));
    return 0;
}

int cmd_sweep(const Options& o, SweepAxis axis, const std::string& name)
{
    const auto cfg = build_config(o);
    const auto vc = validate(cfg.system);
    print_warnings(vc.warnings);
    const auto dir = prepare_out(o);

    const auto t0 = std::chrono::steady_clock::now();
    SweepOptions so;
    so.threads = thread_count(o);
    so.noise_enabled = !o.no_noise;
    so.keep_trials = o.tracks;
    const auto rep = sweep(cfg, axis, so);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    for (const auto& f : rep.failures)
        std::cerr << "trial failed: " << f << '\n';

    RunInfo info{name, {}, vc.warnings, std::nullopt};
    if (o.record_timing)
        info.wall_time_s = wall;
    info.extra = report_summary(rep);
    info.extra["noise_enabled"] = !o.no_noise;
    info.outputs = write_report(dir, rep, o.gnuplot, o.tracks);
    write_text(dir, "manifest.json", manifest_json(cfg, info));
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Quantum-limit benchmarking of a simulated coherent phase-OTDR"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", o.config_path, "configuration file")->check(CLI::ExistingFile);
        sub->add_option("--set", o.overrides, "override key=value (repeatable)");
        sub->add_option("--seed", o.seed, "master RNG seed");
        sub->add_option("--fibers", o.fibers, "fiber realizations per sweep point");
        sub->add_option("--frames", o.frames, "frames per trial");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--format", o.format, "output format")->check(CLI::IsMember({"csv"}));
        sub->add_flag("--no-noise", o.no_noise, "disable all noise sources");
        sub->add_option("--threads", o.threads, "worker threads (0 = auto)");
        sub->add_flag("--gnuplot", o.gnuplot, "also write gnuplot scripts");
        sub->add_flag("--record-timing", o.record_timing, "store wall time in the manifest");
    };

    auto* limits = app.add_subcommand("limits", "analytic limit curves, no simulation");
    auto* trace = app.add_subcommand("simulate-trace", "one frame of one fiber, noisy and noiseless");
    auto* snr = app.add_subcommand("sweep-snr", "phase and temperature uncertainty versus SNR");
    auto* length = app.add_subcommand("sweep-length", "temperature uncertainty versus heated length");
    auto* frames = app.add_subcommand("sweep-frames", "frame-averaged temperature uncertainty");
    auto* check = app.add_subcommand("validate-config", "validate the configuration and print the grid");
    for (auto* s : {limits, trace, snr, length, frames, check})
        common(s);
    trace->add_option("--trial", o.trial, "fiber (trial) index");
    trace->add_option("--frame", o.frame, "frame index");
    trace->add_flag("--binary", o.binary, "also write trace.bin and trace.txt");
    for (auto* s : {snr, length, frames})
        s->add_flag("--tracks", o.tracks, "write per-track temperature estimates");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*limits)
            return cmd_limits(o);
        if (*trace)
            return cmd_trace(o);
        if (*snr)
            return cmd_sweep(o, SweepAxis::snr, "sweep-snr");
        if (*length)
            return cmd_sweep(o, SweepAxis::delta_L, "sweep-length");
        if (*frames)
            return cmd_sweep(o, SweepAxis::frames, "sweep-frames");
        return cmd_validate(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
