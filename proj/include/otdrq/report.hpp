#pragma once

// CSV / manifest / gnuplot writers for sweep reports.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "otdrq/config_file.hpp"
#include "otdrq/experiment.hpp"
#include "otdrq/quantum_limit.hpp"

namespace otdrq {

namespace fs = std::filesystem;

#ifndef OTDRQ_GIT_DESCRIBE
#define OTDRQ_GIT_DESCRIBE "unknown"
#endif

inline constexpr const char* version_string = "0.1.0";

/// Writes `text` to dir/name and returns the file name.
inline std::string write_text(const fs::path& dir, const std::string& name, const std::string& text)
{
    std::ofstream out(dir / name, std::ios::binary);
    if (!out)
        throw std::runtime_error(fmt::format("cannot write {}", (dir / name).string()));
    out << text;
    if (!out)
        throw std::runtime_error(fmt::format("write failed: {}", (dir / name).string()));
    return name;
}

/// Formats a number for file names: 10 -> "10", 2.5 -> "2.5".
inline std::string number_tag(double v) { return fmt::format("{}", v); }

inline std::string phase_csv(const std::vector<PhaseBinRow>& rows)
{
    std::string s = "snr_db,sigma_num_rad,sigma_limit_rad,n_samples,flags\n";
    for (const auto& r : rows)
        s += fmt::format("{},{},{},{},{}\n", r.center_db, r.sigma_num, r.sigma_limit, r.n, r.flags.str());
    return s;
}

inline std::string temperature_csv(const std::vector<TempBinRow>& rows)
{
    std::string s = "snr_db,sigma_num_k,sigma_limit_k,sigma_pred_num_k,n_steps,n_tracks,snr_harmonic_db,"
                    "delta_L_actual_m,flags\n";
    for (const auto& r : rows)
        s += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.center_db, r.sigma_num, r.sigma_limit, r.sigma_pred_num,
                         r.n_steps, r.n_tracks, linear_to_db(r.snr_harmonic), r.delta_L_actual, r.flags.str());
    return s;
}

/// One row per (SNR bin, dL): the Fig. 4 view of the temperature data.
inline std::string length_csv(const std::map<double, std::vector<TempBinRow>>& temp)
{
    std::string s = "snr_db,delta_L_m,delta_L_actual_m,sigma_num_k,sigma_limit_k,sigma_pred_num_k,n_steps,flags\n";
    std::map<double, std::vector<std::pair<double, const TempBinRow*>>> by_snr;
    for (const auto& [dl, rows] : temp)
        for (const auto& r : rows)
            by_snr[r.center_db].emplace_back(dl, &r);
    for (const auto& [snr, list] : by_snr)
        for (const auto& [dl, r] : list)
            s += fmt::format("{},{},{},{},{},{},{},{}\n", snr, dl, r->delta_L_actual, r->sigma_num, r->sigma_limit,
                             r->sigma_pred_num, r->n_steps, r->flags.str());
    return s;
}

inline std::string frames_csv(const std::vector<FrameAverageRow>& rows)
{
    std::string s = "frames,sigma_norm,sigma_avg_num_k,sigma_avg_limit_k,snr_harmonic_db,delta_L_m,n_tracks\n";
    for (const auto& r : rows)
        s += fmt::format("{},{},{},{},{},{},{}\n", r.frames, r.sigma_norm, r.sigma_avg_num, r.sigma_avg_limit,
                         r.snr_harmonic > 0 ? linear_to_db(r.snr_harmonic) : 0.0, r.delta_L_ref, r.n_tracks);
    return s;
}

inline std::string tracks_csv(const std::vector<TrialResult>& trials)
{
    std::string s = "trial,noise_scale,delta_L_m,k1,k2,delta_L_actual_m,snr_eff_db,reliable,frame,delta_T_hat_k,"
                    "delta_T_true_k\n";
    for (const auto& t : trials)
        for (const auto& tr : t.tracks)
            for (std::size_t p = 0; p < tr.noisy.delta_T_hat.size(); ++p)
                s += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", t.trial_index, t.noise_scale,
                                 tr.delta_L_nominal, tr.noisy.k1, tr.noisy.k2, tr.noisy.delta_L,
                                 linear_to_db(tr.snr_effective), tr.noisy.reliable ? 1 : 0, p,
                                 tr.noisy.delta_T_hat[p], tr.truth.delta_T_hat[p]);
    return s;
}

inline std::string limits_csv(const ConfigFile& cfg, double cf)
{
    const double dl = cfg.system.monitor_k2_distance_m - cfg.system.heating_zone_start_m;
    std::string s = "snr_db,snr_linear,sigma_phi_rad,sigma_dT_k\n";
    LimitPoint at;
    at.cf = cf;
    at.delta_L = dl;
    const auto lin = db_grid_to_linear(cfg.sweep.snr_db_grid);
    const auto phase = limit_curve(LimitKind::phase_vs_snr, lin, at);
    const auto temp = limit_curve(LimitKind::temp_vs_snr, lin, at);
    for (std::size_t i = 0; i < lin.size(); ++i)
        s += fmt::format("{},{},{},{}\n", cfg.sweep.snr_db_grid[i], lin[i], phase.sigma[i], temp.sigma[i]);
    return s;
}

inline std::string limits_length_csv(const ConfigFile& cfg, double cf)
{
    std::string s = "snr_db,delta_L_m,sigma_dT_k\n";
    for (double snr_db : cfg.sweep.snr_db_grid) {
        LimitPoint at;
        at.cf = cf;
        at.snr = db_to_linear(snr_db);
        const auto c = limit_curve(LimitKind::temp_vs_length, cfg.sweep.delta_L_list, at);
        for (std::size_t i = 0; i < c.abscissa.size(); ++i)
            s += fmt::format("{},{},{}\n", snr_db, c.abscissa[i], c.sigma[i]);
    }
    return s;
}

// ---------------------------------------------------------------------------
// gnuplot scripts

inline std::string gnuplot_phase()
{
    return "set datafile separator ','\n"
           "set key autotitle columnhead\n"
           "set logscale y\n"
           "set xlabel 'SNR (dB)'\n"
           "set ylabel 'phase uncertainty (rad)'\n"
           "set terminal pngcairo size 800,600\n"
           "set output 'phase_vs_snr.png'\n"
           "plot 'phase_vs_snr.csv' using 1:2 with points pt 7 title 'simulation', \\\n"
           "     '' using 1:3 with lines lw 2 title 'quantum limit'\n";
}

inline std::string gnuplot_temperature(const std::vector<std::string>& files)
{
    std::string s = "set datafile separator ','\n"
                    "set logscale y\n"
                    "set xlabel 'SNR (dB)'\n"
                    "set ylabel 'temperature-change uncertainty (K)'\n"
                    "set terminal pngcairo size 800,600\n"
                    "set output 'temp_vs_snr.png'\n"
                    "plot ";
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (i)
            s += ", \\\n     ";
        s += fmt::format("'{0}' using 1:2 with points pt 7 title '{0}', '{0}' using 1:3 with lines notitle", files[i]);
    }
    return s + "\n";
}

inline std::string gnuplot_frames()
{
    return "set datafile separator ','\n"
           "set logscale xy\n"
           "set xlabel 'frames'\n"
           "set ylabel 'averaged temperature uncertainty (K)'\n"
           "set terminal pngcairo size 800,600\n"
           "set output 'frames_vs_sigma.png'\n"
           "plot 'frames_vs_sigma.csv' using 1:3 with points pt 7 title 'simulation', \\\n"
           "     '' using 1:4 with lines lw 2 title 'limit / sqrt(P)'\n";
}

// ---------------------------------------------------------------------------
// Manifest

struct RunInfo {
    std::string command;
    std::vector<std::string> outputs;
    std::vector<std::string> warnings;
    std::optional<double> wall_time_s;
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

inline nlohmann::ordered_json config_json(const ConfigFile& cfg)
{
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& key : config_keys())
        j[key.section][key.name] = key.get(cfg);
    return j;
}

inline std::string manifest_json(const ConfigFile& cfg, const RunInfo& info)
{
    nlohmann::ordered_json j;
    j["tool"] = "otdrqlim";
    j["version"] = version_string;
    j["git_describe"] = OTDRQ_GIT_DESCRIBE;
    j["command"] = info.command;
    j["master_seed"] = cfg.system.rng_seed;
    j["config"] = config_json(cfg);
    for (const auto& [k, v] : info.extra.items())
        j[k] = v;
    j["warnings"] = info.warnings;
    j["outputs"] = info.outputs;
    if (info.wall_time_s)
        j["wall_time_s"] = *info.wall_time_s;
    return j.dump(2) + "\n";
}

inline nlohmann::ordered_json report_summary(const UncertaintyReport& rep)
{
    nlohmann::ordered_json j;
    j["axis"] = std::string(to_string(rep.axis));
    j["noise_scale_db"] = rep.noise_scale_db;
    j["delta_L_list_m"] = rep.delta_L_list;
    j["ensemble_size"] = rep.ensemble_size;
    j["trials_run"] = rep.trials_run;
    j["trials_failed"] = rep.trials_failed;
    j["failures"] = rep.failures;
    j["fade_threshold"] = rep.fade_threshold;
    j["fade_exclusion_fraction"] = rep.fade_exclusion_fraction;
    j["conversion_constant_cf"] = rep.cf;
    j["heating_rate_k_per_frame"] = rep.heating_rate;
    return j;
}

/// Writes every CSV of `rep` into `dir` and returns the file names.
inline std::vector<std::string> write_report(const fs::path& dir, const UncertaintyReport& rep, bool gnuplot,
                                             bool tracks)
{
    std::vector<std::string> files;
    if (!rep.phase.empty()) {
        files.push_back(write_text(dir, "phase_vs_snr.csv", phase_csv(rep.phase)));
        if (gnuplot)
            files.push_back(write_text(dir, "phase_vs_snr.gp", gnuplot_phase()));
    }
    if (!rep.temperature.empty()) {
        std::vector<std::string> temp_files;
        for (const auto& [dl, rows] : rep.temperature)
            temp_files.push_back(write_text(dir, fmt::format("temp_vs_snr_dL{}.csv", number_tag(dl)),
                                            temperature_csv(rows)));
        files.insert(files.end(), temp_files.begin(), temp_files.end());
        files.push_back(write_text(dir, "temp_vs_length.csv", length_csv(rep.temperature)));
        if (gnuplot)
            files.push_back(write_text(dir, "temp_vs_snr.gp", gnuplot_temperature(temp_files)));
    }
    if (!rep.frames.empty()) {
        files.push_back(write_text(dir, "frames_vs_sigma.csv", frames_csv(rep.frames)));
        if (gnuplot)
            files.push_back(write_text(dir, "frames_vs_sigma.gp", gnuplot_frames()));
    }
    if (tracks)
        files.push_back(write_text(dir, "tracks.csv", tracks_csv(rep.trials)));
    return files;
}

} // namespace otdrq
