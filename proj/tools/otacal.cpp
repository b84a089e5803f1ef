// SPDX-License-Identifier: Apache-2.0
//
// otacal - over-the-air phase calibration toolkit for hybrid phased arrays
// Copyright (C) 2026 The otacal authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

// Command-line front end: simulate, calibrate, crb, optimize-beams, sweep.
// Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.

#include "otacal/calibrator.hpp"
#include "otacal/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

using namespace otacal;

namespace
{

struct CommonArgs
{
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
};

void add_common(CLI::App *cmd, CommonArgs &args, bool with_out = true)
{
    cmd->add_option("--config", args.config_path, "JSON configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", args.seed, "Override the configured seed");
    if (with_out)
        cmd->add_option("--out", args.out_dir, "Output directory");
}

ScenarioConfig resolve_config(const CommonArgs &args)
{
    ScenarioConfig config = args.config_path.empty() ? ScenarioConfig{} : load_config(args.config_path);
    if (args.seed)
        config.seed = *args.seed;
    config.validate();
    return config;
}

std::string out_path(const CommonArgs &args, const std::string &name)
{
    std::error_code ec;
    std::filesystem::create_directories(args.out_dir, ec);
    if (ec)
        throw std::runtime_error("cannot create directory " + args.out_dir + ": " + ec.message());
    return (std::filesystem::path(args.out_dir) / name).string();
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Over-the-air phase calibration toolkit"};
    app.require_subcommand(1);

    CommonArgs sim_args, cal_args, crb_args, beam_args, sweep_args;
    std::string cal_input, sweep_beams;

    auto *sim = app.add_subcommand("simulate", "Simulate trial 0 at the first SNR; writes scenario.json");
    add_common(sim, sim_args);

    auto *cal = app.add_subcommand("calibrate", "Calibrate a simulated scenario; writes calibration.json");
    add_common(cal, cal_args);
    cal->add_option("--input", cal_input, "scenario.json from simulate (default: simulate internally)")
        ->check(CLI::ExistingFile);

    auto *crb = app.add_subcommand("crb", "Print crb_rmse_deg per SNR and beam mode");
    add_common(crb, crb_args, false);

    auto *beams = app.add_subcommand("optimize-beams", "Design patterns for trial 0; writes chain_<n>.txt");
    add_common(beams, beam_args);

    auto *sweep = app.add_subcommand("sweep", "Monte-Carlo RMSE/CRB sweep; writes sweep.csv and sweep.svg");
    add_common(sweep, sweep_args);
    sweep->add_option("--beams", sweep_beams, "Directory of chain_<n>.txt patterns to evaluate as \"loaded\"")
        ->check(CLI::ExistingDirectory);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp &e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError &e)
    {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    try
    {
        if (*sim)
        {
            const ScenarioConfig config = resolve_config(sim_args);
            const SimulatedData data = simulate_trial(config, 0, config.snr_db.front(), config.beam_mode.front());
            const std::string path = out_path(sim_args, "scenario.json");
            write_text_file(path, simulated_to_json(data));
            std::cout << "wrote " << path << "\n";
        }
        else if (*cal)
        {
            const ScenarioConfig config = resolve_config(cal_args);
            const SimulatedData data =
                cal_input.empty() ? simulate_trial(config, 0, config.snr_db.front(), config.beam_mode.front())
                                  : simulated_from_json(read_text_file(cal_input));
            CalibrationOptions options;
            options.n_fft = config.n_fft;
            const CalibrationResult result = run_bcd(data.measurements, data.schedule, data.arrays, options);
            const std::string path = out_path(cal_args, "calibration.json");
            write_text_file(path, calibration_to_json(result, data));
            std::cout << "wrote " << path << " (" << result.outer_iterations << " outer iterations)\n";
        }
        else if (*crb)
        {
            const ScenarioConfig config = resolve_config(crb_args);
            std::printf("snr_db,beam_mode,crb_rmse_deg\n");
            for (const SweepRow &row : run_crb_sweep(config))
                std::printf("%.15g,%s,%.15g\n", row.snr_db, row.beam_mode.c_str(), row.crb_rmse_deg);
        }
        else if (*beams)
        {
            const ScenarioConfig config = resolve_config(beam_args);
            out_path(beam_args, "");
            save_beam_patterns(beam_args.out_dir, design_beam_patterns(config));
            std::cout << "wrote " << config.n_rf << " pattern file(s) to " << beam_args.out_dir << "\n";
        }
        else if (*sweep)
        {
            const ScenarioConfig config = resolve_config(sweep_args);
            SweepOptions options;
            if (!sweep_beams.empty())
                options.loaded_patterns = load_beam_patterns(sweep_beams);
            const std::vector<SweepRow> rows = run_sweep(config, options);
            const std::string csv = out_path(sweep_args, "sweep.csv");
            write_text_file(csv, format_csv(rows));
            write_text_file(out_path(sweep_args, "sweep.svg"), format_svg(rows));
            std::cout << format_csv(rows);
        }
    }
    catch (const NumericalError &e)
    {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
