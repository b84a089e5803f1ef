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

#pragma once

#include "otacal/beam_opt.hpp"
#include "otacal/calibrator.hpp"
#include "otacal/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace otacal
{

enum class BeamMode
{
    Random,
    Optimized,
    Loaded // patterns read from files; only reachable through run_sweep
};

std::string to_string(BeamMode mode);
BeamMode parse_beam_mode(const std::string &name); // "random" | "optimized"

struct ScenarioConfig
{
    int n_x = 4, n_y = 4; // transmit array
    int m_x = 4, m_y = 4; // receive array
    int n_rf = 2;
    int l = 2;
    int k = 64;
    std::vector<double> snr_db{-10.0, 0.0, 10.0};
    double epsilon_deg = 20.0;
    double nu_deg = 0.0;
    std::vector<BeamMode> beam_mode{BeamMode::Random};
    int n_fft = 32;
    int trials = 100;
    std::uint64_t seed = 1;

    ArrayPair arrays() const { return {{n_x, n_y}, {m_x, m_y}}; }
    int m_t() const { return n_x * n_y; }

    // Throws std::invalid_argument naming the offending key.
    void validate() const;
};

// JSON object with the field names above; absent keys keep their defaults, unknown
// keys are rejected. Throws std::invalid_argument on malformed input.
ScenarioConfig parse_config(const std::string &text);
ScenarioConfig load_config(const std::string &path);
std::string config_to_json(const ScenarioConfig &config);

// sigma^2 = L / 10^(snr_db / 10) with beta = 1.
double noise_variance(double snr_db, int l);

// Ground truth and patterns for one trial. Everything except the noise is drawn
// from the trial's scenario and pattern streams, so it is shared across SNR points.
struct Scenario
{
    ChannelParams channel;
    PhaseDeviations deviations;
    std::vector<CVec> w;
    std::vector<CMat> f_random;
    double csi_theta_r = 0.0; // receive direction known to the pattern design (perturbed by nu)
    double csi_phi_r = pi / 2;
};

std::uint64_t trial_seed(const ScenarioConfig &config, int trial, int stream);
Scenario draw_scenario(const ScenarioConfig &config, int trial);

// Patterns for `mode`. Loaded patterns are given per chain as M_t x K matrices.
BeamSchedule make_schedule(const ScenarioConfig &config, const Scenario &scenario, BeamMode mode,
                           const std::vector<CMat> &loaded = {});

struct TrialResult
{
    double rmse_deg = 0.0;         // both sides in the fixed gauge (Omega(0,0) = 1, no transmit steering)
    double rmse_aligned_deg = 0.0; // estimate least-squares aligned onto the truth
    double crb_rmse_deg = 0.0;
    int outer_iterations = 0;
    std::vector<double> cost_trace;
};

// Simulate, calibrate and score one trial at one SNR. Failures are rethrown with the
// trial index and seed attached.
TrialResult evaluate_trial(const ScenarioConfig &config, int trial, const Scenario &scenario,
                           const BeamSchedule &schedule, double snr_db);
TrialResult run_trial(const ScenarioConfig &config, int trial, double snr_db, BeamMode mode);

struct SweepRow
{
    double snr_db = 0.0;
    std::string beam_mode;
    double rmse_deg = 0.0;
    double crb_rmse_deg = 0.0;
    double mean_outer_iterations = 0.0;
    int trials = 0;
};

struct SweepOptions
{
    unsigned threads = 0; // 0: hardware concurrency
    std::vector<CMat> loaded_patterns; // non-empty adds "loaded" rows
};

// One row per (snr, mode) in config order, loaded rows last. RMSE and CRB are
// root-mean-square over trials. Results do not depend on the thread count.
std::vector<SweepRow> run_sweep(const ScenarioConfig &config, const SweepOptions &options = {});

// Same scenarios as run_sweep, bound only: crb_rmse_deg per (snr, mode).
std::vector<SweepRow> run_crb_sweep(const ScenarioConfig &config, const SweepOptions &options = {});

inline const char *sweep_csv_header = "snr_db,beam_mode,rmse_deg,crb_rmse_deg,mean_outer_iterations,trials";
std::string format_csv(const std::vector<SweepRow> &rows);
std::string format_svg(const std::vector<SweepRow> &rows);

// Text file helpers; throw std::runtime_error naming the path on failure.
void write_text_file(const std::string &path, const std::string &content);
std::string read_text_file(const std::string &path);

// dir/chain_<n>.txt, one row per element, K phases in radians.
void save_beam_patterns(const std::string &dir, const std::vector<CMat> &chains);
std::vector<CMat> load_beam_patterns(const std::string &dir);

// Patterns optimized for the scenario of trial 0.
std::vector<CMat> design_beam_patterns(const ScenarioConfig &config);

// One trial's simulated data, serializable for the simulate/calibrate commands.
struct SimulatedData
{
    Scenario scenario;
    BeamSchedule schedule;
    MeasurementSet measurements;
    ArrayPair arrays;
    double snr_db = 0.0;
};

SimulatedData simulate_trial(const ScenarioConfig &config, int trial, double snr_db, BeamMode mode);
std::string simulated_to_json(const SimulatedData &data);
SimulatedData simulated_from_json(const std::string &text);
std::string calibration_to_json(const CalibrationResult &result, const SimulatedData &data);

} // namespace otacal
