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

#include "otacal/channel_est.hpp"
#include "otacal/complex_circle.hpp"
#include "otacal/model.hpp"

#include <vector>

namespace otacal
{

struct CalibrationOptions
{
    int n_fft = 32;
    int max_outer_iterations = 20;
    // Stop once an outer iteration lowers the cost by less than this fraction.
    double min_relative_decrease = 0.01;
    // Stop once the cost falls below this fraction of ||y||^2 (noise-free data).
    double cost_floor = 1e-24;
    RefineOptions refine;
    RcgOptions rcg;
};

struct CalibrationResult
{
    PhaseDeviations deviations_est;
    ChannelParams channel_est;
    // Joint least-squares cost after initialization and after every outer iteration.
    std::vector<double> cost_trace;
    int outer_iterations = 0;
};

// sum_k ||y_k - sqrt(beta) w_k^H H (F_k .* Omega)||^2
double calibration_cost(const MeasurementSet &measurements, const BeamSchedule &schedule, const ArrayPair &arrays,
                        const ChannelParams &channel, const PhaseDeviations &deviations);

// Block coordinate descent: Omega starts at all-ones, the channel is found by the
// 4D-FFT grid search plus refinement, then per-chain phase updates alternate with
// warm-started channel refinement until the relative cost decrease drops below
// min_relative_decrease. Throws NumericalError (with context) if the channel
// cannot be estimated.
CalibrationResult run_bcd(const MeasurementSet &measurements, const BeamSchedule &schedule, const ArrayPair &arrays,
                          const CalibrationOptions &options = {});

// Ambiguity (H, Omega) -> (e^{j beta} H T, e^{-j beta} T^H Omega), T = diag(t),
// t = a_x(chi1, chi2) (x) a_y(chi2) over the transmit array.
struct GaugeParams
{
    double beta_phase = 0.0;
    double chi1 = 0.0;
    double chi2 = pi / 2;
};

CVec gauge_vector(const GaugeParams &gauge, const UpaGeometry &tx);
CMat gauge_channel(const CMat &h, const GaugeParams &gauge, const UpaGeometry &tx);
PhaseDeviations gauge_deviations(const PhaseDeviations &deviations, const GaugeParams &gauge, const UpaGeometry &tx);

struct AlignedDeviations
{
    PhaseDeviations deviations;
    GaugeParams gauge;
    double mismatch = 0.0; // Frobenius distance to the reference
};

// Least-squares gauge fit of `estimate` onto `reference`: the global phase is solved
// in closed form, (chi1, chi2) by a 64 x 64 grid followed by Armijo descent.
AlignedDeviations align_gauge(const PhaseDeviations &estimate, const PhaseDeviations &reference,
                              const UpaGeometry &tx);

struct CanonicalPair
{
    PhaseDeviations deviations;
    ChannelParams channel; // transmit steering all-ones: theta_t = 0, phi_t = pi/2
    GaugeParams gauge;
};

// Fixed gauge: beta = arg Omega(0,0), chi = (theta_t, phi_t). Afterwards Omega(0,0) = 1
// and the channel carries no transmit steering.
CanonicalPair canonical_gauge(const PhaseDeviations &deviations, const ChannelParams &channel,
                              const UpaGeometry &tx);

// sqrt(sum_{i != (0,0)} wrap(p_est - p_ref)^2 / (M_t N_RF - 1)) in degrees.
double phase_rmse_deg(const PhaseDeviations &estimate, const PhaseDeviations &reference);

} // namespace otacal
