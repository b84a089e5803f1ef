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

#include "otacal/model.hpp"

#include <array>
#include <vector>

namespace otacal
{

// Vectorized design B = [B_1; ...; B_K] with B_k = sqrt(beta) (A_k^T (x) w_k^H),
// A_k = F_k .* Omega. Row k * N_RF + n multiplies
// a_vec = vec(a_rx a_tx^H) = conj(a_tx) (x) a_rx, whose entry tx * M_r + rx
// couples transmit element tx with receive element rx.
struct StackedDesign
{
    CMat b;
    ArrayPair arrays;
};

StackedDesign stack_design(const PhaseDeviations &deviations, const BeamSchedule &schedule, const ArrayPair &arrays,
                           double beta);

// vec of the matched-filter outputs in the row order of StackedDesign.
CVec stack_measurements(const MeasurementSet &measurements);

CVec steering_vec(const Angles &angles, const ArrayPair &arrays);

// Concentrated objective |y^H B a|^2 / ||B a||^2 (least-squares gain substituted).
// Throws NumericalError when ||B a||^2 < 1e-300.
double objective_f(const Angles &angles, const StackedDesign &design, const CVec &y_vec);

// Analytic gradient of objective_f in the order (theta_r, phi_r, theta_t, phi_t).
Eigen::Vector4d objective_gradient(const Angles &angles, const StackedDesign &design, const CVec &y_vec);

// gamma = a^H B^H y / (a^H B^H B a)
cplx ls_gain(const Angles &angles, const StackedDesign &design, const CVec &y_vec);

// min over gamma of ||y - gamma B a||^2, evaluated from the residual itself.
double concentrated_residual(const Angles &angles, const StackedDesign &design, const CVec &y_vec);

// Tensors over the n_fft^4 frequency grid. Axes are (theta_r, phi_r, theta_t, phi_t),
// i.e. (rx x, rx y, tx x, tx y); cell (i0, i1, i2, i3) sits at frequencies i/n_fft.
struct AngleGrid
{
    int n_fft = 0;
    std::vector<double> q; // sum over rows of |b_m^T a|^2
    std::vector<double> r; // |y^H B a|^2
    std::vector<double> t; // r / q on valid cells, 0 elsewhere
    std::vector<unsigned char> valid;

    std::size_t cell(int i0, int i1, int i2, int i3) const
    {
        const std::size_t n = std::size_t(n_fft);
        return ((std::size_t(i0) * n + std::size_t(i1)) * n + std::size_t(i2)) * n + std::size_t(i3);
    }
};

// How the denominator tensor is assembled. PerRow transforms every row of B and
// sums the squared magnitudes; Correlation transforms the lag sums of B^T conj(B)
// once, which gives the same tensor at a fraction of the cost.
enum class QRoute
{
    PerRow,
    Correlation
};

struct CoarseEstimate
{
    Angles angles;
    std::array<int, 4> cell{};
    AngleGrid grid;
};

// Folds a grid frequency into [-1/2, 1/2).
double fold_frequency(double f);

// Angles for grid frequencies (f_theta_r, f_phi_r, f_theta_t, f_phi_t) after folding.
Angles angles_from_frequencies(const std::array<double, 4> &freqs);

// Throws std::invalid_argument if n_fft is not a power of two covering every array
// dimension, NumericalError if no cell carries design energy.
CoarseEstimate coarse_search_4dfft(const StackedDesign &design, const CVec &y_vec, int n_fft,
                                   QRoute route = QRoute::Correlation);

// Direction cosines (u_r, v_r, u_t, v_t), u = sin(theta) sin(phi), v = cos(phi). The
// steering vector is 2-periodic in each, so this chart has no edge.
Eigen::Vector4d cosines_from_angles(const Angles &angles);

// Folds each cosine into [-1, 1) and clips u onto the visible disk u^2 + v^2 <= 1.
Angles angles_from_cosines(const Eigen::Vector4d &cosines);

CVec steering_from_cosines(const Eigen::Vector4d &cosines, const ArrayPair &arrays);

struct RefineOptions
{
    int max_iterations = 100;
    int max_backtracks = 50;
    double armijo_c = 1e-4;
    double shrink = 0.5;
    double initial_step = 1e-2;
    double relative_tolerance = 1e-10;
    double gradient_tolerance = 1e-13;
};

struct RefineResult
{
    Angles angles;
    double objective = 0.0;
    int iterations = 0;
};

struct CosineFit
{
    Eigen::Vector4d cosines = Eigen::Vector4d::Zero(); // folded into [-1, 1)
    cplx gamma{0.0, 0.0};
    double residual = 0.0; // min over gamma of ||y - gamma B a||^2
    int iterations = 0;
};

// Refinement in direction cosines; the result may lie outside the visible disk.
CosineFit refine_cosines(const Eigen::Vector4d &start, const StackedDesign &design, const CVec &y_vec,
                         const RefineOptions &options = {});

// Gradient steps with Armijo backtracking and Barzilai-Borwein trial steps. Iterates
// move in the direction cosines (sin(theta) sin(phi), cos(phi)) of both arrays, where
// the response is smooth and periodic, so estimates can cross the edge of the
// visible region. The objective never decreases between accepted iterates and the
// result is never worse than the start.
RefineResult refine_backtracking(const Angles &start, const StackedDesign &design, const CVec &y_vec,
                                 const RefineOptions &options = {});

} // namespace otacal
