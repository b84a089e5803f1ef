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

namespace otacal
{

// Fisher information for eta = [p, theta_r, phi_r, Re gamma, Im gamma], where p
// holds the phases of every deviation except entry (0,0) in column-major order.
// The transmit angles and the (0,0) phase are held at their given values.
struct FimReport
{
    RMat fim;
    RVec crb_phases;          // radians^2, first M_t N_RF - 1 diagonal entries of fim^-1
    double crb_rmse_deg = 0.0; // sqrt(mean(crb_phases)) in degrees
    double condition = 0.0;    // of the diagonally equilibrated fim
};

// blkdiag(C_1, ..., C_N): rows n * K + k, columns n * M_t + i.
CMat build_stacked_design(const ChannelParams &channel, const BeamSchedule &schedule, const ArrayPair &arrays,
                          double beta);

// d mu / d eta with mu = D vec(Omega), rows ordered as in build_stacked_design.
CMat mean_jacobian(const ChannelParams &channel, const PhaseDeviations &deviations, const BeamSchedule &schedule,
                   const ArrayPair &arrays, double beta);

// F = (2 L / sigma2) Re(J^H J). Throws NumericalError (reporting the condition number)
// when the equilibrated information matrix has condition number above 1e12.
FimReport fisher_information(const ChannelParams &channel, const PhaseDeviations &deviations,
                             const BeamSchedule &schedule, const ArrayPair &arrays, double beta, double sigma2, int l);

} // namespace otacal
