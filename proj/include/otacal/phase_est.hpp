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

#include "otacal/complex_circle.hpp"
#include "otacal/model.hpp"

namespace otacal
{

// Per-chain linear model y_bar = C omega_n + noise. Row k of C is
// sqrt(beta) (w_k^H H) .* f_{k,n}^T; y_bar(k) is entry n of the k-th measurement.
struct ChainDesign
{
    CMat c;
    CVec y_bar;
};

// `chain` is zero-based. Throws std::out_of_range for a bad chain index and
// std::invalid_argument on dimension mismatch.
ChainDesign build_chain_design(const CMat &h, const BeamSchedule &schedule, int chain, double beta,
                               const MeasurementSet &measurements);

// g(omega) = ||y_bar - C omega||^2
double phase_cost(const ChainDesign &design, const CVec &omega);

// -C^H (y_bar - C omega), the conjugate (Wirtinger) gradient of g. The real
// gradient with respect to (Re omega, Im omega) is twice this.
CVec phase_gradient(const ChainDesign &design, const CVec &omega);

// Riemannian gradient: real gradient projected onto the tangent space at omega.
CVec phase_riemannian_gradient(const ChainDesign &design, const CVec &omega);

// Minimizes g over unit-modulus omega by RCG starting from omega0.
// The first trial step of every line search is the exact minimizer of g along
// the (unretracted) search direction.
RcgResult rcg_unit_modulus(const ChainDesign &design, const CVec &omega0, const RcgOptions &options = {});

} // namespace otacal
