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

#include <string>
#include <vector>

namespace otacal
{

// Pattern design for one RF chain: minimize tr(R^-1) over the M_t x K unit-modulus
// pattern matrix F_bar, with R = E + conj(E), E = diag(conj w) conj(F_bar) diag(g) F_bar^T diag(w).
struct BeamDesignProblem
{
    RVec g;             // |w_k^H a_rx(theta_r, phi_r)|^2, length K
    CVec omega_assumed; // length M_t, all-ones in practice

    int m_t() const { return int(omega_assumed.size()); }
    int k() const { return int(g.size()); }

    // Throws std::invalid_argument on negative gains or k < m_t.
    void validate() const;
};

// Gains from the receive patterns and the (possibly perturbed) receive direction.
BeamDesignProblem make_beam_problem(const std::vector<CVec> &w, double theta_r, double phi_r, const UpaGeometry &rx,
                                    int m_t);

// R (M_t x M_t, real symmetric).
RMat phase_information(const CMat &f_bar, const BeamDesignProblem &problem);

// tr(R^-1). Throws NumericalError when R has condition number above 1e12.
double objective_h(const CMat &f_bar, const BeamDesignProblem &problem);

// -2 diag(conj w) R^-2 diag(w) F_bar diag(g): the conjugate (Wirtinger) gradient of h.
// The real gradient dh/dRe + j dh/dIm is twice this. Throws as objective_h.
CMat gradient_h(const CMat &f_bar, const BeamDesignProblem &problem);

struct BeamOptOptions
{
    RcgOptions rcg{300, 1e-7, 1e-4, 0.5, 50, 0.1};
};

struct BeamOptResult
{
    CMat f_bar;
    double h_initial = 0.0;
    double h_final = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string diagnostic; // non-empty when f0 was returned unchanged because R was singular
};

// RCG on the complex circle manifold. Candidates with singular R are rejected by the
// line search, so h(result) <= h(f0).
BeamOptResult optimize_beams(const BeamDesignProblem &problem, const CMat &f0, const BeamOptOptions &options = {});

// Optimizes every chain of `initial` independently and returns the updated schedule.
BeamSchedule optimize_schedule(const BeamDesignProblem &problem, const BeamSchedule &initial,
                               const BeamOptOptions &options = {});

} // namespace otacal
