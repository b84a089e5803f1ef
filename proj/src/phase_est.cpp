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

#include "otacal/phase_est.hpp"

#include <cmath>
#include <string>

namespace otacal
{

ChainDesign build_chain_design(const CMat &h, const BeamSchedule &schedule, int chain, double beta,
                               const MeasurementSet &measurements)
{
    if (chain < 0 || chain >= schedule.n_rf())
        throw std::out_of_range("build_chain_design: chain " + std::to_string(chain) + " outside [0, " +
                                std::to_string(schedule.n_rf()) + ")");
    if (h.rows() != schedule.m_r() || h.cols() != schedule.m_t() || measurements.k() != schedule.k() ||
        measurements.n_rf() != schedule.n_rf())
        throw std::invalid_argument("build_chain_design: dimension mismatch between channel, schedule and "
                                    "measurements");

    const double amp = std::sqrt(beta);
    ChainDesign d;
    d.c.resize(schedule.k(), schedule.m_t());
    for (int k = 0; k < schedule.k(); ++k)
        d.c.row(k) = amp * (schedule.w[k].adjoint() * h).cwiseProduct(schedule.f[k].col(chain).transpose());
    d.y_bar = measurements.y_tilde.col(chain);
    return d;
}

double phase_cost(const ChainDesign &design, const CVec &omega)
{
    return (design.y_bar - design.c * omega).squaredNorm();
}

CVec phase_gradient(const ChainDesign &design, const CVec &omega)
{
    return -design.c.adjoint() * (design.y_bar - design.c * omega);
}

CVec phase_riemannian_gradient(const ChainDesign &design, const CVec &omega)
{
    return circle::project_tangent(omega, 2.0 * phase_gradient(design, omega));
}

RcgResult rcg_unit_modulus(const ChainDesign &design, const CVec &omega0, const RcgOptions &options)
{
    if (design.c.cols() != omega0.size() || design.c.rows() != design.y_bar.size())
        throw std::invalid_argument("rcg_unit_modulus: dimension mismatch");

    const CostFn cost = [&](const CVec &w) { return phase_cost(design, w); };
    const GradFn egrad = [&](const CVec &w) -> CVec { return 2.0 * phase_gradient(design, w); };
    const StepHintFn hint = [&](const CVec &w, const CVec &dir) {
        const CVec cd = design.c * dir;
        const double denom = cd.squaredNorm();
        if (!(denom > 0.0))
            return 0.0;
        return circle::inner(cd, design.y_bar - design.c * w) / denom;
    };
    return rcg_minimize(omega0, cost, egrad, options, hint);
}

} // namespace otacal
