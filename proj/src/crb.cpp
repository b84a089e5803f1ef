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

#include "otacal/crb.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <sstream>

namespace otacal
{

namespace
{

void check_shapes(const BeamSchedule &schedule, const ArrayPair &arrays)
{
    schedule.validate();
    if (schedule.m_t() != arrays.tx.size() || schedule.m_r() != arrays.rx.size())
        throw std::invalid_argument("crb: schedule does not match array geometry");
}

// mu for a channel matrix h, stacked chain-major.
CVec stacked_mean(const CMat &h, const CMat &omega, const BeamSchedule &schedule, double amp)
{
    const int k_count = schedule.k();
    CVec mu(Eigen::Index(k_count) * omega.cols());
    for (int k = 0; k < k_count; ++k)
    {
        const Eigen::RowVectorXcd y = amp * (schedule.w[k].adjoint() * h) * schedule.f[k].cwiseProduct(omega);
        for (Eigen::Index n = 0; n < omega.cols(); ++n)
            mu(n * k_count + k) = y(n);
    }
    return mu;
}

} // namespace

CMat build_stacked_design(const ChannelParams &channel, const BeamSchedule &schedule, const ArrayPair &arrays,
                          double beta)
{
    check_shapes(schedule, arrays);
    const int k_count = schedule.k();
    const int m_t = schedule.m_t();
    const int n_rf = schedule.n_rf();
    const double amp = std::sqrt(beta);
    const CMat h = build_channel(channel, arrays);

    CMat d = CMat::Zero(Eigen::Index(k_count) * n_rf, Eigen::Index(m_t) * n_rf);
    for (int k = 0; k < k_count; ++k)
    {
        const Eigen::RowVectorXcd wh = amp * (schedule.w[k].adjoint() * h);
        for (int n = 0; n < n_rf; ++n)
            d.block(Eigen::Index(n) * k_count + k, Eigen::Index(n) * m_t, 1, m_t) =
                wh.cwiseProduct(schedule.f[k].col(n).transpose());
    }
    return d;
}

CMat mean_jacobian(const ChannelParams &channel, const PhaseDeviations &deviations, const BeamSchedule &schedule,
                   const ArrayPair &arrays, double beta)
{
    check_shapes(schedule, arrays);
    if (deviations.m_t() != schedule.m_t() || deviations.n_rf() != schedule.n_rf())
        throw std::invalid_argument("mean_jacobian: deviations do not match the schedule");

    const CMat &omega = deviations.omega();
    const Eigen::Index elements = omega.size();
    const double amp = std::sqrt(beta);
    const CMat d = build_stacked_design(channel, schedule, arrays, beta);

    CMat jac(d.rows(), elements - 1 + 4);
    for (Eigen::Index e = 1; e < elements; ++e)
        jac.col(e - 1) = (imag_unit * omega(e % omega.rows(), e / omega.rows())) * d.col(e);

    const Angles &a = channel.angles;
    const CVec a_r = upa_response(a.theta_r, a.phi_r, arrays.rx);
    const CVec a_t = upa_response(a.theta_t, a.phi_t, arrays.tx);
    const UpaGeometry &rx = arrays.rx;
    CVec d_theta(a_r.size()), d_phi(a_r.size());
    for (int mx = 0; mx < rx.x_count; ++mx)
        for (int my = 0; my < rx.y_count; ++my)
        {
            const int i = rx.index(mx, my);
            const double g_theta = pi * mx * std::cos(a.theta_r) * std::sin(a.phi_r);
            const double g_phi = pi * (mx * std::sin(a.theta_r) * std::cos(a.phi_r) - my * std::sin(a.phi_r));
            d_theta(i) = imag_unit * g_theta * a_r(i);
            d_phi(i) = imag_unit * g_phi * a_r(i);
        }

    const Eigen::Index base = elements - 1;
    jac.col(base) = stacked_mean(channel.gamma * d_theta * a_t.adjoint(), omega, schedule, amp);
    jac.col(base + 1) = stacked_mean(channel.gamma * d_phi * a_t.adjoint(), omega, schedule, amp);
    const CVec unit_gain = stacked_mean(a_r * a_t.adjoint(), omega, schedule, amp);
    jac.col(base + 2) = unit_gain;
    jac.col(base + 3) = imag_unit * unit_gain;
    return jac;
}

FimReport fisher_information(const ChannelParams &channel, const PhaseDeviations &deviations,
                             const BeamSchedule &schedule, const ArrayPair &arrays, double beta, double sigma2, int l)
{
    if (!(sigma2 > 0.0) || l < 1)
        throw std::invalid_argument("fisher_information: need sigma2 > 0 and l >= 1");

    const CMat jac = mean_jacobian(channel, deviations, schedule, arrays, beta);
    FimReport rep;
    rep.fim = (2.0 * l / sigma2) * (jac.adjoint() * jac).real();
    rep.fim = 0.5 * (rep.fim + rep.fim.transpose()).eval();

    const RVec diag = rep.fim.diagonal();
    if ((diag.array() <= 0.0).any())
    {
        rep.condition = std::numeric_limits<double>::infinity();
        throw NumericalError("fisher_information: a parameter carries no information (condition number inf)");
    }
    const RVec scale = diag.cwiseSqrt().cwiseInverse();
    const RMat equilibrated = scale.asDiagonal() * rep.fim * scale.asDiagonal();
    const Eigen::SelfAdjointEigenSolver<RMat> eig(equilibrated);
    const RVec &lambda = eig.eigenvalues();
    rep.condition = lambda(lambda.size() - 1) / lambda(0);
    if (!(lambda(0) > 0.0) || !(rep.condition <= 1e12))
    {
        std::ostringstream msg;
        msg << "fisher_information: information matrix is singular (condition number " << rep.condition << ")";
        throw NumericalError(msg.str());
    }

    const RMat inv_eq = eig.eigenvectors() * lambda.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    const RMat crb = scale.asDiagonal() * inv_eq * scale.asDiagonal();
    const Eigen::Index phases = deviations.omega().size() - 1;
    rep.crb_phases = crb.diagonal().head(phases);
    rep.crb_rmse_deg = phases > 0 ? std::sqrt(rep.crb_phases.mean()) * 180.0 / pi : 0.0;
    return rep;
}

} // namespace otacal
