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

#include "otacal/calibrator.hpp"
#include "otacal/phase_est.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace otacal
{

double calibration_cost(const MeasurementSet &measurements, const BeamSchedule &schedule, const ArrayPair &arrays,
                        const ChannelParams &channel, const PhaseDeviations &deviations)
{
    const CMat h = build_channel(channel, arrays);
    return (measurements.y_tilde -
            noiseless_measurements(h, deviations, schedule, measurements.pathloss_beta))
        .squaredNorm();
}

namespace
{

CMat channel_from_cosines(cplx gamma, const Eigen::Vector4d &c, const ArrayPair &arrays)
{
    return gamma * upa_response_cosines(c(0), c(1), arrays.rx) * upa_response_cosines(c(2), c(3), arrays.tx).adjoint();
}

double cost_for_channel(const MeasurementSet &measurements, const BeamSchedule &schedule, const CMat &h,
                        const PhaseDeviations &deviations)
{
    return (measurements.y_tilde - noiseless_measurements(h, deviations, schedule, measurements.pathloss_beta))
        .squaredNorm();
}

} // namespace

CalibrationResult run_bcd(const MeasurementSet &measurements, const BeamSchedule &schedule, const ArrayPair &arrays,
                          const CalibrationOptions &options)
{
    schedule.validate();
    if (schedule.m_t() != arrays.tx.size() || schedule.m_r() != arrays.rx.size())
        throw std::invalid_argument("run_bcd: schedule does not match array geometry");
    if (measurements.k() != schedule.k() || measurements.n_rf() != schedule.n_rf())
        throw std::invalid_argument("run_bcd: measurement count/shape does not match the schedule");

    const double beta = measurements.pathloss_beta;
    const CVec y_vec = stack_measurements(measurements);
    const double y2 = y_vec.squaredNorm();

    CalibrationResult res;
    res.deviations_est = PhaseDeviations::ones(schedule.m_t(), schedule.n_rf());

    // The channel is tracked in direction cosines so that estimates can pass over
    // the edge of the visible region between iterations.
    CosineFit fit;
    try
    {
        const StackedDesign design = stack_design(res.deviations_est, schedule, arrays, beta);
        const CoarseEstimate coarse = coarse_search_4dfft(design, y_vec, options.n_fft);
        fit = refine_cosines(cosines_from_angles(coarse.angles), design, y_vec, options.refine);
    }
    catch (const NumericalError &e)
    {
        throw NumericalError(std::string("run_bcd: initial channel estimate failed: ") + e.what());
    }
    res.cost_trace.push_back(cost_for_channel(measurements, schedule, channel_from_cosines(fit.gamma, fit.cosines, arrays),
                                              res.deviations_est));

    for (int it = 1; it <= options.max_outer_iterations; ++it)
    {
        const CosineFit previous_fit = fit;
        const PhaseDeviations previous_deviations = res.deviations_est;
        const CMat h = channel_from_cosines(fit.gamma, fit.cosines, arrays);
        CMat omega = res.deviations_est.omega();
        for (int n = 0; n < schedule.n_rf(); ++n)
        {
            const ChainDesign chain = build_chain_design(h, schedule, n, beta, measurements);
            omega.col(n) = rcg_unit_modulus(chain, omega.col(n), options.rcg).x;
        }
        res.deviations_est = PhaseDeviations(std::move(omega));

        try
        {
            const StackedDesign design = stack_design(res.deviations_est, schedule, arrays, beta);
            fit = refine_cosines(fit.cosines, design, y_vec, options.refine);
        }
        catch (const NumericalError &e)
        {
            throw NumericalError("run_bcd: channel refinement failed at outer iteration " + std::to_string(it) +
                                 ": " + e.what());
        }

        const double previous = res.cost_trace.back();
        const double cost = cost_for_channel(measurements, schedule, channel_from_cosines(fit.gamma, fit.cosines, arrays),
                                       res.deviations_est);
        res.outer_iterations = it;
        if (cost > previous)
        {
            // Only rounding can raise the cost here; keep the previous pair and stop.
            fit = previous_fit;
            res.deviations_est = previous_deviations;
            res.cost_trace.push_back(previous);
            break;
        }
        res.cost_trace.push_back(cost);
        if (cost <= options.cost_floor * y2 || previous - cost < options.min_relative_decrease * previous)
            break;
    }

    // Transmit cosines outside the visible disk are moved onto it by a gauge step, which
    // shifts the excess linear phase into the deviations and leaves the model unchanged.
    Eigen::Vector4d c = fit.cosines;
    const double u_max = std::sqrt(std::max(0.0, 1.0 - c(3) * c(3)));
    const double u_in = std::clamp(c(2), -u_max, u_max);
    if (u_in != c(2))
    {
        const CVec shift = upa_response_cosines(c(2) - u_in, 0.0, arrays.tx);
        res.deviations_est = PhaseDeviations(shift.conjugate().asDiagonal() * res.deviations_est.omega());
        c(2) = u_in;
    }
    res.channel_est = {fit.gamma, angles_from_cosines(c)};
    return res;
}

CVec gauge_vector(const GaugeParams &gauge, const UpaGeometry &tx)
{
    return upa_response(gauge.chi1, gauge.chi2, tx);
}

CMat gauge_channel(const CMat &h, const GaugeParams &gauge, const UpaGeometry &tx)
{
    if (h.cols() != tx.size())
        throw std::invalid_argument("gauge_channel: channel columns must equal the transmit array size");
    return std::polar(1.0, gauge.beta_phase) * (h * gauge_vector(gauge, tx).asDiagonal());
}

PhaseDeviations gauge_deviations(const PhaseDeviations &deviations, const GaugeParams &gauge, const UpaGeometry &tx)
{
    if (deviations.m_t() != tx.size())
        throw std::invalid_argument("gauge_deviations: deviation rows must equal the transmit array size");
    const CVec t = gauge_vector(gauge, tx);
    return PhaseDeviations(std::polar(1.0, -gauge.beta_phase) * (t.conjugate().asDiagonal() * deviations.omega()));
}

namespace
{

// s(chi) = sum_i conj(t_i(chi)) q_i; the aligned mismatch is 2 M N - 2 |s|.
struct GaugeCorrelation
{
    const CVec &q;
    const UpaGeometry &tx;

    cplx value(double chi1, double chi2) const { return gauge_vector({0.0, chi1, chi2}, tx).dot(q); }

    // d|s|^2 / d(chi1, chi2)
    Eigen::Vector2d gradient(double chi1, double chi2) const
    {
        const CVec t = gauge_vector({0.0, chi1, chi2}, tx);
        const cplx s = t.dot(q);
        const double du1 = std::cos(chi1) * std::sin(chi2);
        const double du2 = std::sin(chi1) * std::cos(chi2);
        const double dv2 = -std::sin(chi2);
        cplx ds1 = 0.0, ds2 = 0.0;
        for (int ix = 0; ix < tx.x_count; ++ix)
            for (int iy = 0; iy < tx.y_count; ++iy)
            {
                const int i = tx.index(ix, iy);
                const cplx term = -imag_unit * pi * std::conj(t(i)) * q(i);
                ds1 += term * (ix * du1);
                ds2 += term * (ix * du2 + iy * dv2);
            }
        return {2.0 * (std::conj(s) * ds1).real(), 2.0 * (std::conj(s) * ds2).real()};
    }
};

} // namespace

AlignedDeviations align_gauge(const PhaseDeviations &estimate, const PhaseDeviations &reference,
                              const UpaGeometry &tx)
{
    if (estimate.m_t() != reference.m_t() || estimate.n_rf() != reference.n_rf())
        throw std::invalid_argument("align_gauge: estimate and reference shapes differ");
    if (estimate.m_t() != tx.size())
        throw std::invalid_argument("align_gauge: deviation rows must equal the transmit array size");

    const CVec q = (reference.omega().conjugate().cwiseProduct(estimate.omega())).rowwise().sum();
    const GaugeCorrelation corr{q, tx};

    constexpr int grid = 64;
    double best1 = 0.0, best2 = pi / 2, best_val = -1.0;
    for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j)
        {
            const double c1 = -pi / 2 + pi * i / grid;
            const double c2 = pi * j / grid;
            const double v = std::norm(corr.value(c1, c2));
            if (v > best_val)
            {
                best_val = v;
                best1 = c1;
                best2 = c2;
            }
        }

    // Armijo descent on the residual itself, which stays accurate near a perfect fit;
    // its gradient is -grad|s|^2 / |s|.
    auto residual = [&](const Eigen::Vector2d &chi) {
        const GaugeParams gp{std::arg(corr.value(chi(0), chi(1))), chi(0), chi(1)};
        return (gauge_deviations(estimate, gp, tx).omega() - reference.omega()).squaredNorm();
    };
    auto descent_gradient = [&](const Eigen::Vector2d &chi) -> Eigen::Vector2d {
        const double mag = std::abs(corr.value(chi(0), chi(1)));
        if (!(mag > 0.0))
            return Eigen::Vector2d::Zero();
        return -corr.gradient(chi(0), chi(1)) / mag;
    };

    Eigen::Vector2d x(best1, best2);
    double fx = residual(x);
    Eigen::Vector2d g = descent_gradient(x);
    double step = 1e-3;
    for (int it = 0; it < 200; ++it)
    {
        const double g2 = g.squaredNorm();
        if (g2 == 0.0)
            break;
        bool accepted = false;
        Eigen::Vector2d xn;
        double fn = fx;
        for (int b = 0; b <= 50; ++b)
        {
            xn = x - step * g;
            fn = residual(xn);
            if (fn <= fx - 1e-4 * step * g2)
            {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted)
            break;
        const Eigen::Vector2d gn = descent_gradient(xn);
        const Eigen::Vector2d s = xn - x;
        const double sy = s.dot(gn - g);
        step = sy > 0.0 ? s.squaredNorm() / sy : 2.0 * step;
        x = xn;
        fx = fn;
        g = gn;
    }

    const Angles folded = wrap_angles({x(0), x(1), 0.0, pi / 2});
    AlignedDeviations out;
    out.gauge.chi1 = folded.theta_r;
    out.gauge.chi2 = folded.phi_r;
    out.gauge.beta_phase = std::arg(corr.value(out.gauge.chi1, out.gauge.chi2));
    out.deviations = gauge_deviations(estimate, out.gauge, tx);
    out.mismatch = (out.deviations.omega() - reference.omega()).norm();
    return out;
}

CanonicalPair canonical_gauge(const PhaseDeviations &deviations, const ChannelParams &channel,
                              const UpaGeometry &tx)
{
    CanonicalPair out;
    out.gauge = {std::arg(deviations.omega()(0, 0)), channel.angles.theta_t, channel.angles.phi_t};
    out.deviations = gauge_deviations(deviations, out.gauge, tx);
    out.channel.gamma = channel.gamma * std::polar(1.0, out.gauge.beta_phase);
    out.channel.angles = channel.angles;
    out.channel.angles.theta_t = 0.0;
    out.channel.angles.phi_t = pi / 2;
    return out;
}

double phase_rmse_deg(const PhaseDeviations &estimate, const PhaseDeviations &reference)
{
    if (estimate.m_t() != reference.m_t() || estimate.n_rf() != reference.n_rf())
        throw std::invalid_argument("phase_rmse_deg: shapes differ");
    const CMat &e = estimate.omega();
    const CMat &r = reference.omega();
    const Eigen::Index count = e.size() - 1;
    if (count <= 0)
        return 0.0;
    double sum = 0.0;
    for (Eigen::Index c = 0; c < e.cols(); ++c)
        for (Eigen::Index i = 0; i < e.rows(); ++i)
        {
            if (i == 0 && c == 0)
                continue;
            const double d = std::arg(e(i, c) * std::conj(r(i, c)));
            sum += d * d;
        }
    return std::sqrt(sum / double(count)) * 180.0 / pi;
}

} // namespace otacal
