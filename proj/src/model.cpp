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

#include "otacal/model.hpp"
#include "otacal/rng.hpp"

#include <cmath>
#include <string>

namespace otacal
{

UpaGeometry::UpaGeometry(int x, int y) : x_count(x), y_count(y)
{
    if (x < 1 || y < 1)
        throw std::invalid_argument("UpaGeometry: element counts must be >= 1, got " + std::to_string(x) + "x" +
                                    std::to_string(y));
}

Angles wrap_angles(const Angles &a)
{
    auto fold = [](double &theta, double &phi) {
        theta = std::remainder(theta, 2.0 * pi);
        phi = std::remainder(phi, 2.0 * pi);
        if (phi < 0.0)
        {
            phi = -phi;
            theta = -theta;
        }
        if (theta > pi / 2)
            theta = pi - theta;
        else if (theta < -pi / 2)
            theta = -pi - theta;
    };
    Angles out = a;
    fold(out.theta_r, out.phi_r);
    fold(out.theta_t, out.phi_t);
    return out;
}

bool angles_in_range(const Angles &a)
{
    auto ok = [](double theta, double phi) {
        return std::isfinite(theta) && std::isfinite(phi) && theta >= -pi / 2 && theta <= pi / 2 && phi >= 0.0 &&
               phi <= pi;
    };
    return ok(a.theta_r, a.phi_r) && ok(a.theta_t, a.phi_t);
}

bool is_unit_modulus(const CMat &m, double tol)
{
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            if (!(std::abs(std::abs(m(r, c)) - 1.0) <= tol))
                return false;
    return true;
}

PhaseDeviations::PhaseDeviations(CMat omega) : omega_(std::move(omega))
{
    if (omega_.size() == 0)
        throw std::invalid_argument("PhaseDeviations: empty matrix");
    if (!is_unit_modulus(omega_))
        throw std::invalid_argument("PhaseDeviations: entries must have unit modulus");
}

PhaseDeviations PhaseDeviations::from_phases(const RMat &phases)
{
    CMat omega(phases.rows(), phases.cols());
    for (Eigen::Index c = 0; c < phases.cols(); ++c)
        for (Eigen::Index r = 0; r < phases.rows(); ++r)
            omega(r, c) = std::polar(1.0, phases(r, c));
    return PhaseDeviations(std::move(omega));
}

PhaseDeviations PhaseDeviations::ones(int m_t, int n_rf)
{
    return PhaseDeviations(CMat::Ones(m_t, n_rf));
}

RMat PhaseDeviations::phases() const
{
    return omega_.unaryExpr([](const cplx &z) { return std::arg(z); }).real();
}

void BeamSchedule::validate() const
{
    if (f.empty() || f.size() != w.size())
        throw std::invalid_argument("BeamSchedule: need K >= 1 transmit and receive patterns of equal count");
    for (std::size_t k = 0; k < f.size(); ++k)
    {
        if (f[k].rows() != f[0].rows() || f[k].cols() != f[0].cols() || w[k].size() != w[0].size())
            throw std::invalid_argument("BeamSchedule: pattern " + std::to_string(k) + " has inconsistent shape");
        if (!is_unit_modulus(f[k]) || !is_unit_modulus(w[k]))
            throw std::invalid_argument("BeamSchedule: pattern " + std::to_string(k) + " is not unit-modulus");
    }
}

CMat BeamSchedule::chain_patterns(int chain) const
{
    if (chain < 0 || chain >= n_rf())
        throw std::out_of_range("BeamSchedule: chain index " + std::to_string(chain) + " out of range");
    CMat f_bar(m_t(), k());
    for (int k = 0; k < this->k(); ++k)
        f_bar.col(k) = f[k].col(chain);
    return f_bar;
}

void BeamSchedule::set_chain_patterns(int chain, const CMat &f_bar)
{
    if (chain < 0 || chain >= n_rf())
        throw std::out_of_range("BeamSchedule: chain index " + std::to_string(chain) + " out of range");
    if (f_bar.rows() != m_t() || f_bar.cols() != k())
        throw std::invalid_argument("BeamSchedule: chain patterns must be M_t x K");
    for (int k = 0; k < this->k(); ++k)
        f[k].col(chain) = f_bar.col(k);
}

Pilot::Pilot(CMat s) : s_(std::move(s))
{
    if (s_.rows() < 1 || s_.cols() < s_.rows())
        throw std::invalid_argument("Pilot: need L >= N_RF >= 1");
}

CVec upa_response(double theta, double phi, const UpaGeometry &geom)
{
    return upa_response_cosines(std::sin(theta) * std::sin(phi), std::cos(phi), geom);
}

CVec upa_response_cosines(double u, double v, const UpaGeometry &geom)
{
    CVec a(geom.size());
    for (int ix = 0; ix < geom.x_count; ++ix)
        for (int iy = 0; iy < geom.y_count; ++iy)
            a(geom.index(ix, iy)) = std::polar(1.0, pi * (ix * u + iy * v));
    return a;
}

CMat build_channel(const ChannelParams &params, const ArrayPair &arrays)
{
    const Angles &a = params.angles;
    const CVec a_rx = upa_response(a.theta_r, a.phi_r, arrays.rx);
    const CVec a_tx = upa_response(a.theta_t, a.phi_t, arrays.tx);
    return params.gamma * a_rx * a_tx.adjoint();
}

namespace
{

// exp(-j 2 pi num / den), exact on quarter turns.
cplx unit_root(long num, long den)
{
    num %= den;
    if ((4 * num) % den == 0)
    {
        switch ((4 * num) / den)
        {
        case 0: return {1.0, 0.0};
        case 1: return {0.0, -1.0};
        case 2: return {-1.0, 0.0};
        default: return {0.0, 1.0};
        }
    }
    return std::polar(1.0, -2.0 * pi * double(num) / double(den));
}

} // namespace

Pilot synth_pilot(int n_rf, int l)
{
    if (n_rf < 1 || l < n_rf)
        throw std::invalid_argument("synth_pilot: need l >= n_rf >= 1 (got n_rf=" + std::to_string(n_rf) +
                                    ", l=" + std::to_string(l) + ")");
    CMat s(n_rf, l);
    for (int n = 0; n < n_rf; ++n)
        for (int i = 0; i < l; ++i)
            s(n, i) = unit_root(long(n) * i, l);
    return Pilot(std::move(s));
}

CMat noiseless_measurements(const CMat &h, const PhaseDeviations &deviations, const BeamSchedule &schedule,
                            double beta)
{
    const CMat &omega = deviations.omega();
    if (h.cols() != omega.rows() || schedule.m_t() != omega.rows() || schedule.n_rf() != omega.cols() ||
        schedule.m_r() != h.rows())
        throw std::invalid_argument("noiseless_measurements: dimension mismatch between channel, deviations and "
                                    "schedule");
    const double amp = std::sqrt(beta);
    CMat y(schedule.k(), omega.cols());
    for (int k = 0; k < schedule.k(); ++k)
    {
        const Eigen::RowVectorXcd wh = schedule.w[k].adjoint() * h;
        y.row(k) = amp * (wh * schedule.f[k].cwiseProduct(omega));
    }
    return y;
}

MeasurementSet simulate_measurements(const ChannelParams &params, const PhaseDeviations &deviations,
                                     const BeamSchedule &schedule, const Pilot &pilot, const ArrayPair &arrays,
                                     double sigma2, double beta, std::uint64_t seed)
{
    schedule.validate();
    if (schedule.m_t() != arrays.tx.size() || schedule.m_r() != arrays.rx.size())
        throw std::invalid_argument("simulate_measurements: schedule does not match array geometry");
    if (deviations.m_t() != arrays.tx.size() || deviations.n_rf() != schedule.n_rf())
        throw std::invalid_argument("simulate_measurements: deviations do not match schedule");
    if (pilot.n_rf() != schedule.n_rf())
        throw std::invalid_argument("simulate_measurements: pilot rows must equal N_RF");
    if (!(sigma2 >= 0.0) || !(beta > 0.0))
        throw std::invalid_argument("simulate_measurements: need sigma2 >= 0 and beta > 0");

    const CMat clean = noiseless_measurements(build_channel(params, arrays), deviations, schedule, beta);
    const CMat &s = pilot.s();
    const double l = pilot.l();

    Rng rng(seed);
    MeasurementSet out;
    out.y_tilde.resize(schedule.k(), schedule.n_rf());
    out.noise_var = sigma2 / l;
    out.pathloss_beta = beta;
    Eigen::RowVectorXcd block(pilot.l());
    for (int k = 0; k < schedule.k(); ++k)
    {
        block = clean.row(k) * s;
        if (sigma2 > 0.0)
            for (int i = 0; i < pilot.l(); ++i)
                block(i) += complex_normal(rng, sigma2);
        out.y_tilde.row(k) = block * s.adjoint() / l;
    }
    return out;
}

} // namespace otacal
