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

#include "otacal/beam_opt.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <sstream>

namespace otacal
{

void BeamDesignProblem::validate() const
{
    if (omega_assumed.size() < 1)
        throw std::invalid_argument("BeamDesignProblem: m_t must be positive");
    if ((g.array() < 0.0).any() || !g.allFinite())
        throw std::invalid_argument("BeamDesignProblem: gains must be finite and non-negative");
    if (k() < m_t())
        throw std::invalid_argument("BeamDesignProblem: need k >= m_t for an invertible R");
    if (!is_unit_modulus(omega_assumed))
        throw std::invalid_argument("BeamDesignProblem: omega_assumed must be unit-modulus");
}

BeamDesignProblem make_beam_problem(const std::vector<CVec> &w, double theta_r, double phi_r, const UpaGeometry &rx,
                                    int m_t)
{
    if (m_t < 1)
        throw std::invalid_argument("make_beam_problem: m_t must be positive");
    const CVec a_r = upa_response(theta_r, phi_r, rx);
    BeamDesignProblem p;
    p.g.resize(Eigen::Index(w.size()));
    for (std::size_t k = 0; k < w.size(); ++k)
    {
        if (w[k].size() != a_r.size())
            throw std::invalid_argument("make_beam_problem: receive pattern length must equal the receive array size");
        p.g(Eigen::Index(k)) = std::norm(w[k].dot(a_r));
    }
    p.omega_assumed = CVec::Ones(m_t);
    return p;
}

namespace
{

void check_pattern(const CMat &f_bar, const BeamDesignProblem &problem)
{
    if (f_bar.rows() != problem.m_t() || f_bar.cols() != problem.k())
        throw std::invalid_argument("beam_opt: pattern must be M_t x K");
}

struct Spectrum
{
    RVec lambda;
    RMat v;
};

Spectrum checked_spectrum(const RMat &r)
{
    const Eigen::SelfAdjointEigenSolver<RMat> eig(r);
    const RVec &lambda = eig.eigenvalues();
    const double cond = lambda(lambda.size() - 1) / lambda(0);
    if (!(lambda(0) > 0.0) || !(cond <= 1e12))
    {
        std::ostringstream msg;
        msg << "beam_opt: R is singular (condition number " << (lambda(0) > 0.0 ? cond : std::numeric_limits<double>::infinity())
            << "); need K >= M_t and non-degenerate patterns";
        throw NumericalError(msg.str());
    }
    return {lambda, eig.eigenvectors()};
}

} // namespace

RMat phase_information(const CMat &f_bar, const BeamDesignProblem &problem)
{
    check_pattern(f_bar, problem);
    const CMat a = problem.omega_assumed.asDiagonal() * f_bar;
    const CMat e = a.conjugate() * problem.g.asDiagonal() * a.transpose();
    const RMat r = 2.0 * e.real();
    return 0.5 * (r + r.transpose());
}

double objective_h(const CMat &f_bar, const BeamDesignProblem &problem)
{
    return checked_spectrum(phase_information(f_bar, problem)).lambda.cwiseInverse().sum();
}

CMat gradient_h(const CMat &f_bar, const BeamDesignProblem &problem)
{
    const Spectrum s = checked_spectrum(phase_information(f_bar, problem));
    const RMat r_inv2 = s.v * s.lambda.array().square().inverse().matrix().asDiagonal() * s.v.transpose();
    const CVec &w = problem.omega_assumed;
    return -2.0 * (w.conjugate().asDiagonal() * (r_inv2.cast<cplx>() * (w.asDiagonal() * f_bar))) *
           problem.g.asDiagonal();
}

BeamOptResult optimize_beams(const BeamDesignProblem &problem, const CMat &f0, const BeamOptOptions &options)
{
    problem.validate();
    check_pattern(f0, problem);
    if (!is_unit_modulus(f0))
        throw std::invalid_argument("optimize_beams: f0 must be unit-modulus");

    const Eigen::Index rows = f0.rows(), cols = f0.cols();
    auto as_matrix = [&](const CVec &x) { return Eigen::Map<const CMat>(x.data(), rows, cols); };
    const CostFn cost = [&](const CVec &x) {
        try
        {
            return objective_h(as_matrix(x), problem);
        }
        catch (const NumericalError &)
        {
            return std::numeric_limits<double>::infinity();
        }
    };
    const GradFn egrad = [&](const CVec &x) -> CVec {
        const CMat g = 2.0 * gradient_h(as_matrix(x), problem);
        return Eigen::Map<const CVec>(g.data(), g.size());
    };

    const CVec x0 = Eigen::Map<const CVec>(f0.data(), f0.size());
    BeamOptResult out;
    out.h_initial = cost(x0);
    if (!std::isfinite(out.h_initial))
    {
        out.f_bar = f0;
        out.h_final = out.h_initial;
        out.diagnostic = "optimize_beams: R is singular at the starting patterns; returned f0 unchanged";
        return out;
    }

    const RcgResult res = rcg_minimize(x0, cost, egrad, options.rcg);
    out.f_bar = as_matrix(res.x);
    out.h_final = res.cost;
    out.iterations = res.iterations;
    out.converged = res.converged;
    return out;
}

BeamSchedule optimize_schedule(const BeamDesignProblem &problem, const BeamSchedule &initial,
                               const BeamOptOptions &options)
{
    initial.validate();
    BeamSchedule out = initial;
    for (int n = 0; n < initial.n_rf(); ++n)
        out.set_chain_patterns(n, optimize_beams(problem, initial.chain_patterns(n), options).f_bar);
    return out;
}

} // namespace otacal
