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

#include <catch_amalgamated.hpp>

#include "otacal/crb.hpp"
#include "otacal/phase_est.hpp"
#include "otacal/rng.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace otacal;

namespace
{

struct Instance
{
    ArrayPair arrays;
    ChannelParams channel;
    PhaseDeviations dev;
    BeamSchedule schedule;
};

Instance instance(const ArrayPair &arrays, int k, int n_rf, std::uint64_t seed)
{
    Rng rng(seed);
    Instance in;
    in.arrays = arrays;
    in.channel = {complex_normal(rng),
                  {uniform(rng, -1.3, 1.3), uniform(rng, 0.3, 2.8), uniform(rng, -1.3, 1.3), uniform(rng, 0.3, 2.8)}};
    in.dev = PhaseDeviations::from_phases(0.3 * RMat::Random(arrays.tx.size(), n_rf));
    for (int i = 0; i < k; ++i)
    {
        in.schedule.f.push_back(random_unit_modulus(arrays.tx.size(), n_rf, rng));
        in.schedule.w.push_back(random_unit_modulus(arrays.rx.size(), 1, rng).col(0));
    }
    return in;
}

// mu(eta) assembled from the forward model, eta = [p_1.., theta_r, phi_r, Re gamma, Im gamma].
CVec mean_of(const RVec &eta, const Instance &in, double beta)
{
    RMat phases = in.dev.phases();
    const Eigen::Index count = phases.size() - 1;
    for (Eigen::Index e = 1; e <= count; ++e)
        phases(e % phases.rows(), e / phases.rows()) = eta(e - 1);
    ChannelParams ch = in.channel;
    ch.angles.theta_r = eta(count);
    ch.angles.phi_r = eta(count + 1);
    ch.gamma = {eta(count + 2), eta(count + 3)};
    const CMat y = noiseless_measurements(build_channel(ch, in.arrays), PhaseDeviations::from_phases(phases), in.schedule,
                                          beta);
    return y.reshaped();
}

RVec eta_of(const Instance &in)
{
    const RMat phases = in.dev.phases();
    const Eigen::Index count = phases.size() - 1;
    RVec eta(count + 4);
    for (Eigen::Index e = 1; e <= count; ++e)
        eta(e - 1) = phases(e % phases.rows(), e / phases.rows());
    eta(count) = in.channel.angles.theta_r;
    eta(count + 1) = in.channel.angles.phi_r;
    eta(count + 2) = in.channel.gamma.real();
    eta(count + 3) = in.channel.gamma.imag();
    return eta;
}

} // namespace

TEST_CASE("crb - Stacked design")
{
    const Instance one = instance({{2, 2}, {2, 2}}, 6, 1, 1);
    const CMat d1 = build_stacked_design(one.channel, one.schedule, one.arrays, 1.0);
    MeasurementSet m1;
    m1.y_tilde = CMat::Zero(6, 1);
    CHECK((d1 - build_chain_design(build_channel(one.channel, one.arrays), one.schedule, 0, 1.0, m1).c).norm() < 1e-14);

    const Instance in = instance({{2, 3}, {2, 2}}, 5, 3, 2);
    const CMat d = build_stacked_design(in.channel, in.schedule, in.arrays, 2.0);
    REQUIRE(d.rows() == 15);
    REQUIRE(d.cols() == 18);
    const CMat h = build_channel(in.channel, in.arrays);
    MeasurementSet m;
    m.y_tilde = CMat::Zero(5, 3);
    for (int n = 0; n < 3; ++n)
    {
        const ChainDesign c = build_chain_design(h, in.schedule, n, 2.0, m);
        CHECK((d.block(n * 5, n * 6, 5, 6) - c.c).norm() < 1e-14);
        for (int o = 0; o < 3; ++o)
            if (o != n)
                CHECK(d.block(n * 5, o * 6, 5, 6).norm() == 0.0);
    }
    const CVec mu = d * in.dev.omega().reshaped();
    CHECK((mu - CVec(noiseless_measurements(h, in.dev, in.schedule, 2.0).reshaped())).norm() < 1e-12);

    ChannelParams silent = in.channel;
    silent.gamma = 0.0;
    CHECK(build_stacked_design(silent, in.schedule, in.arrays, 1.0).norm() == 0.0);
    CHECK_THROWS_AS(build_stacked_design(in.channel, in.schedule, {{3, 3}, {2, 2}}, 1.0), std::invalid_argument);
}

TEST_CASE("crb - Jacobian against central differences")
{
    const double h = 1e-6;
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
    {
        const Instance in = instance({{2, 2}, {3, 2}}, 12, 2, 100 + seed);
        const CMat jac = mean_jacobian(in.channel, in.dev, in.schedule, in.arrays, 1.5);
        const RVec eta = eta_of(in);
        REQUIRE(jac.cols() == eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i)
        {
            RVec ep = eta, em = eta;
            ep(i) += h;
            em(i) -= h;
            const CVec fd = (mean_of(ep, in, 1.5) - mean_of(em, in, 1.5)) / (2 * h);
            CHECK((jac.col(i) - fd).norm() <= 1e-6 * fd.norm());
        }
    }
}

TEST_CASE("crb - Single phase closed form")
{
    const Instance in = instance({{2, 1}, {2, 2}}, 8, 1, 3);
    const double sigma2 = 0.7;
    const int l = 3;
    const FimReport rep = fisher_information(in.channel, in.dev, in.schedule, in.arrays, 1.0, sigma2, l);
    const CMat d = build_stacked_design(in.channel, in.schedule, in.arrays, 1.0);
    REQUIRE(rep.crb_phases.size() == 1);
    CHECK(std::abs(rep.fim(0, 0) - 2.0 * l / sigma2 * d.col(1).squaredNorm()) < 1e-12 * rep.fim(0, 0));

    const Instance scalar = instance({{1, 1}, {2, 2}}, 8, 1, 4);
    const FimReport s = fisher_information(scalar.channel, scalar.dev, scalar.schedule, scalar.arrays, 1.0, 1.0, 1);
    CHECK(s.crb_phases.size() == 0);
    CHECK(s.fim.rows() == 4);
}

TEST_CASE("crb - Structural properties")
{
    const Instance in = instance({{3, 2}, {2, 2}}, 24, 2, 5);
    const FimReport a = fisher_information(in.channel, in.dev, in.schedule, in.arrays, 1.0, 0.5, 2);

    SECTION("Symmetric and positive semidefinite")
    {
        CHECK((a.fim - a.fim.transpose()).norm() == 0.0);
        const RVec lambda = Eigen::SelfAdjointEigenSolver<RMat>(a.fim).eigenvalues();
        CHECK(lambda.minCoeff() >= -1e-10 * a.fim.norm());
        CHECK((a.crb_phases.array() > 0.0).all());
        CHECK(std::abs(a.crb_rmse_deg - std::sqrt(a.crb_phases.mean()) * 180.0 / pi) < 1e-12);
        CHECK(a.condition >= 1.0);
    }

    SECTION("Doubling L halves the bound")
    {
        const FimReport b = fisher_information(in.channel, in.dev, in.schedule, in.arrays, 1.0, 0.5, 4);
        for (Eigen::Index i = 0; i < a.crb_phases.size(); ++i)
            CHECK(std::abs(b.crb_phases(i) / a.crb_phases(i) - 0.5) < 1e-10);
    }

    SECTION("Extra transmissions never raise the bound")
    {
        Instance more = in;
        Rng rng(6);
        for (int i = 0; i < 8; ++i)
        {
            more.schedule.f.push_back(random_unit_modulus(6, 2, rng));
            more.schedule.w.push_back(random_unit_modulus(4, 1, rng).col(0));
        }
        const FimReport b = fisher_information(more.channel, more.dev, more.schedule, more.arrays, 1.0, 0.5, 2);
        for (Eigen::Index i = 0; i < a.crb_phases.size(); ++i)
            CHECK(b.crb_phases(i) <= a.crb_phases(i) * (1.0 + 1e-10));
    }
}

TEST_CASE("crb - Unidentifiable configurations")
{
    const Instance in = instance({{4, 4}, {2, 2}}, 2, 2, 7);
    CHECK_THROWS_AS(fisher_information(in.channel, in.dev, in.schedule, in.arrays, 1.0, 1.0, 2), NumericalError);
    ChannelParams silent = in.channel;
    silent.gamma = 0.0;
    const Instance big = instance({{2, 2}, {2, 2}}, 16, 1, 8);
    CHECK_THROWS_AS(fisher_information(silent, big.dev, big.schedule, big.arrays, 1.0, 1.0, 2), NumericalError);
    CHECK_THROWS_AS(fisher_information(big.channel, big.dev, big.schedule, big.arrays, 1.0, 0.0, 2),
                    std::invalid_argument);
}
