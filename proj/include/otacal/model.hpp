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

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace otacal
{

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr cplx imag_unit{0.0, 1.0};

// Raised when an estimator or bound cannot produce a meaningful value
// (degenerate design, singular information matrix, empty search grid).
class NumericalError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

// Rectangular array with half-wavelength spacing.
// Elements are indexed ix * y_count + iy (zero-based), which is the
// ordering of the Kronecker product a_x(theta, phi) (x) a_y(phi).
struct UpaGeometry
{
    int x_count = 1;
    int y_count = 1;

    UpaGeometry() = default;
    UpaGeometry(int x, int y);

    int size() const { return x_count * y_count; }
    int index(int ix, int iy) const { return ix * y_count + iy; }

    friend bool operator==(const UpaGeometry &, const UpaGeometry &) = default;
};

// Transmit (spaceborne) and receive (terminal) arrays.
struct ArrayPair
{
    UpaGeometry tx;
    UpaGeometry rx;
};

// Receive and transmit directions of the single path.
// theta in [-pi/2, pi/2], phi in [0, pi].
struct Angles
{
    double theta_r = 0.0;
    double phi_r = pi / 2;
    double theta_t = 0.0;
    double phi_t = pi / 2;
};

// Maps arbitrary angles onto the canonical ranges without changing either
// steering vector (the responses depend on sin(theta) sin(phi) and cos(phi)).
Angles wrap_angles(const Angles &a);

bool angles_in_range(const Angles &a);

struct ChannelParams
{
    cplx gamma{1.0, 0.0};
    Angles angles;
};

// Unit-modulus M_t x N_RF matrix; column n holds the deviations of RF chain n.
class PhaseDeviations
{
  public:
    PhaseDeviations() = default;
    explicit PhaseDeviations(CMat omega); // throws std::invalid_argument if any |entry| != 1

    static PhaseDeviations from_phases(const RMat &phases);
    static PhaseDeviations ones(int m_t, int n_rf);

    const CMat &omega() const { return omega_; }
    RMat phases() const;
    int m_t() const { return int(omega_.rows()); }
    int n_rf() const { return int(omega_.cols()); }

  private:
    CMat omega_;
};

// K transmissions: transmit patterns F_k (M_t x N_RF) and receive patterns w_k (M_r).
struct BeamSchedule
{
    std::vector<CMat> f;
    std::vector<CVec> w;

    int k() const { return int(f.size()); }
    int m_t() const { return f.empty() ? 0 : int(f.front().rows()); }
    int n_rf() const { return f.empty() ? 0 : int(f.front().cols()); }
    int m_r() const { return w.empty() ? 0 : int(w.front().size()); }

    // Throws std::invalid_argument on empty/ragged lists or non-unit-modulus entries.
    void validate() const;

    // Column `chain` of every F_k side by side: M_t x K.
    CMat chain_patterns(int chain) const;
    void set_chain_patterns(int chain, const CMat &f_bar);
};

// Pilot block S (N_RF x L) with S S^H = L I.
class Pilot
{
  public:
    explicit Pilot(CMat s);

    const CMat &s() const { return s_; }
    int n_rf() const { return int(s_.rows()); }
    int l() const { return int(s_.cols()); }

  private:
    CMat s_;
};

// Matched-filter outputs: row k of y_tilde is the 1 x N_RF vector of transmission k.
struct MeasurementSet
{
    CMat y_tilde;
    double noise_var = 0.0; // sigma^2 / L
    double pathloss_beta = 1.0;

    int k() const { return int(y_tilde.rows()); }
    int n_rf() const { return int(y_tilde.cols()); }
};

bool is_unit_modulus(const CMat &m, double tol = 1e-12);

// e^{j*pi*[ix sin(theta) sin(phi) + iy cos(phi)]} at linear index ix * y_count + iy.
CVec upa_response(double theta, double phi, const UpaGeometry &geom);

// Same response in direction cosines u = sin(theta) sin(phi), v = cos(phi).
CVec upa_response_cosines(double u, double v, const UpaGeometry &geom);

// H = gamma a_rx(theta_r, phi_r) a_tx(theta_t, phi_t)^H, M_r x M_t.
CMat build_channel(const ChannelParams &params, const ArrayPair &arrays);

// Rows of an L-point DFT: S(n, l) = exp(-j 2 pi n l / L).
// Throws std::invalid_argument unless l >= n_rf >= 1.
Pilot synth_pilot(int n_rf, int l);

// Noise-free sqrt(beta) w_k^H H (F_k .* Omega) for every k, stacked as K x N_RF.
CMat noiseless_measurements(const CMat &h, const PhaseDeviations &deviations, const BeamSchedule &schedule,
                            double beta);

// Transmits the pilot K times through the channel (received blocks of 1 x L with
// CN(0, sigma2) noise), then matched-filters each block with S^H / L.
MeasurementSet simulate_measurements(const ChannelParams &params, const PhaseDeviations &deviations,
                                     const BeamSchedule &schedule, const Pilot &pilot, const ArrayPair &arrays,
                                     double sigma2, double beta, std::uint64_t seed);

} // namespace otacal
