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

#include "otacal/channel_est.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <string>

namespace otacal
{

StackedDesign stack_design(const PhaseDeviations &deviations, const BeamSchedule &schedule, const ArrayPair &arrays,
                           double beta)
{
    schedule.validate();
    const int m_t = arrays.tx.size();
    const int m_r = arrays.rx.size();
    const int n_rf = schedule.n_rf();
    if (schedule.m_t() != m_t || schedule.m_r() != m_r || deviations.m_t() != m_t || deviations.n_rf() != n_rf)
        throw std::invalid_argument("stack_design: dimension mismatch between deviations, schedule and arrays");
    if (!(beta > 0.0))
        throw std::invalid_argument("stack_design: beta must be positive");

    const double amp = std::sqrt(beta);
    StackedDesign design;
    design.arrays = arrays;
    design.b.resize(Eigen::Index(schedule.k()) * n_rf, Eigen::Index(m_r) * m_t);
    for (int k = 0; k < schedule.k(); ++k)
    {
        const CMat a_k = schedule.f[k].cwiseProduct(deviations.omega());
        const CVec w_conj = schedule.w[k].conjugate();
        for (int n = 0; n < n_rf; ++n)
        {
            auto row = design.b.row(Eigen::Index(k) * n_rf + n);
            for (int tx = 0; tx < m_t; ++tx)
                row.segment(Eigen::Index(tx) * m_r, m_r) = (amp * a_k(tx, n)) * w_conj.transpose();
        }
    }
    return design;
}

CVec stack_measurements(const MeasurementSet &measurements)
{
    const CMat &y = measurements.y_tilde;
    CVec out(y.size());
    for (Eigen::Index k = 0; k < y.rows(); ++k)
        for (Eigen::Index n = 0; n < y.cols(); ++n)
            out(k * y.cols() + n) = y(k, n);
    return out;
}

CVec steering_vec(const Angles &angles, const ArrayPair &arrays)
{
    const CVec a_r = upa_response(angles.theta_r, angles.phi_r, arrays.rx);
    const CVec a_t = upa_response(angles.theta_t, angles.phi_t, arrays.tx);
    const Eigen::Index m_r = a_r.size();
    CVec a(a_r.size() * a_t.size());
    for (Eigen::Index tx = 0; tx < a_t.size(); ++tx)
        a.segment(tx * m_r, m_r) = std::conj(a_t(tx)) * a_r;
    return a;
}

namespace
{

void check_inputs(const StackedDesign &design, const CVec &y_vec)
{
    if (design.b.rows() != y_vec.size())
        throw std::invalid_argument("channel_est: measurement vector length " + std::to_string(y_vec.size()) +
                                    " does not match design rows " + std::to_string(design.b.rows()));
    if (design.b.cols() != Eigen::Index(design.arrays.rx.size()) * design.arrays.tx.size())
        throw std::invalid_argument("channel_est: design columns do not match array sizes");
}

double design_energy(const CVec &ba)
{
    const double d = ba.squaredNorm();
    if (!(d >= 1e-300))
        throw NumericalError("channel_est: ||B a||^2 vanishes at the requested angles (degenerate design)");
    return d;
}

// d(phase of a_vec entry)/d(angle) for the four angles, column-wise.
Eigen::MatrixXd phase_derivatives(const Angles &z, const ArrayPair &arrays)
{
    const UpaGeometry &rx = arrays.rx;
    const UpaGeometry &tx = arrays.tx;
    const Eigen::Index m_r = rx.size();
    Eigen::MatrixXd d(m_r * tx.size(), 4);
    const double st_r = std::sin(z.theta_r), ct_r = std::cos(z.theta_r);
    const double sp_r = std::sin(z.phi_r), cp_r = std::cos(z.phi_r);
    const double st_t = std::sin(z.theta_t), ct_t = std::cos(z.theta_t);
    const double sp_t = std::sin(z.phi_t), cp_t = std::cos(z.phi_t);
    for (int nx = 0; nx < tx.x_count; ++nx)
        for (int ny = 0; ny < tx.y_count; ++ny)
            for (int mx = 0; mx < rx.x_count; ++mx)
                for (int my = 0; my < rx.y_count; ++my)
                {
                    const Eigen::Index i = Eigen::Index(tx.index(nx, ny)) * m_r + rx.index(mx, my);
                    d(i, 0) = pi * mx * ct_r * sp_r;
                    d(i, 1) = pi * (mx * st_r * cp_r - my * sp_r);
                    d(i, 2) = -pi * nx * ct_t * sp_t;
                    d(i, 3) = -pi * (nx * st_t * cp_t - ny * sp_t);
                }
    return d;
}

} // namespace

double objective_f(const Angles &angles, const StackedDesign &design, const CVec &y_vec)
{
    check_inputs(design, y_vec);
    const CVec ba = design.b * steering_vec(angles, design.arrays);
    const double d = design_energy(ba);
    return std::norm(y_vec.dot(ba)) / d;
}

Eigen::Vector4d objective_gradient(const Angles &angles, const StackedDesign &design, const CVec &y_vec)
{
    check_inputs(design, y_vec);
    const CVec a = steering_vec(angles, design.arrays);
    const CVec ba = design.b * a;
    const double d = design_energy(ba);
    const cplx s = y_vec.dot(ba);
    const double num = std::norm(s);
    const Eigen::MatrixXd dphase = phase_derivatives(angles, design.arrays);

    Eigen::Vector4d g;
    for (int i = 0; i < 4; ++i)
    {
        const CVec da = imag_unit * dphase.col(i).cast<cplx>().cwiseProduct(a);
        const CVec dba = design.b * da;
        const double dnum = 2.0 * (std::conj(s) * y_vec.dot(dba)).real();
        const double dden = 2.0 * ba.dot(dba).real();
        g(i) = (dnum * d - num * dden) / (d * d);
    }
    return g;
}

cplx ls_gain(const Angles &angles, const StackedDesign &design, const CVec &y_vec)
{
    check_inputs(design, y_vec);
    const CVec ba = design.b * steering_vec(angles, design.arrays);
    return ba.dot(y_vec) / design_energy(ba);
}

double concentrated_residual(const Angles &angles, const StackedDesign &design, const CVec &y_vec)
{
    check_inputs(design, y_vec);
    const CVec ba = design.b * steering_vec(angles, design.arrays);
    const cplx gamma = ba.dot(y_vec) / design_energy(ba);
    return (y_vec - gamma * ba).squaredNorm();
}

double fold_frequency(double f)
{
    f -= std::floor(f);
    return f >= 0.5 ? f - 1.0 : f;
}

Angles angles_from_frequencies(const std::array<double, 4> &freqs)
{
    auto clip = [](double x) { return std::clamp(x, -1.0, 1.0); };
    auto elevation_pair = [&](double f_theta, double f_phi, double sign, double &theta, double &phi) {
        phi = std::acos(clip(sign * 2.0 * fold_frequency(f_phi)));
        const double s = std::sin(phi);
        theta = std::abs(s) < 1e-3 ? 0.0 : std::asin(clip(sign * 2.0 * fold_frequency(f_theta) / s));
    };
    Angles a;
    elevation_pair(freqs[0], freqs[1], -1.0, a.theta_r, a.phi_r);
    elevation_pair(freqs[2], freqs[3], +1.0, a.theta_t, a.phi_t);
    return a;
}

namespace
{

struct FftwDeleter
{
    void operator()(fftw_complex *p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwDeleter>;

// Planner calls are not thread-safe; execution on distinct buffers is.
std::mutex &planner_mutex()
{
    static std::mutex m;
    return m;
}

class Fft4
{
  public:
    explicit Fft4(int n) : n_(n), size_(std::size_t(n) * n * n * n)
    {
        buffer_.reset(static_cast<fftw_complex *>(fftw_malloc(sizeof(fftw_complex) * size_)));
        if (!buffer_)
            throw std::bad_alloc();
        std::lock_guard<std::mutex> lock(planner_mutex());
        const int dims[4] = {n, n, n, n};
        plan_ = fftw_plan_dft(4, dims, buffer_.get(), buffer_.get(), FFTW_FORWARD, FFTW_ESTIMATE);
    }
    ~Fft4()
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(plan_);
    }
    Fft4(const Fft4 &) = delete;
    Fft4 &operator=(const Fft4 &) = delete;

    void clear() { std::fill_n(&buffer_[0][0], 2 * size_, 0.0); }
    void add(std::size_t cell, cplx v)
    {
        buffer_[cell][0] += v.real();
        buffer_[cell][1] += v.imag();
    }
    void execute() { fftw_execute(plan_); }
    cplx at(std::size_t cell) const { return {buffer_[cell][0], buffer_[cell][1]}; }
    std::size_t size() const { return size_; }

  private:
    int n_;
    std::size_t size_;
    FftwBuffer buffer_;
    fftw_plan plan_;
};

struct ElementCoords
{
    int mx, my, nx, ny;
};

std::vector<ElementCoords> element_coords(const ArrayPair &arrays)
{
    const UpaGeometry &rx = arrays.rx;
    const UpaGeometry &tx = arrays.tx;
    std::vector<ElementCoords> coords(std::size_t(rx.size()) * tx.size());
    for (int nx = 0; nx < tx.x_count; ++nx)
        for (int ny = 0; ny < tx.y_count; ++ny)
            for (int mx = 0; mx < rx.x_count; ++mx)
                for (int my = 0; my < rx.y_count; ++my)
                    coords[std::size_t(tx.index(nx, ny)) * rx.size() + rx.index(mx, my)] = {mx, my, nx, ny};
    return coords;
}

} // namespace

CoarseEstimate coarse_search_4dfft(const StackedDesign &design, const CVec &y_vec, int n_fft, QRoute route)
{
    check_inputs(design, y_vec);
    const ArrayPair &arrays = design.arrays;
    const int largest = std::max({arrays.rx.x_count, arrays.rx.y_count, arrays.tx.x_count, arrays.tx.y_count});
    if (n_fft < largest || n_fft < 1 || (n_fft & (n_fft - 1)) != 0)
        throw std::invalid_argument("coarse_search_4dfft: n_fft must be a power of two >= " + std::to_string(largest) +
                                    ", got " + std::to_string(n_fft));

    const auto coords = element_coords(arrays);
    const int n = n_fft;
    auto wrap = [n](int v) { return ((v % n) + n) % n; };

    CoarseEstimate est;
    AngleGrid &grid = est.grid;
    grid.n_fft = n;
    Fft4 fft(n);
    grid.q.assign(fft.size(), 0.0);

    // numerator: y^H B a = sum_i c_i a_i with c = B^T conj(y)
    const CVec c = design.b.transpose() * y_vec.conjugate();
    fft.clear();
    for (std::size_t i = 0; i < coords.size(); ++i)
        fft.add(grid.cell(coords[i].mx, coords[i].my, coords[i].nx, coords[i].ny), c(Eigen::Index(i)));
    fft.execute();
    grid.r.resize(fft.size());
    for (std::size_t j = 0; j < fft.size(); ++j)
        grid.r[j] = std::norm(fft.at(j));

    if (route == QRoute::PerRow)
    {
        for (Eigen::Index m = 0; m < design.b.rows(); ++m)
        {
            fft.clear();
            for (std::size_t i = 0; i < coords.size(); ++i)
                fft.add(grid.cell(coords[i].mx, coords[i].my, coords[i].nx, coords[i].ny),
                        design.b(m, Eigen::Index(i)));
            fft.execute();
            for (std::size_t j = 0; j < fft.size(); ++j)
                grid.q[j] += std::norm(fft.at(j));
        }
    }
    else
    {
        // sum_m |b_m^T a|^2 = sum_{i,j} G_ij a_i conj(a_j), G = B^T conj(B); a_i conj(a_j)
        // only depends on the index difference, so G collapses onto lags.
        const CMat gram = design.b.transpose() * design.b.conjugate();
        fft.clear();
        for (std::size_t i = 0; i < coords.size(); ++i)
            for (std::size_t j = 0; j < coords.size(); ++j)
            {
                const ElementCoords &ci = coords[i];
                const ElementCoords &cj = coords[j];
                fft.add(grid.cell(wrap(ci.mx - cj.mx), wrap(ci.my - cj.my), wrap(ci.nx - cj.nx),
                                  wrap(ci.ny - cj.ny)),
                        gram(Eigen::Index(i), Eigen::Index(j)));
            }
        fft.execute();
        for (std::size_t j = 0; j < fft.size(); ++j)
            grid.q[j] = std::max(0.0, fft.at(j).real());
    }

    const double q_max = *std::max_element(grid.q.begin(), grid.q.end());
    if (!(q_max > 0.0))
        throw NumericalError("coarse_search_4dfft: design has no energy on any grid cell");
    const double floor = 1e-12 * q_max;

    grid.t.assign(fft.size(), 0.0);
    grid.valid.assign(fft.size(), 0);
    std::size_t best = fft.size();
    for (std::size_t j = 0; j < fft.size(); ++j)
    {
        if (grid.q[j] < floor)
            continue;
        grid.valid[j] = 1;
        grid.t[j] = grid.r[j] / grid.q[j];
        if (best == fft.size() || grid.t[j] > grid.t[best])
            best = j;
    }
    if (best == fft.size())
        throw NumericalError("coarse_search_4dfft: every grid cell is below the energy floor");

    std::size_t rem = best;
    for (int axis = 3; axis >= 0; --axis)
    {
        est.cell[std::size_t(axis)] = int(rem % std::size_t(n));
        rem /= std::size_t(n);
    }
    std::array<double, 4> freqs{};
    for (std::size_t axis = 0; axis < 4; ++axis)
        freqs[axis] = double(est.cell[axis]) / n;
    est.angles = angles_from_frequencies(freqs);
    return est;
}

Eigen::Vector4d cosines_from_angles(const Angles &a)
{
    return {std::sin(a.theta_r) * std::sin(a.phi_r), std::cos(a.phi_r), std::sin(a.theta_t) * std::sin(a.phi_t),
            std::cos(a.phi_t)};
}

Angles angles_from_cosines(const Eigen::Vector4d &c)
{
    return angles_from_frequencies({-c(0) / 2, -c(1) / 2, c(2) / 2, c(3) / 2});
}

CVec steering_from_cosines(const Eigen::Vector4d &c, const ArrayPair &arrays)
{
    const CVec a_r = upa_response_cosines(c(0), c(1), arrays.rx);
    const CVec a_t = upa_response_cosines(c(2), c(3), arrays.tx);
    const Eigen::Index m_r = a_r.size();
    CVec a(a_r.size() * a_t.size());
    for (Eigen::Index tx = 0; tx < a_t.size(); ++tx)
        a.segment(tx * m_r, m_r) = std::conj(a_t(tx)) * a_r;
    return a;
}

namespace
{

// Normalized concentrated residual and its gradient over the cosines.
struct CosineObjective
{
    const StackedDesign &design;
    const CVec &y_vec;
    double y2;

    double cost(const Eigen::Vector4d &c) const
    {
        const CVec ba = design.b * steering_from_cosines(c, design.arrays);
        const cplx gamma = ba.dot(y_vec) / design_energy(ba);
        return (y_vec - gamma * ba).squaredNorm() / y2;
    }

    Eigen::Vector4d gradient(const Eigen::Vector4d &c) const
    {
        const ArrayPair &arrays = design.arrays;
        const CVec a = steering_from_cosines(c, arrays);
        const CVec ba = design.b * a;
        const double d = design_energy(ba);
        const cplx s = y_vec.dot(ba);
        const double num = std::norm(s);
        const Eigen::Index m_r = arrays.rx.size();

        Eigen::Vector4d g;
        for (int axis = 0; axis < 4; ++axis)
        {
            CVec da(a.size());
            for (int nx = 0; nx < arrays.tx.x_count; ++nx)
                for (int ny = 0; ny < arrays.tx.y_count; ++ny)
                    for (int mx = 0; mx < arrays.rx.x_count; ++mx)
                        for (int my = 0; my < arrays.rx.y_count; ++my)
                        {
                            const Eigen::Index i = Eigen::Index(arrays.tx.index(nx, ny)) * m_r + arrays.rx.index(mx, my);
                            const int weight[4] = {mx, my, -nx, -ny};
                            da(i) = (imag_unit * (pi * weight[axis])) * a(i);
                        }
            const CVec dba = design.b * da;
            const double dnum = 2.0 * (std::conj(s) * y_vec.dot(dba)).real();
            const double dden = 2.0 * ba.dot(dba).real();
            g(axis) = -(dnum * d - num * dden) / (d * d) / y2;
        }
        return g;
    }
};

} // namespace

CosineFit refine_cosines(const Eigen::Vector4d &start, const StackedDesign &design, const CVec &y_vec,
                         const RefineOptions &options)
{
    check_inputs(design, y_vec);
    CosineFit res;
    res.cosines = start;
    const double y2 = y_vec.squaredNorm();
    if (y2 == 0.0)
        return res;

    using Vec4 = Eigen::Vector4d;
    // Descend the normalized residual (1 - f / ||y||^2); its value stays accurate near a perfect fit.
    const CosineObjective objective{design, y_vec, y2};
    Vec4 z = start;
    double c = objective.cost(z);
    Vec4 g = objective.gradient(z);
    double step = options.initial_step;

    for (int it = 0; it < options.max_iterations; ++it)
    {
        const double g2 = g.squaredNorm();
        if (std::sqrt(g2) <= options.gradient_tolerance)
            break;

        bool accepted = false;
        Vec4 z_new;
        double c_new = c;
        for (int b = 0; b <= options.max_backtracks; ++b)
        {
            z_new = z - step * g;
            c_new = objective.cost(z_new);
            if (c_new <= c - options.armijo_c * step * g2)
            {
                accepted = true;
                break;
            }
            step *= options.shrink;
        }
        if (!accepted)
            break;

        const Vec4 g_new = objective.gradient(z_new);
        const Vec4 s = z_new - z;
        const double sy = s.dot(g_new - g);
        // Barzilai-Borwein guess for the next trial step.
        step = sy > 0.0 ? s.squaredNorm() / sy : 2.0 * step;

        const double change = c - c_new;
        z = z_new;
        g = g_new;
        res.iterations = it + 1;
        const double previous = c;
        c = c_new;
        if (change <= options.relative_tolerance * previous)
            break;
    }

    // Fold into [-1, 1) per coordinate; the response is unchanged.
    for (int i = 0; i < 4; ++i)
        z(i) = 2.0 * fold_frequency(z(i) / 2.0);
    res.cosines = z;
    const CVec ba = design.b * steering_from_cosines(z, design.arrays);
    res.gamma = ba.dot(y_vec) / design_energy(ba);
    res.residual = (y_vec - res.gamma * ba).squaredNorm();
    return res;
}

RefineResult refine_backtracking(const Angles &start, const StackedDesign &design, const CVec &y_vec,
                                 const RefineOptions &options)
{
    check_inputs(design, y_vec);
    RefineResult res;
    res.angles = wrap_angles(start);
    if (y_vec.squaredNorm() == 0.0)
        return res;

    const CosineFit fit = refine_cosines(cosines_from_angles(res.angles), design, y_vec, options);
    res.iterations = fit.iterations;
    // Cosines outside the visible disk are clipped onto its edge; if that loses
    // ground the start is kept.
    const Angles refined = angles_from_cosines(fit.cosines);
    if (concentrated_residual(refined, design, y_vec) <= concentrated_residual(res.angles, design, y_vec))
        res.angles = refined;
    res.objective = objective_f(res.angles, design, y_vec);
    return res;
}

} // namespace otacal
