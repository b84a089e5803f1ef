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

#include "otacal/complex_circle.hpp"

#include <cmath>
#include <limits>

namespace otacal
{

namespace circle
{

double inner(const CVec &a, const CVec &b)
{
    return a.dot(b).real();
}

CVec project_tangent(const CVec &x, const CVec &u)
{
    CVec out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
        out(i) = u(i) - (u(i) * std::conj(x(i))).real() * x(i);
    return out;
}

CVec retract(const CVec &x, const CVec &xi)
{
    CVec out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
    {
        const cplx z = x(i) + xi(i);
        const double m = std::abs(z);
        out(i) = m > 1e-300 ? z / m : x(i);
    }
    return out;
}

CVec normalize(const CVec &x)
{
    return retract(CVec::Zero(x.size()), x);
}

} // namespace circle

RcgResult rcg_minimize(const CVec &x0, const CostFn &cost, const GradFn &egrad, const RcgOptions &options,
                       const StepHintFn &step_hint)
{
    RcgResult res;
    res.x = circle::normalize(x0);
    res.cost = cost(res.x);
    res.initial_cost = res.cost;
    if (!std::isfinite(res.cost))
        return res;

    CVec grad = circle::project_tangent(res.x, egrad(res.x));
    CVec dir = -grad;
    double grad_sq = circle::inner(grad, grad);
    double last_step = options.initial_step;
    bool steepest = true;

    for (int it = 0; it < options.max_iterations; ++it)
    {
        res.gradient_norm = std::sqrt(grad_sq);
        if (res.gradient_norm <= options.gradient_tolerance)
        {
            res.converged = true;
            break;
        }

        double slope = circle::inner(grad, dir);
        if (!(slope < 0.0))
        {
            dir = -grad;
            slope = -grad_sq;
            steepest = true;
        }

        // Without a hint the first trial moves no entry by more than initial_step;
        // later trials start from twice the previously accepted step.
        const double dir_max = dir.cwiseAbs().maxCoeff();
        double step = step_hint ? step_hint(res.x, dir) : (it == 0 ? options.initial_step / dir_max : 2.0 * last_step);
        if (!(step > 0.0) || !std::isfinite(step))
            step = options.initial_step / dir_max;

        CVec x_new, grad_new;
        double cost_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        const double rounding = 4.0 * std::numeric_limits<double>::epsilon() * std::abs(res.cost);
        for (int b = 0; b <= options.max_backtracks; ++b)
        {
            x_new = circle::retract(res.x, step * dir);
            cost_new = cost(x_new);
            if (!std::isfinite(cost_new))
            {
                step *= options.shrink;
                continue;
            }
            if (cost_new <= res.cost + options.armijo_c * step * slope)
            {
                grad_new = circle::project_tangent(x_new, egrad(x_new));
                accepted = true;
                break;
            }
            // Below the rounding of the cost the step is judged by the slope instead
            // (approximate Wolfe conditions, delta = 0.1, sigma = 0.9).
            if (-step * slope <= rounding && cost_new <= res.cost + rounding)
            {
                grad_new = circle::project_tangent(x_new, egrad(x_new));
                const double slope_new = circle::inner(grad_new, circle::project_tangent(x_new, dir));
                if (slope_new >= 0.9 * slope && slope_new <= -0.8 * slope)
                {
                    accepted = true;
                    break;
                }
            }
            step *= options.shrink;
        }

        if (!accepted)
        {
            if (steepest)
                break;
            // Conjugate direction failed; retry once along the negative gradient.
            dir = -grad;
            steepest = true;
            --it;
            continue;
        }

        res.iterations = it + 1;
        last_step = step;
        const double grad_new_sq = circle::inner(grad_new, grad_new);

        // Polak-Ribiere+ with the previous gradient and direction transported by projection.
        const CVec grad_old_t = circle::project_tangent(x_new, grad);
        const double beta = std::max(0.0, circle::inner(grad_new, grad_new - grad_old_t) / grad_sq);
        dir = -grad_new + beta * circle::project_tangent(x_new, dir);
        steepest = beta == 0.0;

        res.x = std::move(x_new);
        res.cost = cost_new;
        grad = grad_new;
        grad_sq = grad_new_sq;
    }
    res.gradient_norm = std::sqrt(grad_sq);
    if (res.gradient_norm <= options.gradient_tolerance)
        res.converged = true;
    return res;
}

} // namespace otacal
