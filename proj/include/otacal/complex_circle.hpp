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

#include "otacal/model.hpp"

#include <functional>

namespace otacal
{

// Geometry of the complex circle manifold {x in C^n : |x_i| = 1}, with the
// real inner product <a, b> = Re(a^H b).
namespace circle
{

double inner(const CVec &a, const CVec &b);

// u - Re(u .* conj(x)) .* x
CVec project_tangent(const CVec &x, const CVec &u);

// (x + xi) ./ |x + xi|; entries that vanish keep their previous value.
CVec retract(const CVec &x, const CVec &xi);

CVec normalize(const CVec &x);

} // namespace circle

struct RcgOptions
{
    int max_iterations = 200;
    double gradient_tolerance = 1e-8;
    double armijo_c = 1e-4;
    double shrink = 0.5;
    int max_backtracks = 50;
    // Largest per-entry move of the first trial step when no step hint is supplied.
    double initial_step = 0.1;
};

struct RcgResult
{
    CVec x;
    double cost = 0.0;
    double initial_cost = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Cost may return +inf to mark an infeasible point; the line search rejects it.
using CostFn = std::function<double(const CVec &)>;
// Real Euclidean gradient dC/dRe(x) + j dC/dIm(x), i.e. twice the Wirtinger gradient.
using GradFn = std::function<CVec(const CVec &)>;
// Suggested first trial step along a tangent direction.
using StepHintFn = std::function<double(const CVec &x, const CVec &direction)>;

// Riemannian conjugate gradient: tangent projection, normalization retraction,
// Polak-Ribiere+ with projection transport and an Armijo backtracking search.
// Never returns a point with higher cost than x0.
RcgResult rcg_minimize(const CVec &x0, const CostFn &cost, const GradFn &egrad, const RcgOptions &options,
                       const StepHintFn &step_hint = {});

} // namespace otacal
