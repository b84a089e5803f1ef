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

#include "otacal/harness.hpp"
#include "otacal/crb.hpp"
#include "otacal/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

namespace otacal
{

using nlohmann::json;

std::string to_string(BeamMode mode)
{
    switch (mode)
    {
    case BeamMode::Random:
        return "random";
    case BeamMode::Optimized:
        return "optimized";
    case BeamMode::Loaded:
        return "loaded";
    }
    return "unknown";
}

BeamMode parse_beam_mode(const std::string &name)
{
    if (name == "random")
        return BeamMode::Random;
    if (name == "optimized")
        return BeamMode::Optimized;
    throw std::invalid_argument("beam_mode: expected \"random\" or \"optimized\", got \"" + name + "\"");
}

void ScenarioConfig::validate() const
{
    auto require = [](bool ok, const std::string &msg) {
        if (!ok)
            throw std::invalid_argument("config: " + msg);
    };
    require(n_x >= 1 && n_y >= 1, "n_x and n_y must be positive");
    require(m_x >= 1 && m_y >= 1, "m_x and m_y must be positive");
    require(n_rf >= 1, "n_rf must be positive");
    require(l >= n_rf, "l must be at least n_rf");
    require(k >= 1, "k must be positive");
    require(!snr_db.empty(), "snr_db must list at least one value");
    for (double s : snr_db)
        require(std::isfinite(s), "snr_db values must be finite");
    require(std::isfinite(epsilon_deg) && epsilon_deg >= 0.0 && epsilon_deg <= 180.0,
            "epsilon_deg must lie in [0, 180]");
    require(std::isfinite(nu_deg) && nu_deg >= 0.0, "nu_deg must be non-negative");
    require(!beam_mode.empty(), "beam_mode must list at least one mode");
    for (BeamMode m : beam_mode)
    {
        require(m != BeamMode::Loaded, "beam_mode \"loaded\" is selected with --beams, not in the config");
        if (m == BeamMode::Optimized)
            require(k >= m_t(), "beam_mode optimized needs k >= n_x * n_y");
    }
    const int largest = std::max({n_x, n_y, m_x, m_y});
    require(n_fft >= largest && (n_fft & (n_fft - 1)) == 0,
            "n_fft must be a power of two no smaller than any array dimension");
    require(trials >= 1, "trials must be positive");
}

namespace
{

int get_int(const json &v, const std::string &key)
{
    if (!v.is_number_integer())
        throw std::invalid_argument("config: " + key + " must be an integer");
    return v.get<int>();
}

double get_double(const json &v, const std::string &key)
{
    if (!v.is_number())
        throw std::invalid_argument("config: " + key + " must be a number");
    return v.get<double>();
}

} // namespace

ScenarioConfig parse_config(const std::string &text)
{
    json doc;
    try
    {
        doc = json::parse(text);
    }
    catch (const json::parse_error &e)
    {
        throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
    }
    if (!doc.is_object())
        throw std::invalid_argument("config: top level must be an object");

    ScenarioConfig c;
    for (const auto &[key, v] : doc.items())
    {
        if (key == "n_x")
            c.n_x = get_int(v, key);
        else if (key == "n_y")
            c.n_y = get_int(v, key);
        else if (key == "m_x")
            c.m_x = get_int(v, key);
        else if (key == "m_y")
            c.m_y = get_int(v, key);
        else if (key == "n_rf")
            c.n_rf = get_int(v, key);
        else if (key == "l")
            c.l = get_int(v, key);
        else if (key == "k")
            c.k = get_int(v, key);
        else if (key == "n_fft")
            c.n_fft = get_int(v, key);
        else if (key == "trials")
            c.trials = get_int(v, key);
        else if (key == "epsilon_deg")
            c.epsilon_deg = get_double(v, key);
        else if (key == "nu_deg")
            c.nu_deg = get_double(v, key);
        else if (key == "seed")
        {
            if (!v.is_number_integer() || v.get<long long>() < 0)
                throw std::invalid_argument("config: seed must be a non-negative integer");
            c.seed = v.get<std::uint64_t>();
        }
        else if (key == "snr_db")
        {
            c.snr_db.clear();
            if (v.is_array())
                for (const auto &s : v)
                    c.snr_db.push_back(get_double(s, key));
            else
                c.snr_db.push_back(get_double(v, key));
        }
        else if (key == "beam_mode")
        {
            c.beam_mode.clear();
            const json list = v.is_array() ? v : json::array({v});
            for (const auto &m : list)
            {
                if (!m.is_string())
                    throw std::invalid_argument("config: beam_mode entries must be strings");
                c.beam_mode.push_back(parse_beam_mode(m.get<std::string>()));
            }
        }
        else
            throw std::invalid_argument("config: unknown key \"" + key + "\"");
    }
    c.validate();
    return c;
}

ScenarioConfig load_config(const std::string &path)
{
    return parse_config(read_text_file(path));
}

std::string config_to_json(const ScenarioConfig &c)
{
    json modes = json::array();
    for (BeamMode m : c.beam_mode)
        modes.push_back(to_string(m));
    const json doc = {{"n_x", c.n_x},
                      {"n_y", c.n_y},
                      {"m_x", c.m_x},
                      {"m_y", c.m_y},
                      {"n_rf", c.n_rf},
                      {"l", c.l},
                      {"k", c.k},
                      {"snr_db", c.snr_db},
                      {"epsilon_deg", c.epsilon_deg},
                      {"nu_deg", c.nu_deg},
                      {"beam_mode", modes},
                      {"n_fft", c.n_fft},
                      {"trials", c.trials},
                      {"seed", c.seed}};
    return doc.dump(2) + "\n";
}

double noise_variance(double snr_db, int l)
{
    return double(l) / std::pow(10.0, snr_db / 10.0);
}

std::uint64_t trial_seed(const ScenarioConfig &config, int trial, int stream)
{
    return derive_seed(config.seed, std::uint64_t(trial), std::uint64_t(stream));
}

Scenario draw_scenario(const ScenarioConfig &config, int trial)
{
    config.validate();
    const ArrayPair arrays = config.arrays();
    const int m_t = config.m_t();
    const double eps = config.epsilon_deg * pi / 180.0;
    const double nu = config.nu_deg * pi / 180.0;

    Scenario s;
    Rng rng(trial_seed(config, trial, 0));
    s.channel.gamma = complex_normal(rng, 1.0);
    s.channel.angles.theta_r = uniform(rng, -pi / 2, pi / 2);
    s.channel.angles.phi_r = uniform(rng, 0.0, pi);
    s.channel.angles.theta_t = uniform(rng, -pi / 2, pi / 2);
    s.channel.angles.phi_t = uniform(rng, 0.0, pi);

    RMat phases(m_t, config.n_rf);
    for (int n = 0; n < config.n_rf; ++n)
        for (int i = 0; i < m_t; ++i)
            phases(i, n) = uniform(rng, -eps, eps);
    s.deviations = PhaseDeviations::from_phases(phases);

    s.w.reserve(std::size_t(config.k));
    for (int k = 0; k < config.k; ++k)
        s.w.push_back(random_unit_modulus(arrays.rx.size(), 1, rng).col(0));

    s.csi_theta_r = s.channel.angles.theta_r + uniform(rng, -nu, nu);
    s.csi_phi_r = s.channel.angles.phi_r + uniform(rng, -nu, nu);

    Rng pattern_rng(trial_seed(config, trial, 1));
    s.f_random.reserve(std::size_t(config.k));
    for (int k = 0; k < config.k; ++k)
        s.f_random.push_back(random_unit_modulus(m_t, config.n_rf, pattern_rng));
    return s;
}

BeamSchedule make_schedule(const ScenarioConfig &config, const Scenario &scenario, BeamMode mode,
                           const std::vector<CMat> &loaded)
{
    BeamSchedule sched{scenario.f_random, scenario.w};
    switch (mode)
    {
    case BeamMode::Random:
        break;
    case BeamMode::Optimized:
    {
        const BeamDesignProblem problem =
            make_beam_problem(scenario.w, scenario.csi_theta_r, scenario.csi_phi_r, config.arrays().rx, config.m_t());
        sched = optimize_schedule(problem, sched);
        break;
    }
    case BeamMode::Loaded:
        if (int(loaded.size()) != config.n_rf)
            throw std::invalid_argument("make_schedule: expected one loaded pattern matrix per RF chain");
        for (int n = 0; n < config.n_rf; ++n)
        {
            if (loaded[std::size_t(n)].rows() != config.m_t() || loaded[std::size_t(n)].cols() != config.k)
                throw std::invalid_argument("make_schedule: loaded patterns must be M_t x K");
            sched.set_chain_patterns(n, loaded[std::size_t(n)]);
        }
        break;
    }
    return sched;
}

namespace
{

std::string trial_context(const ScenarioConfig &config, int trial)
{
    return "trial " + std::to_string(trial) + " (seed " + std::to_string(config.seed) + ")";
}

MeasurementSet measure(const ScenarioConfig &config, int trial, const Scenario &scenario,
                       const BeamSchedule &schedule, double snr_db)
{
    return simulate_measurements(scenario.channel, scenario.deviations, schedule, synth_pilot(config.n_rf, config.l),
                                 config.arrays(), noise_variance(snr_db, config.l), 1.0,
                                 trial_seed(config, trial, 2));
}

} // namespace

TrialResult evaluate_trial(const ScenarioConfig &config, int trial, const Scenario &scenario,
                           const BeamSchedule &schedule, double snr_db)
{
    const ArrayPair arrays = config.arrays();
    try
    {
        const MeasurementSet meas = measure(config, trial, scenario, schedule, snr_db);
        CalibrationOptions options;
        options.n_fft = config.n_fft;
        const CalibrationResult cal = run_bcd(meas, schedule, arrays, options);

        const CanonicalPair est = canonical_gauge(cal.deviations_est, cal.channel_est, arrays.tx);
        const CanonicalPair truth = canonical_gauge(scenario.deviations, scenario.channel, arrays.tx);

        TrialResult out;
        out.rmse_deg = phase_rmse_deg(est.deviations, truth.deviations);
        out.rmse_aligned_deg =
            phase_rmse_deg(align_gauge(cal.deviations_est, scenario.deviations, arrays.tx).deviations,
                           scenario.deviations);
        out.crb_rmse_deg = fisher_information(scenario.channel, scenario.deviations, schedule, arrays, 1.0,
                                              noise_variance(snr_db, config.l), config.l)
                               .crb_rmse_deg;
        out.outer_iterations = cal.outer_iterations;
        out.cost_trace = cal.cost_trace;
        return out;
    }
    catch (const NumericalError &e)
    {
        throw NumericalError(trial_context(config, trial) + ": " + e.what());
    }
}

TrialResult run_trial(const ScenarioConfig &config, int trial, double snr_db, BeamMode mode)
{
    const Scenario scenario = draw_scenario(config, trial);
    BeamSchedule schedule;
    try
    {
        schedule = make_schedule(config, scenario, mode);
    }
    catch (const NumericalError &e)
    {
        throw NumericalError(trial_context(config, trial) + ": " + e.what());
    }
    return evaluate_trial(config, trial, scenario, schedule, snr_db);
}

namespace
{

// Runs body(trial) for every trial on a pool of threads; the first failure by trial
// index is rethrown after all workers finish.
template <class Body> void for_each_trial(int trials, unsigned threads, Body body)
{
    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, unsigned(trials));

    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(trials));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int t = next++; t < trials; t = next++)
        {
            try
            {
                body(t);
            }
            catch (...)
            {
                errors[std::size_t(t)] = std::current_exception();
            }
        }
    };

    if (threads <= 1)
        worker();
    else
    {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < threads; ++i)
            pool.emplace_back(worker);
        for (auto &th : pool)
            th.join();
    }
    for (const auto &e : errors)
        if (e)
            std::rethrow_exception(e);
}

std::vector<BeamMode> sweep_modes(const ScenarioConfig &config, const SweepOptions &options)
{
    std::vector<BeamMode> modes = config.beam_mode;
    if (!options.loaded_patterns.empty())
        modes.push_back(BeamMode::Loaded);
    return modes;
}

std::vector<SweepRow> sweep_impl(const ScenarioConfig &config, const SweepOptions &options, bool calibrate)
{
    config.validate();
    const std::vector<BeamMode> modes = sweep_modes(config, options);
    const std::size_t n_snr = config.snr_db.size();
    const std::size_t n_mode = modes.size();
    const std::size_t per_trial = n_snr * n_mode;
    const ArrayPair arrays = config.arrays();

    // Indexed by (trial, mode, snr) so aggregation is independent of scheduling.
    std::vector<TrialResult> results(std::size_t(config.trials) * per_trial);
    for_each_trial(config.trials, options.threads, [&](int trial) {
        const Scenario scenario = draw_scenario(config, trial);
        for (std::size_t m = 0; m < n_mode; ++m)
        {
            BeamSchedule schedule;
            try
            {
                schedule = make_schedule(config, scenario, modes[m], options.loaded_patterns);
            }
            catch (const NumericalError &e)
            {
                throw NumericalError(trial_context(config, trial) + ": " + e.what());
            }
            for (std::size_t s = 0; s < n_snr; ++s)
            {
                TrialResult &slot = results[std::size_t(trial) * per_trial + m * n_snr + s];
                if (calibrate)
                    slot = evaluate_trial(config, trial, scenario, schedule, config.snr_db[s]);
                else
                {
                    try
                    {
                        slot.crb_rmse_deg =
                            fisher_information(scenario.channel, scenario.deviations, schedule, arrays, 1.0,
                                               noise_variance(config.snr_db[s], config.l), config.l)
                                .crb_rmse_deg;
                    }
                    catch (const NumericalError &e)
                    {
                        throw NumericalError(trial_context(config, trial) + ": " + e.what());
                    }
                }
            }
        }
    });

    std::vector<SweepRow> rows;
    for (std::size_t m = 0; m < n_mode; ++m)
        for (std::size_t s = 0; s < n_snr; ++s)
        {
            double se = 0.0, crb = 0.0, outer = 0.0;
            for (int t = 0; t < config.trials; ++t)
            {
                const TrialResult &r = results[std::size_t(t) * per_trial + m * n_snr + s];
                se += r.rmse_deg * r.rmse_deg;
                crb += r.crb_rmse_deg * r.crb_rmse_deg;
                outer += r.outer_iterations;
            }
            const double n = config.trials;
            rows.push_back({config.snr_db[s], to_string(modes[m]), std::sqrt(se / n), std::sqrt(crb / n), outer / n,
                            config.trials});
        }
    return rows;
}

} // namespace

std::vector<SweepRow> run_sweep(const ScenarioConfig &config, const SweepOptions &options)
{
    return sweep_impl(config, options, true);
}

std::vector<SweepRow> run_crb_sweep(const ScenarioConfig &config, const SweepOptions &options)
{
    return sweep_impl(config, options, false);
}

namespace
{

std::string fmt(double v, const char *spec = "%.15g")
{
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

} // namespace

std::string format_csv(const std::vector<SweepRow> &rows)
{
    std::string out = std::string(sweep_csv_header) + "\n";
    for (const SweepRow &r : rows)
        out += fmt(r.snr_db) + "," + r.beam_mode + "," + fmt(r.rmse_deg) + "," + fmt(r.crb_rmse_deg) + "," +
               fmt(r.mean_outer_iterations) + "," + std::to_string(r.trials) + "\n";
    return out;
}

std::string format_svg(const std::vector<SweepRow> &rows)
{
    constexpr double width = 640, height = 420, left = 70, right = 150, top = 30, bottom = 50;
    const double plot_w = width - left - right, plot_h = height - top - bottom;

    const double inf = std::numeric_limits<double>::infinity();
    double x_lo = inf, x_hi = -inf, y_lo = inf, y_hi = -inf;
    std::vector<std::string> modes;
    for (const SweepRow &r : rows)
    {
        x_lo = std::min(x_lo, r.snr_db);
        x_hi = std::max(x_hi, r.snr_db);
        for (double v : {r.rmse_deg, r.crb_rmse_deg})
            if (v > 0.0)
            {
                y_lo = std::min(y_lo, std::log10(v));
                y_hi = std::max(y_hi, std::log10(v));
            }
        if (std::find(modes.begin(), modes.end(), r.beam_mode) == modes.end())
            modes.push_back(r.beam_mode);
    }
    if (!(x_hi > x_lo))
    {
        x_lo -= 1.0;
        x_hi += 1.0;
    }
    if (!std::isfinite(y_lo))
    {
        y_lo = -1.0;
        y_hi = 1.0;
    }
    y_lo = std::floor(y_lo);
    y_hi = std::max(std::ceil(y_hi), y_lo + 1.0);

    auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * plot_w; };
    auto py = [&](double v) { return top + (y_hi - std::log10(v)) / (y_hi - y_lo) * plot_h; };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double d = y_lo; d <= y_hi + 1e-9; d += 1.0)
    {
        const double y = top + (y_hi - d) / (y_hi - y_lo) * plot_h;
        s << "<line x1=\"" << left << "\" y1=\"" << fmt(y, "%.2f") << "\" x2=\"" << left + plot_w << "\" y2=\""
          << fmt(y, "%.2f") << "\" stroke=\"#ddd\"/>\n";
        s << "<text x=\"" << left - 6 << "\" y=\"" << fmt(y + 4, "%.2f") << "\" text-anchor=\"end\">1e" << int(d)
          << "</text>\n";
    }
    std::vector<double> ticks;
    for (const SweepRow &r : rows)
        if (std::find(ticks.begin(), ticks.end(), r.snr_db) == ticks.end())
            ticks.push_back(r.snr_db);
    for (double t : ticks)
        s << "<text x=\"" << fmt(px(t), "%.2f") << "\" y=\"" << top + plot_h + 18 << "\" text-anchor=\"middle\">"
          << fmt(t, "%g") << "</text>\n";
    s << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">SNR (dB)</text>\n";
    s << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << top + plot_h / 2 << ")\">RMSE (deg)</text>\n";

    const char *colors[] = {"#c0392b", "#1f4e9c", "#2e8b57", "#8e44ad"};
    for (std::size_t m = 0; m < modes.size(); ++m)
    {
        const char *color = colors[m % 4];
        for (int series = 0; series < 2; ++series)
        {
            std::string points;
            for (const SweepRow &r : rows)
            {
                const double v = series == 0 ? r.rmse_deg : r.crb_rmse_deg;
                if (r.beam_mode != modes[m] || !(v > 0.0))
                    continue;
                points += fmt(px(r.snr_db), "%.2f") + "," + fmt(py(v), "%.2f") + " ";
            }
            s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\""
              << (series == 1 ? " stroke-dasharray=\"6 4\"" : "") << " points=\"" << points << "\"/>\n";
            const double ly = top + 16 + double(2 * m + series) * 18;
            s << "<line x1=\"" << left + plot_w + 10 << "\" y1=\"" << ly << "\" x2=\"" << left + plot_w + 34
              << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\""
              << (series == 1 ? " stroke-dasharray=\"6 4\"" : "") << "/>\n";
            s << "<text x=\"" << left + plot_w + 40 << "\" y=\"" << ly + 4 << "\">" << modes[m]
              << (series == 0 ? " RMSE" : " CRB") << "</text>\n";
        }
    }
    s << "</svg>\n";
    return s.str();
}

void write_text_file(const std::string &path, const std::string &content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path + " for writing");
    out << content;
    if (!out)
        throw std::runtime_error("failed writing " + path);
}

std::string read_text_file(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path + " for reading");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

namespace
{

std::string chain_file(const std::string &dir, std::size_t n)
{
    return (std::filesystem::path(dir) / ("chain_" + std::to_string(n) + ".txt")).string();
}

} // namespace

void save_beam_patterns(const std::string &dir, const std::vector<CMat> &chains)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
    for (std::size_t n = 0; n < chains.size(); ++n)
    {
        std::string text;
        for (Eigen::Index i = 0; i < chains[n].rows(); ++i)
        {
            for (Eigen::Index k = 0; k < chains[n].cols(); ++k)
                text += (k ? " " : "") + fmt(std::arg(chains[n](i, k)), "%.17g");
            text += "\n";
        }
        write_text_file(chain_file(dir, n), text);
    }
}

std::vector<CMat> load_beam_patterns(const std::string &dir)
{
    std::vector<CMat> chains;
    for (std::size_t n = 0; std::filesystem::exists(chain_file(dir, n)); ++n)
    {
        const std::string path = chain_file(dir, n);
        std::istringstream in(read_text_file(path));
        std::vector<std::vector<double>> rows;
        for (std::string line; std::getline(in, line);)
        {
            if (line.find_first_not_of(" \t\r") == std::string::npos)
                continue;
            std::istringstream ls(line);
            std::vector<double> row;
            for (double v; ls >> v;)
                row.push_back(v);
            if (!ls.eof())
                throw std::runtime_error(path + ": malformed number");
            rows.push_back(std::move(row));
        }
        if (rows.empty() || rows.front().empty())
            throw std::runtime_error(path + ": no patterns");
        CMat m(Eigen::Index(rows.size()), Eigen::Index(rows.front().size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
        {
            if (rows[i].size() != rows.front().size())
                throw std::runtime_error(path + ": ragged rows");
            for (std::size_t k = 0; k < rows[i].size(); ++k)
                m(Eigen::Index(i), Eigen::Index(k)) = std::polar(1.0, rows[i][k]);
        }
        chains.push_back(std::move(m));
    }
    if (chains.empty())
        throw std::runtime_error("no chain_0.txt in " + dir);
    return chains;
}

std::vector<CMat> design_beam_patterns(const ScenarioConfig &config)
{
    if (config.k < config.m_t())
        throw std::invalid_argument("config: beam design needs k >= n_x * n_y");
    const Scenario scenario = draw_scenario(config, 0);
    const BeamSchedule sched = make_schedule(config, scenario, BeamMode::Optimized);
    std::vector<CMat> chains;
    for (int n = 0; n < config.n_rf; ++n)
        chains.push_back(sched.chain_patterns(n));
    return chains;
}

SimulatedData simulate_trial(const ScenarioConfig &config, int trial, double snr_db, BeamMode mode)
{
    SimulatedData d;
    d.scenario = draw_scenario(config, trial);
    d.schedule = make_schedule(config, d.scenario, mode);
    d.measurements = measure(config, trial, d.scenario, d.schedule, snr_db);
    d.arrays = config.arrays();
    d.snr_db = snr_db;
    return d;
}

namespace
{

json phase_matrix(const CMat &m)
{
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
    {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            row.push_back(std::arg(m(i, j)));
        rows.push_back(row);
    }
    return rows;
}

CMat unit_matrix(const json &rows)
{
    const Eigen::Index r = Eigen::Index(rows.size());
    const Eigen::Index c = r ? Eigen::Index(rows.at(0).size()) : 0;
    CMat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
    {
        if (Eigen::Index(rows.at(std::size_t(i)).size()) != c)
            throw std::invalid_argument("scenario: ragged phase matrix");
        for (Eigen::Index j = 0; j < c; ++j)
            m(i, j) = std::polar(1.0, rows.at(std::size_t(i)).at(std::size_t(j)).get<double>());
    }
    return m;
}

json channel_json(const ChannelParams &c)
{
    return {{"gamma", {c.gamma.real(), c.gamma.imag()}},
            {"theta_r", c.angles.theta_r},
            {"phi_r", c.angles.phi_r},
            {"theta_t", c.angles.theta_t},
            {"phi_t", c.angles.phi_t}};
}

ChannelParams channel_from(const json &j)
{
    ChannelParams c;
    c.gamma = {j.at("gamma").at(0).get<double>(), j.at("gamma").at(1).get<double>()};
    c.angles = {j.at("theta_r").get<double>(), j.at("phi_r").get<double>(), j.at("theta_t").get<double>(),
                j.at("phi_t").get<double>()};
    return c;
}

} // namespace

std::string simulated_to_json(const SimulatedData &d)
{
    json f = json::array(), w = json::array(), y = json::array();
    for (int k = 0; k < d.schedule.k(); ++k)
    {
        f.push_back(phase_matrix(d.schedule.f[std::size_t(k)]));
        w.push_back(phase_matrix(d.schedule.w[std::size_t(k)].transpose())[0]);
        json row = json::array();
        for (int n = 0; n < d.measurements.n_rf(); ++n)
            row.push_back({d.measurements.y_tilde(k, n).real(), d.measurements.y_tilde(k, n).imag()});
        y.push_back(row);
    }
    const json doc = {{"tx", {d.arrays.tx.x_count, d.arrays.tx.y_count}},
                      {"rx", {d.arrays.rx.x_count, d.arrays.rx.y_count}},
                      {"snr_db", d.snr_db},
                      {"noise_var", d.measurements.noise_var},
                      {"pathloss_beta", d.measurements.pathloss_beta},
                      {"truth",
                       {{"channel", channel_json(d.scenario.channel)},
                        {"phases", phase_matrix(d.scenario.deviations.omega())}}},
                      {"f_phases", f},
                      {"w_phases", w},
                      {"y", y}};
    return doc.dump(2) + "\n";
}

SimulatedData simulated_from_json(const std::string &text)
{
    try
    {
        const json doc = json::parse(text);
        SimulatedData d;
        d.arrays.tx = UpaGeometry(doc.at("tx").at(0).get<int>(), doc.at("tx").at(1).get<int>());
        d.arrays.rx = UpaGeometry(doc.at("rx").at(0).get<int>(), doc.at("rx").at(1).get<int>());
        d.snr_db = doc.at("snr_db").get<double>();
        d.scenario.channel = channel_from(doc.at("truth").at("channel"));
        d.scenario.deviations = PhaseDeviations(unit_matrix(doc.at("truth").at("phases")));
        for (const auto &f : doc.at("f_phases"))
            d.schedule.f.push_back(unit_matrix(f));
        for (const auto &w : doc.at("w_phases"))
            d.schedule.w.push_back(unit_matrix(json::array({w})).row(0).transpose());
        d.scenario.w = d.schedule.w;
        d.schedule.validate();

        const json &y = doc.at("y");
        d.measurements.y_tilde.resize(Eigen::Index(y.size()), d.schedule.n_rf());
        for (std::size_t k = 0; k < y.size(); ++k)
        {
            if (Eigen::Index(y[k].size()) != d.schedule.n_rf())
                throw std::invalid_argument("scenario: measurement row length must equal n_rf");
            for (std::size_t n = 0; n < y[k].size(); ++n)
                d.measurements.y_tilde(Eigen::Index(k), Eigen::Index(n)) = {y[k][n].at(0).get<double>(),
                                                                             y[k][n].at(1).get<double>()};
        }
        d.measurements.noise_var = doc.at("noise_var").get<double>();
        d.measurements.pathloss_beta = doc.at("pathloss_beta").get<double>();
        return d;
    }
    catch (const json::exception &e)
    {
        throw std::invalid_argument(std::string("scenario: ") + e.what());
    }
}

std::string calibration_to_json(const CalibrationResult &result, const SimulatedData &data)
{
    const UpaGeometry &tx = data.arrays.tx;
    const CanonicalPair est = canonical_gauge(result.deviations_est, result.channel_est, tx);
    const CanonicalPair truth = canonical_gauge(data.scenario.deviations, data.scenario.channel, tx);
    const AlignedDeviations aligned = align_gauge(result.deviations_est, data.scenario.deviations, tx);
    const json doc = {
        {"outer_iterations", result.outer_iterations},
        {"cost_trace", result.cost_trace},
        {"estimate", {{"channel", channel_json(result.channel_est)}, {"phases", phase_matrix(result.deviations_est.omega())}}},
        {"canonical", {{"channel", channel_json(est.channel)}, {"phases", phase_matrix(est.deviations.omega())}}},
        {"aligned",
         {{"phases", phase_matrix(aligned.deviations.omega())},
          {"beta", aligned.gauge.beta_phase},
          {"chi1", aligned.gauge.chi1},
          {"chi2", aligned.gauge.chi2}}},
        {"rmse_deg", phase_rmse_deg(est.deviations, truth.deviations)},
        {"rmse_aligned_deg", phase_rmse_deg(aligned.deviations, data.scenario.deviations)}};
    return doc.dump(2) + "\n";
}

} // namespace otacal
