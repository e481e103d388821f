#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gompertz/error.hpp"
#include "gompertz/model.hpp"
#include "gompertz/parallel.hpp"
#include "gompertz/random.hpp"

namespace gompertz {

/// d sample paths observed on a shared grid; row = subject, column = time.
struct PathPanel {
    StudyDesign design;
    std::vector<std::vector<double>> values;
    std::string label;

    [[nodiscard]] std::size_t subjects() const noexcept { return values.size(); }
    [[nodiscard]] std::size_t times() const noexcept { return design.size(); }

    void validate() const {
        design.validate();
        detail::require(!values.empty(), "panel has no subjects");
        for (std::size_t i = 0; i < values.size(); ++i) {
            detail::require(values[i].size() == design.size(), "panel row length differs from grid length");
            for (double v : values[i])
                if (!(v > 0.0) || !std::isfinite(v)) {
                    std::ostringstream os;
                    os << "panel value for subject " << i + 1 << " is not a finite positive number";
                    throw ValidationError(os.str());
                }
        }
    }
};

enum class Scheme { ExactTransition, EulerMaruyama };

struct SimulationConfig {
    std::size_t n_paths = 25;
    Scheme scheme = Scheme::ExactTransition;
    int euler_substeps = 16;
    std::uint64_t seed = 1;
    int quadrature_panels = kDefaultQuadraturePanels;
    /// Panel-level failure threshold for Euler paths that leave (0, inf).
    double max_failure_fraction = 0.01;
};

/// Diagnostics from the last simulation: subjects whose Euler path left the
/// positive half-line (those rows are redrawn from the next substream).
struct SimulationReport {
    std::vector<std::size_t> failed_paths;
};

namespace detail {

inline std::vector<double> exact_path(const CellTransitions& cells, double x0, Engine& engine) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> row(cells.kbar.size() + 1);
    row[0] = x0;
    double y = std::log(x0);
    for (std::size_t j = 0; j < cells.kbar.size(); ++j) {
        y = cells.kbar[j] * y + cells.theta[j] + std::sqrt(cells.variance[j]) * normal(engine);
        row[j + 1] = std::exp(y);
    }
    return row;
}

// Euler-Maruyama on X itself; returns false if the path leaves (0, inf).
inline bool euler_path(const ModelSpec& m, const StudyDesign& design, int substeps, Engine& engine,
                       std::vector<double>& row) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto& p = m.params;
    row.assign(design.size(), 0.0);
    row[0] = design.x0;
    double x = design.x0;
    for (std::size_t j = 0; j + 1 < design.size(); ++j) {
        const double h = (design.grid[j + 1] - design.grid[j]) / substeps;
        const double sq = std::sqrt(h);
        for (int k = 0; k < substeps; ++k) {
            const double t = design.grid[j] + k * h;
            const double drift = ((p.alpha - m.C(t)) - (p.beta - m.D(t)) * std::log(x)) * x;
            const double diff = p.sigma * std::sqrt(m.V(t)) * x;
            x += drift * h + diff * sq * normal(engine);
            if (!(x > 0.0) || !std::isfinite(x)) return false;
        }
        row[j + 1] = x;
    }
    return true;
}

}  // namespace detail

/// Simulate a panel. Subject i draws from substream (seed, i), so the panel
/// is identical for any thread count.
inline PathPanel simulate(const ModelSpec& model, const StudyDesign& design, const SimulationConfig& cfg,
                          SimulationReport* report = nullptr) {
    design.validate();
    model.params.validate();
    detail::require(cfg.n_paths >= 1, "simulation needs at least one path");
    detail::require(cfg.euler_substeps >= 1, "Euler substeps must be >= 1");
    model.V.validate(design.grid);

    PathPanel panel;
    panel.design = design;
    panel.values.resize(cfg.n_paths);

    if (cfg.scheme == Scheme::ExactTransition) {
        const CellTransitions cells = cell_transitions(model, design.grid, cfg.quadrature_panels);
        parallel_for(cfg.n_paths, [&](std::size_t i) {
            Engine engine = make_engine(cfg.seed, {i});
            panel.values[i] = detail::exact_path(cells, design.x0, engine);
        });
        return panel;
    }

    std::vector<char> failed(cfg.n_paths, 0);
    parallel_for(cfg.n_paths, [&](std::size_t i) {
        Engine engine = make_engine(cfg.seed, {i});
        if (!detail::euler_path(model, design, cfg.euler_substeps, engine, panel.values[i])) {
            failed[i] = 1;
            // Redraw from fresh substreams so the panel stays complete.
            for (std::uint64_t attempt = 1; attempt <= 16; ++attempt) {
                Engine retry = make_engine(cfg.seed, {i, attempt});
                if (detail::euler_path(model, design, cfg.euler_substeps, retry, panel.values[i])) return;
            }
            panel.values[i].clear();
        }
    });
    std::size_t n_failed = 0;
    for (std::size_t i = 0; i < cfg.n_paths; ++i) {
        if (failed[i]) {
            ++n_failed;
            if (report) report->failed_paths.push_back(i);
        }
    }
    if (static_cast<double>(n_failed) > cfg.max_failure_fraction * static_cast<double>(cfg.n_paths)) {
        std::ostringstream os;
        os << n_failed << " of " << cfg.n_paths << " Euler paths left the positive half-line";
        throw NumericError(os.str());
    }
    for (const auto& row : panel.values)
        if (row.empty()) throw NumericError("Euler path could not be completed within the retry budget");
    return panel;
}

}  // namespace gompertz
