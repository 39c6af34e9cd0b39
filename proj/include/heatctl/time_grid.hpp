#pragma once

#include "heatctl/grid.hpp"

#include <functional>
#include <stdexcept>

namespace heatctl {

/// Uniform mesh of [t0, t1] with n_steps steps of size tau.
struct TimeGrid {
    double t0 = 0.0;
    double t1 = 1.0;
    int n_steps = 0;
    double tau = 0.0;

    double node(int k) const { return t0 + tau * static_cast<double>(k); }
    double horizon() const { return t1 - t0; }
};

inline TimeGrid build_time_grid(double t0, double t1, int n_steps) {
    if (!(t0 < t1))
        throw std::invalid_argument("build_time_grid: t0 must be < t1");
    if (n_steps < 1)
        throw std::invalid_argument("build_time_grid: n_steps must be >= 1");
    TimeGrid tg;
    tg.t0 = t0;
    tg.t1 = t1;
    tg.n_steps = n_steps;
    tg.tau = (t1 - t0) / static_cast<double>(n_steps);
    return tg;
}

/// Nodal values over (time x space): row k holds the spatial field at time
/// node k. An empty matrix stands for the zero field; solvers accept that
/// to avoid materializing large all-zero potentials and sources.
struct SpaceTimeField {
    TimeGrid tg;
    Matrix values; // (n_steps + 1) x n_nodes, or 0 x 0 for zero

    bool is_zero() const { return values.size() == 0; }

    Vector at(int k) const {
        if (is_zero())
            throw std::logic_error("SpaceTimeField::at on implicit-zero field");
        return values.row(k).transpose();
    }

    double max_abs() const { return is_zero() ? 0.0 : values.cwiseAbs().maxCoeff(); }

    static SpaceTimeField zero(const TimeGrid& tg) {
        SpaceTimeField f;
        f.tg = tg;
        return f;
    }

    static SpaceTimeField constant(const Grid1D& grid, const TimeGrid& tg, double value) {
        SpaceTimeField f;
        f.tg = tg;
        f.values = Matrix::Constant(tg.n_steps + 1, grid.n_nodes, value);
        return f;
    }

    static SpaceTimeField of_spatial(const Grid1D& grid, const TimeGrid& tg, const Vector& u) {
        if (u.size() != grid.n_nodes)
            throw std::invalid_argument("SpaceTimeField::of_spatial: length mismatch");
        SpaceTimeField f;
        f.tg = tg;
        f.values = u.transpose().replicate(tg.n_steps + 1, 1);
        return f;
    }

    static SpaceTimeField sample(const Grid1D& grid, const TimeGrid& tg,
                                 const std::function<double(double, double)>& fn) {
        SpaceTimeField f;
        f.tg = tg;
        f.values.resize(tg.n_steps + 1, grid.n_nodes);
        for (int k = 0; k <= tg.n_steps; ++k)
            for (int i = 0; i < grid.n_nodes; ++i)
                f.values(k, i) = fn(tg.node(k), grid.nodes(i));
        return f;
    }
};

} // namespace heatctl
