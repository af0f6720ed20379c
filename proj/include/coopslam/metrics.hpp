#pragma once

#include "coopslam/motion.hpp"
#include "coopslam/types.hpp"

#include <limits>
#include <vector>

namespace coopslam {

struct GospaParams {
    double cutoff = 20.0;  // c
    double alpha = 2.0;    // 0 < alpha <= 2
    double order = 2.0;    // p >= 1
};

/// Minimum-cost perfect assignment of rows to columns for a square cost
/// matrix (Hungarian method with potentials, O(n^3)). Returns the column
/// assigned to each row.
inline std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw std::invalid_argument("solve_assignment: cost matrix must be square");
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials formulation
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<bool> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j) {
        if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
    }
    return row_to_col;
}

/// GOSPA distance between two finite point sets.
///
/// d = ( min_assignment sum min(|x - y|, c)^p + c^p / alpha * (|X| + |Y| - 2 * #assigned) )^(1/p)
///
/// With alpha = 2 the optimum always assigns min(|X|, |Y|) pairs, so the
/// assignment is solved over cutoff distances and every unassigned point
/// costs c^p / 2.
inline double gospa(const std::vector<Vec3>& truth, const std::vector<Vec3>& est, const GospaParams& gp = {}) {
    const std::size_t m = truth.size();
    const std::size_t n = est.size();
    const double cp = std::pow(gp.cutoff, gp.order);
    if (m == 0 && n == 0) return 0.0;
    const std::size_t k = std::max(m, n);
    // padded square matrix; a dummy pairing costs c^p/alpha per side
    Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k),
                                                     cp / gp.alpha);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double d = std::min((truth[i] - est[j]).norm(), gp.cutoff);
            // pairing beyond 2^(1/p) c is never better than leaving both unassigned
            cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                std::min(std::pow(d, gp.order), 2.0 * cp / gp.alpha);
        }
    }
    const auto assign = solve_assignment(cost);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) total += cost(static_cast<Eigen::Index>(i), assign[i]);
    return std::pow(total, 1.0 / gp.order);
}

/// Absolute error triple for one vehicle at one step.
struct StateError {
    double location = 0.0;  // Euclidean, m
    double bias = 0.0;      // |B_hat - B|, m
    double heading = 0.0;   // |wrap(a_hat - a)|, rad
};

inline StateError state_error(const VehicleState& est, const VehicleState& truth) {
    return {(est.position - truth.position).norm(), std::abs(est.clock_bias - truth.clock_bias),
            std::abs(wrap_angle(est.heading - truth.heading))};
}

struct ErrorStats {
    double mae = 0.0;
    double rmse = 0.0;
    std::size_t count = 0;
};

struct StateErrorStats {
    ErrorStats location;
    ErrorStats bias;
    ErrorStats heading;
};

/// Accumulates absolute errors and reports MAE and RMSE per component.
class ErrorAccumulator {
public:
    void add(const StateError& e) {
        add_one(loc_, e.location);
        add_one(bias_, e.bias);
        add_one(head_, e.heading);
    }

    StateErrorStats stats() const { return {finish(loc_), finish(bias_), finish(head_)}; }

private:
    struct Sums {
        double abs = 0.0;
        double sq = 0.0;
        std::size_t n = 0;
    };
    static void add_one(Sums& s, double e) {
        s.abs += std::abs(e);
        s.sq += e * e;
        ++s.n;
    }
    static ErrorStats finish(const Sums& s) {
        if (s.n == 0) return {};
        return {s.abs / static_cast<double>(s.n), std::sqrt(s.sq / static_cast<double>(s.n)), s.n};
    }
    Sums loc_, bias_, head_;
};

/// MAE/RMSE over steps k > k_start of every series (one series per run).
/// Element k of a series is the state at step k (index 0 is the initial state).
inline StateErrorStats mae_rmse(const std::vector<std::vector<VehicleState>>& estimates,
                                const std::vector<std::vector<VehicleState>>& truth, std::size_t k_start = 20) {
    if (estimates.size() != truth.size()) throw std::invalid_argument("mae_rmse: run count mismatch");
    ErrorAccumulator acc;
    for (std::size_t r = 0; r < estimates.size(); ++r) {
        const auto& e = estimates[r];
        const auto& t = truth[r];
        if (e.size() != t.size()) throw std::invalid_argument("mae_rmse: series length mismatch");
        if (e.size() <= k_start) throw std::invalid_argument("mae_rmse: series shorter than the steady-state start");
        for (std::size_t k = k_start + 1; k < e.size(); ++k) acc.add(state_error(e[k], t[k]));
    }
    return acc.stats();
}

}  // namespace coopslam
