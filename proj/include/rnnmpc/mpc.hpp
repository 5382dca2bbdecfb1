#pragma once

// Receding-horizon control over m future input moves with a pluggable
// p-step prediction model.

#include <deque>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rnnmpc/lstm.hpp"
#include "rnnmpc/plant.hpp"
#include "rnnmpc/sysid.hpp"

namespace rnnmpc {

struct SolverOptions {
    int max_iter = 50;
    double fd_step = 1e-6;
    double step_tol = 1e-7;
    double decrease_tol = 1e-10;
    int qp_max_iter = 2000;
    double qp_tol = 1e-12;
    int max_backtracks = 30;
};

struct MpcSettings {
    int p = 10;
    int m = 10;
    Eigen::Vector2d Qy{2.4, 5.67}; // diagonal
    Eigen::Vector2d Qu{25.0, 25.0}; // diagonal
    PlantState y_star{0.324, 0.406};
    ControlInput u_min{0.75, 0.5};
    ControlInput u_max{0.85, 1.1};
    ControlInput du_min{-0.1, -0.1};
    ControlInput du_max{0.1, 0.1};
    double dt = 0.1;
    SolverOptions solver;

    /// Throws DomainError on an inconsistent setting.
    void validate() const;
};

/// Last p measurements y_{k-p+1..k} and last p applied inputs u_{k-p..k-1},
/// oldest first.
class HistoryBuffer {
public:
    explicit HistoryBuffer(int p);

    void push_measurement(const PlantState& y);
    void push_input(const ControlInput& u);

    int capacity() const { return p_; }
    bool full() const;
    const std::deque<PlantState>& measurements() const { return ys_; }
    const std::deque<ControlInput>& inputs() const { return us_; }
    const PlantState& latest_measurement() const;
    const ControlInput& last_input() const;

private:
    int p_;
    std::deque<PlantState> ys_;
    std::deque<ControlInput> us_;
};

/// Maps the history plus candidate future inputs u_k..u_{k+p-1} to the
/// predictions y_{k+1..k+p}. Implementations are read-only after
/// construction and safe for concurrent use.
class PredictiveModel {
public:
    virtual ~PredictiveModel() = default;

    virtual int horizon() const = 0;

    /// One prediction sequence per candidate.
    virtual std::vector<std::vector<PlantState>>
    predict_many(const HistoryBuffer& hist, const std::vector<std::vector<ControlInput>>& candidates) const = 0;

    std::vector<PlantState> predict(const HistoryBuffer& hist, const std::vector<ControlInput>& future) const;
};

/// Benchmark model: integrates the plant ODEs from the latest measurement.
class TruePlantModel final : public PredictiveModel {
public:
    TruePlantModel(Plant plant, int p);

    int horizon() const override { return p_; }
    std::vector<std::vector<PlantState>>
    predict_many(const HistoryBuffer& hist, const std::vector<std::vector<ControlInput>>& candidates) const override;

private:
    Plant plant_;
    int p_;
};

/// LSTM model: y_{k+j} = N(phi_{k-p+j}) for j = 1..p, one sliding window
/// per prediction step, all evaluated in one batched forward pass.
class RnnModel final : public PredictiveModel {
public:
    RnnModel(LstmNetwork net, Normalization norm, KernelOptions kernel = {});

    int horizon() const override { return net_.horizon(); }
    std::vector<std::vector<PlantState>>
    predict_many(const HistoryBuffer& hist, const std::vector<std::vector<ControlInput>>& candidates) const override;

    /// The (physical-unit) window phi_{k-p+j}, j in 1..p.
    RegressorWindow window(const HistoryBuffer& hist, const std::vector<ControlInput>& future, int j) const;

    const LstmNetwork& network() const { return net_; }
    const Normalization& normalization() const { return norm_; }

private:
    LstmNetwork net_;
    Normalization norm_;
    KernelOptions kernel_;
};

/// u_{k+i} = u_{k-1} + sum_{l<=i} du_l for i < m, held constant afterwards.
std::vector<ControlInput> expand_moves(const std::vector<ControlInput>& du_seq, const ControlInput& u_prev, int p);

std::vector<PlantState> predict_horizon(const PredictiveModel& model, const HistoryBuffer& hist,
                                        const std::vector<ControlInput>& du_seq);

double tracking_cost(const PlantState& y, const MpcSettings& s);
double move_cost(const ControlInput& du, const MpcSettings& s);

/// Quadratic objective: sum_j (y_j - y*)' Qy (y_j - y*) + sum_i du_i' Qu du_i.
double stage_cost(const std::vector<PlantState>& y_pred, const std::vector<ControlInput>& du_seq,
                  const MpcSettings& s);

/// Largest violation of the move and level bounds of a move sequence.
double constraint_violation(const std::vector<ControlInput>& du_seq, const ControlInput& u_prev,
                            const MpcSettings& s);

struct RhcSolution {
    std::vector<ControlInput> du;
    double cost = 0.0;
    double cost_zero = 0.0;
    double cost_warm = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    double constraint_residual = 0.0;
};

/// SQP-lite: Gauss-Newton quadratic models from forward-difference
/// Jacobians of the predicted outputs, each QP solved by projected
/// gradient with exact line search, then a backtracking step on the true
/// objective. Iterates stay feasible; the result never costs more than
/// the zero-move or the warm-start sequence. `converged == false` flags a
/// solve that hit the iteration cap.
RhcSolution solve_rhc(const PredictiveModel& model, const HistoryBuffer& hist, const MpcSettings& s,
                      const std::vector<ControlInput>& warm_start = {});

/// Previous optimum shifted by one step with a zero final move.
std::vector<ControlInput> shift_warm_start(const std::vector<ControlInput>& du);

/// u_prev + du_seq[0], clamped to the level box. Throws ConstraintViolation
/// if clamping would change the input by more than 1e-9 or the move
/// exceeds the rate bounds.
ControlInput apply_first_move(const std::vector<ControlInput>& du_seq, const ControlInput& u_prev,
                              const MpcSettings& s);

class ConstraintViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Euclidean projection of a move sequence onto the feasible set (exact up
/// to the iteration tolerance, then repaired to strict feasibility).
std::vector<ControlInput> project_moves(const std::vector<ControlInput>& du_seq, const ControlInput& u_prev,
                                        const MpcSettings& s);

} // namespace rnnmpc
