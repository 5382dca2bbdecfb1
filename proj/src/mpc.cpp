#include "rnnmpc/mpc.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "rnnmpc/errors.hpp"

namespace rnnmpc {

void MpcSettings::validate() const
{
    if (p < 1) throw DomainError("mpc: p must be >= 1");
    if (m < 1 || m > p) throw DomainError("mpc: m must lie in [1, p]");
    if ((Qy.array() < 0.0).any() || (Qu.array() < 0.0).any()) throw DomainError("mpc: weights must be >= 0");
    if (!(u_min.q < u_max.q) || !(u_min.T < u_max.T)) throw DomainError("mpc: u_min must be < u_max");
    if (!(du_min.q < 0.0 && 0.0 < du_max.q) || !(du_min.T < 0.0 && 0.0 < du_max.T))
        throw DomainError("mpc: rate bounds must satisfy du_min < 0 < du_max");
    if (!(dt > 0.0)) throw DomainError("mpc: dt must be positive");
    if (solver.max_iter < 1 || !(solver.fd_step > 0.0)) throw DomainError("mpc: invalid solver options");
}

// ---------------------------------------------------------------------------

HistoryBuffer::HistoryBuffer(int p) : p_(p)
{
    if (p < 1) throw DomainError("history capacity must be >= 1");
}

void HistoryBuffer::push_measurement(const PlantState& y)
{
    ys_.push_back(y);
    if (static_cast<int>(ys_.size()) > p_) ys_.pop_front();
}

void HistoryBuffer::push_input(const ControlInput& u)
{
    us_.push_back(u);
    if (static_cast<int>(us_.size()) > p_) us_.pop_front();
}

bool HistoryBuffer::full() const
{
    return static_cast<int>(ys_.size()) == p_ && static_cast<int>(us_.size()) == p_;
}

const PlantState& HistoryBuffer::latest_measurement() const
{
    if (ys_.empty()) throw DomainError("history holds no measurement");
    return ys_.back();
}

const ControlInput& HistoryBuffer::last_input() const
{
    if (us_.empty()) throw DomainError("history holds no input");
    return us_.back();
}

// ---------------------------------------------------------------------------

std::vector<PlantState> PredictiveModel::predict(const HistoryBuffer& hist,
                                                 const std::vector<ControlInput>& future) const
{
    return predict_many(hist, {future}).front();
}

TruePlantModel::TruePlantModel(Plant plant, int p) : plant_(std::move(plant)), p_(p)
{
    if (p < 1) throw DomainError("model horizon must be >= 1");
}

std::vector<std::vector<PlantState>>
TruePlantModel::predict_many(const HistoryBuffer& hist, const std::vector<std::vector<ControlInput>>& candidates) const
{
    const PlantState y0 = hist.latest_measurement();
    std::vector<std::vector<PlantState>> out(candidates.size());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const auto& future = candidates[c];
        if (static_cast<int>(future.size()) != p_) throw ShapeError("candidate input sequence length != p");
        out[c].reserve(future.size());
        PlantState x = y0;
        for (const auto& u : future) {
            x = plant_.step(x, u);
            out[c].push_back(x);
        }
    }
    return out;
}

RnnModel::RnnModel(LstmNetwork net, Normalization norm, KernelOptions kernel)
    : net_(std::move(net)), norm_(norm), kernel_(kernel)
{
}

RegressorWindow RnnModel::window(const HistoryBuffer& hist, const std::vector<ControlInput>& future, int j) const
{
    const int p = horizon();
    if (!hist.full() || hist.capacity() != p) throw DomainError("RNN model needs a full history of p entries");
    if (static_cast<int>(future.size()) != p) throw ShapeError("candidate input sequence length != p");
    if (j < 1 || j > p) throw DomainError("window index out of range");
    // Inputs u_{k-p} .. u_{k+p-1}: history first, then the candidate.
    auto input_at = [&](int s) -> const ControlInput& {
        return s < p ? hist.inputs()[static_cast<std::size_t>(s)] : future[static_cast<std::size_t>(s - p)];
    };
    RegressorWindow w;
    w.y0 = hist.measurements()[static_cast<std::size_t>(j - 1)];
    w.u_seq.reserve(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) w.u_seq.push_back(input_at(j + i));
    return w;
}

std::vector<std::vector<PlantState>>
RnnModel::predict_many(const HistoryBuffer& hist, const std::vector<std::vector<ControlInput>>& candidates) const
{
    const int p = horizon();
    if (!hist.full() || hist.capacity() != p) throw DomainError("RNN model needs a full history of p entries");
    const auto nc = static_cast<Eigen::Index>(candidates.size());
    Eigen::MatrixXd inputs(kSlotWidth * p, nc * p);

    // Normalized history, shared by every candidate.
    std::vector<ControlInput> past;
    for (const auto& u : hist.inputs()) past.push_back(norm_.apply(u));
    std::vector<PlantState> ys;
    for (const auto& y : hist.measurements()) ys.push_back(norm_.apply(y));

    std::vector<ControlInput> fut(static_cast<std::size_t>(p));
    for (Eigen::Index c = 0; c < nc; ++c) {
        const auto& future = candidates[static_cast<std::size_t>(c)];
        if (static_cast<int>(future.size()) != p) throw ShapeError("candidate input sequence length != p");
        for (int i = 0; i < p; ++i) fut[i] = norm_.apply(future[i]);
        for (int j = 1; j <= p; ++j) {
            auto col = inputs.col(c * p + (j - 1));
            col.setZero();
            col(0) = ys[j - 1].cA;
            col(1) = ys[j - 1].cR;
            for (int i = 0; i < p; ++i) {
                const int s = j + i;
                const ControlInput& u = s < p ? past[s] : fut[s - p];
                col(kSlotWidth * i + 2) = u.q;
                col(kSlotWidth * i + 3) = u.T;
            }
        }
    }
    const Eigen::MatrixXd y = forward_batch(net_, inputs, kernel_);
    std::vector<std::vector<PlantState>> out(candidates.size());
    for (Eigen::Index c = 0; c < nc; ++c) {
        auto& seq = out[static_cast<std::size_t>(c)];
        seq.reserve(static_cast<std::size_t>(p));
        for (int j = 0; j < p; ++j) seq.push_back(norm_.invert(PlantState{y(0, c * p + j), y(1, c * p + j)}));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<ControlInput> expand_moves(const std::vector<ControlInput>& du_seq, const ControlInput& u_prev, int p)
{
    std::vector<ControlInput> out;
    out.reserve(static_cast<std::size_t>(p));
    ControlInput u = u_prev;
    for (int i = 0; i < p; ++i) {
        if (i < static_cast<int>(du_seq.size())) {
            u.q += du_seq[i].q;
            u.T += du_seq[i].T;
        }
        out.push_back(u);
    }
    return out;
}

std::vector<PlantState> predict_horizon(const PredictiveModel& model, const HistoryBuffer& hist,
                                        const std::vector<ControlInput>& du_seq)
{
    if (hist.inputs().empty() || hist.measurements().empty()) throw DomainError("predict_horizon: history is empty");
    if (!hist.full()) throw DomainError("predict_horizon: history is not full");
    return model.predict(hist, expand_moves(du_seq, hist.last_input(), model.horizon()));
}

double tracking_cost(const PlantState& y, const MpcSettings& s)
{
    const double ea = y.cA - s.y_star.cA;
    const double er = y.cR - s.y_star.cR;
    return s.Qy(0) * ea * ea + s.Qy(1) * er * er;
}

double move_cost(const ControlInput& du, const MpcSettings& s)
{
    return s.Qu(0) * du.q * du.q + s.Qu(1) * du.T * du.T;
}

double stage_cost(const std::vector<PlantState>& y_pred, const std::vector<ControlInput>& du_seq, const MpcSettings& s)
{
    double J = 0.0;
    for (const auto& y : y_pred) J += tracking_cost(y, s);
    for (const auto& du : du_seq) J += move_cost(du, s);
    return J;
}

double constraint_violation(const std::vector<ControlInput>& du_seq, const ControlInput& u_prev, const MpcSettings& s)
{
    double worst = 0.0;
    ControlInput u = u_prev;
    for (const auto& du : du_seq) {
        worst = std::max({worst, s.du_min.q - du.q, du.q - s.du_max.q, s.du_min.T - du.T, du.T - s.du_max.T});
        u.q += du.q;
        u.T += du.T;
        worst = std::max({worst, s.u_min.q - u.q, u.q - s.u_max.q, s.u_min.T - u.T, u.T - s.u_max.T});
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Projection onto {du_min <= du_i <= du_max, u_min <= u_prev + cumsum_i <= u_max}

namespace {

struct ChannelBounds {
    double lo, hi; // per-move
    double L, U;   // on the cumulative sum
};

/// Dykstra's alternating projections over the box and the m slabs, followed
/// by a sequential clamp that enforces feasibility to rounding.
void project_channel(Eigen::Ref<Eigen::VectorXd> a, const ChannelBounds& b)
{
    const Eigen::Index m = a.size();
    if (b.L > 0.0 || b.U < 0.0) throw DomainError("previous input lies outside the level bounds");
    Eigen::VectorXd x = a;
    std::vector<Eigen::VectorXd> incr(static_cast<std::size_t>(m + 1), Eigen::VectorXd::Zero(m));
    Eigen::VectorXd y(m);
    for (int sweep = 0; sweep < 20000; ++sweep) {
        const Eigen::VectorXd x_old = x;
        y = x + incr[0];
        x = y.cwiseMax(b.lo).cwiseMin(b.hi);
        incr[0] = y - x;
        for (Eigen::Index i = 0; i < m; ++i) {
            auto& inc = incr[static_cast<std::size_t>(i + 1)];
            y = x + inc;
            const double s = y.head(i + 1).sum();
            x = y;
            if (s > b.U) x.head(i + 1).array() -= (s - b.U) / static_cast<double>(i + 1);
            else if (s < b.L) x.head(i + 1).array() += (b.L - s) / static_cast<double>(i + 1);
            inc = y - x;
        }
        if ((x - x_old).cwiseAbs().maxCoeff() < 1e-15) break;
    }
    double v = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double lo = std::max(b.lo, b.L - v);
        const double hi = std::min(b.hi, b.U - v);
        x(i) = std::clamp(x(i), lo, hi);
        v += x(i);
    }
    a = x;
}

std::array<ChannelBounds, 2> bounds_for(const ControlInput& u_prev, const MpcSettings& s)
{
    return {ChannelBounds{s.du_min.q, s.du_max.q, s.u_min.q - u_prev.q, s.u_max.q - u_prev.q},
            ChannelBounds{s.du_min.T, s.du_max.T, s.u_min.T - u_prev.T, s.u_max.T - u_prev.T}};
}

// z = [dq_0, dT_0, dq_1, dT_1, ...]
Eigen::VectorXd to_vector(const std::vector<ControlInput>& du, int m)
{
    Eigen::VectorXd z = Eigen::VectorXd::Zero(2 * m);
    for (int i = 0; i < m && i < static_cast<int>(du.size()); ++i) {
        z(2 * i) = du[i].q;
        z(2 * i + 1) = du[i].T;
    }
    return z;
}

std::vector<ControlInput> to_moves(const Eigen::VectorXd& z)
{
    std::vector<ControlInput> du(static_cast<std::size_t>(z.size() / 2));
    for (std::size_t i = 0; i < du.size(); ++i) du[i] = {z(2 * i), z(2 * i + 1)};
    return du;
}

void project_in_place(Eigen::VectorXd& z, const std::array<ChannelBounds, 2>& cb)
{
    const Eigen::Index m = z.size() / 2;
    for (int c = 0; c < 2; ++c) {
        Eigen::VectorXd a(m);
        for (Eigen::Index i = 0; i < m; ++i) a(i) = z(2 * i + c);
        project_channel(a, cb[c]);
        for (Eigen::Index i = 0; i < m; ++i) z(2 * i + c) = a(i);
    }
}

} // namespace

std::vector<ControlInput> project_moves(const std::vector<ControlInput>& du_seq, const ControlInput& u_prev,
                                        const MpcSettings& s)
{
    Eigen::VectorXd z = to_vector(du_seq, static_cast<int>(du_seq.size()));
    project_in_place(z, bounds_for(u_prev, s));
    return to_moves(z);
}

// ---------------------------------------------------------------------------
// SQP-lite

namespace {

class Objective {
public:
    Objective(const PredictiveModel& model, const HistoryBuffer& hist, const MpcSettings& s)
        : model_(model), hist_(hist), s_(s), u_prev_(hist.last_input())
    {
        const int p = s.p;
        qy_.resize(2 * p);
        for (int j = 0; j < p; ++j) qy_.segment(2 * j, 2) = s.Qy;
        qu_.resize(2 * s.m);
        for (int i = 0; i < s.m; ++i) qu_.segment(2 * i, 2) = s.Qu;
    }

    /// Output residuals (y_j - y*) stacked, one vector per candidate.
    std::vector<Eigen::VectorXd> residuals(const std::vector<Eigen::VectorXd>& zs)
    {
        std::vector<std::vector<ControlInput>> cands;
        cands.reserve(zs.size());
        for (const auto& z : zs) cands.push_back(expand_moves(to_moves(z), u_prev_, s_.p));
        const auto preds = model_.predict_many(hist_, cands);
        evaluations_ += static_cast<int>(zs.size());
        std::vector<Eigen::VectorXd> out;
        out.reserve(zs.size());
        for (const auto& seq : preds) {
            Eigen::VectorXd r(2 * s_.p);
            for (int j = 0; j < s_.p; ++j) {
                r(2 * j) = seq[j].cA - s_.y_star.cA;
                r(2 * j + 1) = seq[j].cR - s_.y_star.cR;
            }
            out.push_back(std::move(r));
        }
        return out;
    }

    double cost(const Eigen::VectorXd& r, const Eigen::VectorXd& z) const
    {
        return (qy_.array() * r.array().square()).sum() + (qu_.array() * z.array().square()).sum();
    }

    const Eigen::VectorXd& qy() const { return qy_; }
    const Eigen::VectorXd& qu() const { return qu_; }
    int evaluations() const { return evaluations_; }

private:
    const PredictiveModel& model_;
    const HistoryBuffer& hist_;
    const MpcSettings& s_;
    ControlInput u_prev_;
    Eigen::VectorXd qy_, qu_;
    int evaluations_ = 0;
};

/// min 1/2 d'Hd + g'd  s.t.  z + d feasible, by projected gradient with an
/// exact line search along each feasible direction.
Eigen::VectorXd solve_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, const Eigen::VectorXd& z,
                         const std::array<ChannelBounds, 2>& cb, const SolverOptions& opt)
{
    const double lipschitz = std::max(H.cwiseAbs().rowwise().sum().maxCoeff(), 1e-12);
    const double step = 1.0 / lipschitz;
    Eigen::VectorXd w = z;
    for (int it = 0; it < opt.qp_max_iter; ++it) {
        const Eigen::VectorXd grad = H * (w - z) + g;
        Eigen::VectorXd target = w - step * grad;
        project_in_place(target, cb);
        const Eigen::VectorXd d = target - w;
        if (d.cwiseAbs().maxCoeff() < opt.qp_tol) break;
        const double curv = d.dot(H * d);
        const double slope = grad.dot(d);
        if (slope >= 0.0) break;
        const double t = curv > 0.0 ? std::min(1.0, -slope / curv) : 1.0;
        w += t * d;
    }
    return w - z;
}

} // namespace

RhcSolution solve_rhc(const PredictiveModel& model, const HistoryBuffer& hist, const MpcSettings& s,
                      const std::vector<ControlInput>& warm_start)
{
    if (!hist.full()) throw DomainError("solve_rhc: history is not full");
    if (model.horizon() != s.p) throw ShapeError("solve_rhc: model horizon differs from settings.p");
    const int nv = 2 * s.m;
    const auto cb = bounds_for(hist.last_input(), s);
    const auto& opt = s.solver;
    Objective obj(model, hist, s);

    Eigen::VectorXd zero = Eigen::VectorXd::Zero(nv);
    Eigen::VectorXd warm = to_vector(warm_start, s.m);
    project_in_place(warm, cb);

    RhcSolution sol;
    {
        const auto r = obj.residuals({zero, warm});
        sol.cost_zero = obj.cost(r[0], zero);
        sol.cost_warm = obj.cost(r[1], warm);
    }
    // Ties go to the smaller move.
    const bool start_warm = sol.cost_warm < sol.cost_zero;
    Eigen::VectorXd z = start_warm ? warm : zero;
    double f = start_warm ? sol.cost_warm : sol.cost_zero;

    const double h = opt.fd_step;
    for (int iter = 1; iter <= opt.max_iter; ++iter) {
        sol.iterations = iter;
        std::vector<Eigen::VectorXd> pts;
        pts.reserve(static_cast<std::size_t>(nv + 1));
        pts.push_back(z);
        for (int v = 0; v < nv; ++v) {
            pts.push_back(z);
            pts.back()(v) += h;
        }
        const auto rs = obj.residuals(pts);
        const Eigen::VectorXd& r = rs[0];
        Eigen::MatrixXd J(r.size(), nv);
        for (int v = 0; v < nv; ++v) J.col(v) = (rs[static_cast<std::size_t>(v + 1)] - r) / h;

        const Eigen::MatrixXd QJ = obj.qy().asDiagonal() * J;
        Eigen::MatrixXd H = 2.0 * J.transpose() * QJ;
        H.diagonal() += 2.0 * obj.qu();
        const Eigen::VectorXd g = 2.0 * (QJ.transpose() * r) + 2.0 * obj.qu().cwiseProduct(z);

        const Eigen::VectorXd d = solve_qp(H, g, z, cb, opt);
        const double slope = g.dot(d);
        if (d.norm() < opt.step_tol || slope >= 0.0) {
            sol.converged = true;
            break;
        }

        double t = 1.0;
        bool accepted = false;
        Eigen::VectorXd z_new;
        double f_new = f;
        for (int bt = 0; bt <= opt.max_backtracks; ++bt, t *= 0.5) {
            z_new = z + t * d;
            f_new = obj.cost(obj.residuals({z_new})[0], z_new);
            if (f_new <= f + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            sol.converged = true;
            break;
        }
        const double decrease = f - f_new;
        const double step_norm = (z_new - z).norm();
        z = std::move(z_new);
        f = f_new;
        if (step_norm < opt.step_tol || decrease < opt.decrease_tol) {
            sol.converged = true;
            break;
        }
    }

    sol.du = to_moves(z);
    sol.cost = f;
    sol.evaluations = obj.evaluations();
    sol.constraint_residual = constraint_violation(sol.du, hist.last_input(), s);
    return sol;
}

std::vector<ControlInput> shift_warm_start(const std::vector<ControlInput>& du)
{
    if (du.empty()) return {};
    std::vector<ControlInput> out(du.begin() + 1, du.end());
    out.push_back({0.0, 0.0});
    return out;
}

ControlInput apply_first_move(const std::vector<ControlInput>& du_seq, const ControlInput& u_prev,
                              const MpcSettings& s)
{
    if (du_seq.empty()) throw DomainError("apply_first_move: empty move sequence");
    const auto& du = du_seq.front();
    constexpr double tol = 1e-9;
    if (du.q < s.du_min.q - tol || du.q > s.du_max.q + tol || du.T < s.du_min.T - tol || du.T > s.du_max.T + tol)
        throw ConstraintViolation("first move exceeds the rate bounds");
    const ControlInput raw{u_prev.q + du.q, u_prev.T + du.T};
    const ControlInput u{std::clamp(raw.q, s.u_min.q, s.u_max.q), std::clamp(raw.T, s.u_min.T, s.u_max.T)};
    if (std::abs(u.q - raw.q) > tol || std::abs(u.T - raw.T) > tol)
        throw ConstraintViolation("first move leaves the input box (q=" + std::to_string(raw.q) +
                                  ", T=" + std::to_string(raw.T) + ")");
    return u;
}

} // namespace rnnmpc
