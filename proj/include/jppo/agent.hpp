#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "jppo/env.hpp"
#include "jppo/error.hpp"
#include "jppo/qnetwork.hpp"
#include "jppo/replay_buffer.hpp"
#include "jppo/rng.hpp"

namespace jppo::agent {

/// Scalar type of the networks trained by train(); gradient checks
/// instantiate the same code in double.
using PolicyScalar = float;
using PolicyNet = QNetwork<PolicyScalar>;

struct AgentConfig {
    double learning_rate = 1e-3;
    double discount = 0.5;
    double epsilon_start = 1.0;
    double epsilon_decay = 0.995;
    double epsilon_min = 0.05;
    std::size_t batch_size = 64;
    std::size_t buffer_capacity = 10000;
    int target_sync_every = 10;
    std::vector<int> hidden = {64, 64};

    void validate() const
    {
        detail::require(learning_rate > 0.0, "agent.learning_rate must be positive");
        detail::require(discount >= 0.0 && discount < 1.0, "agent.discount must lie in [0, 1)");
        detail::require(epsilon_start > 0.0 && epsilon_start <= 1.0, "agent.epsilon_start must lie in (0, 1]");
        detail::require(epsilon_decay > 0.0 && epsilon_decay <= 1.0, "agent.epsilon_decay must lie in (0, 1]");
        detail::require(epsilon_min > 0.0 && epsilon_min <= epsilon_start,
                        "agent.epsilon_min must lie in (0, epsilon_start]");
        detail::require(batch_size >= 1, "agent.batch_size must be >= 1");
        detail::require(buffer_capacity >= batch_size, "agent.buffer_capacity must be >= batch_size");
        detail::require(target_sync_every >= 1, "agent.target_sync_every must be >= 1");
        for (int h : hidden) {
            detail::require(h >= 1, "agent.hidden widths must be positive");
        }
    }

    std::vector<int> layer_dims(int input_dim) const
    {
        std::vector<int> dims{input_dim};
        dims.insert(dims.end(), hidden.begin(), hidden.end());
        dims.push_back(service::kNumActions);
        return dims;
    }
};

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
int argmax(const Eigen::DenseBase<Derived>& values)
{
    int best = 0;
    for (Eigen::Index i = 1; i < values.size(); ++i) {
        if (values(i) > values(best)) {
            best = static_cast<int>(i);
        }
    }
    return best;
}

template <typename Scalar>
typename QNetwork<Scalar>::Vector q_forward(const QNetwork<Scalar>& net, const env::StateVec& state)
{
    std::array<Scalar, env::kStateDim> input{};
    std::transform(state.begin(), state.end(), input.begin(), [](double v) { return static_cast<Scalar>(v); });
    return net.forward(std::span<const Scalar>(input));
}

/// Epsilon-greedy over the joint action grid.
template <typename Scalar>
int select_action(const QNetwork<Scalar>& net, const env::StateVec& state, double epsilon, Rng& rng)
{
    detail::require(epsilon >= 0.0 && epsilon <= 1.0, "epsilon must lie in [0, 1]");
    if (uniform01(rng) < epsilon) {
        return static_cast<int>(uniform_index(rng, static_cast<std::size_t>(net.output_dim())));
    }
    return argmax(q_forward(net, state));
}

/// r + mu * Q_target(s', argmax_a Q_current(s', a)); r alone when terminal.
template <typename Scalar>
double double_dqn_target(const Transition& t, const QNetwork<Scalar>& current,
                         const QNetwork<Scalar>& target, double discount)
{
    detail::require(current.same_shape(target), "current and target networks differ in shape");
    if (t.terminal) {
        return t.reward;
    }
    const int best = argmax(q_forward(current, t.next_state));
    return t.reward + discount * static_cast<double>(q_forward(target, t.next_state)(best));
}

/// r + mu * max_a Q(s', a) under a single network.
template <typename Scalar>
double max_q_target(const Transition& t, const QNetwork<Scalar>& net, double discount)
{
    if (t.terminal) {
        return t.reward;
    }
    return t.reward + discount * static_cast<double>(q_forward(net, t.next_state).maxCoeff());
}

template <typename Scalar>
struct LossResult {
    double loss = 0.0;
    typename QNetwork<Scalar>::Gradients grads;
};

/// Mean squared TD error over the batch with Double DQN targets held
/// constant; gradients flow through Q(s, a; theta) only.
template <typename Scalar>
LossResult<Scalar> td_loss(std::span<const Transition* const> batch, const QNetwork<Scalar>& current,
                           const QNetwork<Scalar>& target, double discount)
{
    using Net = QNetwork<Scalar>;
    detail::require(!batch.empty(), "td_loss needs a non-empty batch");
    detail::require(current.same_shape(target), "current and target networks differ in shape");
    const auto n = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index dim = current.input_dim();
    detail::require(dim == static_cast<Eigen::Index>(env::kStateDim), "network input must match the state size");

    using Matrix = typename Net::Matrix;
    Matrix s(dim, n);
    Matrix s_next(dim, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < dim; ++k) {
            s(k, i) = static_cast<Scalar>(batch[i]->state[k]);
            s_next(k, i) = static_cast<Scalar>(batch[i]->next_state[k]);
        }
    }
    const Matrix q_next_current = current.forward_batch(s_next);
    const Matrix q_next_target = target.forward_batch(s_next);

    typename Net::Cache cache;
    current.forward_batch(s, cache);
    Matrix d_out = Matrix::Zero(cache.output.rows(), n);
    LossResult<Scalar> result;
    const double scale = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Transition& t = *batch[i];
        double y = t.reward;
        if (!t.terminal) {
            y += discount * static_cast<double>(q_next_target(argmax(q_next_current.col(i)), i));
        }
        const double diff = static_cast<double>(cache.output(t.action_index, i)) - y;
        result.loss += diff * diff * scale;
        d_out(t.action_index, i) = static_cast<Scalar>(2.0 * diff * scale);
    }
    result.grads = current.backward(cache, d_out);
    return result;
}

template <typename Scalar>
LossResult<Scalar> td_loss(std::span<const Transition> batch, const QNetwork<Scalar>& current,
                           const QNetwork<Scalar>& target, double discount)
{
    std::vector<const Transition*> ptrs;
    ptrs.reserve(batch.size());
    for (const auto& t : batch) {
        ptrs.push_back(&t);
    }
    return td_loss(std::span<const Transition* const>(ptrs), current, target, discount);
}

/// Double DQN learner: current and target networks, replay, epsilon schedule.
template <typename Scalar = PolicyScalar>
class DqnAgent {
public:
    using Net = QNetwork<Scalar>;

    DqnAgent(AgentConfig cfg, std::uint64_t seed)
        : cfg_(std::move(cfg)), rng_(seed), buffer_(cfg_.buffer_capacity)
    {
        cfg_.validate();
        current_ = Net::he_uniform(cfg_.layer_dims(static_cast<int>(env::kStateDim)), rng_);
        target_ = current_;
        epsilon_ = cfg_.epsilon_start;
    }

    const AgentConfig& config() const { return cfg_; }
    const Net& current() const { return current_; }
    const Net& target() const { return target_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    double epsilon() const { return epsilon_; }
    int episodes_completed() const { return episodes_; }

    int act(const env::StateVec& state) { return select_action(current_, state, epsilon_, rng_); }

    int act_greedy(const env::StateVec& state) const { return argmax(q_forward(current_, state)); }

    void remember(const Transition& t) { buffer_.push(t); }

    /// One gradient step on a replay mini-batch once enough samples exist.
    std::optional<double> learn()
    {
        if (buffer_.size() < cfg_.batch_size) {
            return std::nullopt;
        }
        buffer_.sample(cfg_.batch_size, rng_, scratch_);
        auto result = td_loss(std::span<const Transition* const>(scratch_), current_, target_, cfg_.discount);
        sgd_step(current_, result.grads, cfg_.learning_rate);
        return result.loss;
    }

    /// Epsilon decay every episode; target sync every target_sync_every episodes.
    void end_episode()
    {
        ++episodes_;
        epsilon_ = std::max(epsilon_ * cfg_.epsilon_decay, cfg_.epsilon_min);
        if (episodes_ % cfg_.target_sync_every == 0) {
            target_ = current_;
        }
    }

private:
    AgentConfig cfg_;
    Rng rng_;
    ReplayBuffer buffer_;
    Net current_;
    Net target_;
    double epsilon_ = 1.0;
    int episodes_ = 0;
    std::vector<const Transition*> scratch_;
};

struct EpisodeMetrics {
    std::int64_t episode = 0;
    std::int64_t steps = 0;
    double total_reward = 0.0;
    double mean_reward = 0.0;
    double mean_fidelity = 0.0;
    double mean_ber = 0.0;
    double mean_power_w = 0.0;
    double mean_kappa = 0.0;
    double mean_latency_s = 0.0;
    /// energy, power, latency, fidelity
    std::array<std::int64_t, 4> violations{};
    double epsilon = 0.0;
    double mean_loss = 0.0;
};

/// Running per-episode aggregates over user-steps.
class EpisodeAccumulator {
public:
    void add(const env::UserOutcome& u)
    {
        ++n_;
        reward_ += u.reward;
        fidelity_ += u.fidelity.f;
        ber_ += u.link.ber;
        power_ += u.p_tx_w;
        kappa_ += u.cost.kappa;
        latency_ += u.cost.time_total_s;
        for (std::size_t k = 0; k < env::kViolationNames.size(); ++k) {
            if (u.violated.contains(env::kViolationNames[k].first)) {
                ++violations_[k];
            }
        }
    }

    void add_loss(double loss)
    {
        ++loss_n_;
        loss_ += loss;
    }

    EpisodeMetrics finish(std::int64_t episode, double epsilon) const
    {
        EpisodeMetrics m;
        m.episode = episode;
        m.steps = n_;
        const double n = n_ > 0 ? static_cast<double>(n_) : 1.0;
        m.total_reward = reward_;
        m.mean_reward = reward_ / n;
        m.mean_fidelity = fidelity_ / n;
        m.mean_ber = ber_ / n;
        m.mean_power_w = power_ / n;
        m.mean_kappa = kappa_ / n;
        m.mean_latency_s = latency_ / n;
        m.violations = violations_;
        m.epsilon = epsilon;
        m.mean_loss = loss_n_ > 0 ? loss_ / static_cast<double>(loss_n_) : 0.0;
        return m;
    }

private:
    std::int64_t n_ = 0;
    double reward_ = 0.0;
    double fidelity_ = 0.0;
    double ber_ = 0.0;
    double power_ = 0.0;
    double kappa_ = 0.0;
    double latency_ = 0.0;
    std::array<std::int64_t, 4> violations_{};
    std::int64_t loss_n_ = 0;
    double loss_ = 0.0;
};

struct TrainResult {
    PolicyNet current;
    PolicyNet target;
    std::vector<EpisodeMetrics> metrics;
};

using EpisodeCallback = std::function<void(const EpisodeMetrics&)>;

inline env::StateVec user_slice(std::span<const double> joint, std::size_t user)
{
    env::StateVec s{};
    std::copy_n(joint.begin() + static_cast<std::ptrdiff_t>(user * env::kStateDim), env::kStateDim, s.begin());
    return s;
}

/// Runs the full Double DQN loop for the given number of episodes. One shared
/// network acts for every user slot; each slot contributes its own transition.
inline TrainResult train(env::JppoEnv& environment, const AgentConfig& cfg, std::int64_t episodes,
                         std::uint64_t seed, const EpisodeCallback& on_episode = {})
{
    detail::require(episodes >= 1, "episodes must be >= 1");
    DqnAgent<PolicyScalar> agent(cfg, derive_seed(seed, 1));
    const auto users = static_cast<std::size_t>(environment.config().num_users);
    TrainResult result;
    result.metrics.reserve(static_cast<std::size_t>(episodes));
    std::vector<env::Action> actions(users);
    std::vector<env::StateVec> states(users);
    for (std::int64_t ep = 0; ep < episodes; ++ep) {
        auto joint = ep == 0 ? environment.reset(seed) : environment.reset();
        for (std::size_t u = 0; u < users; ++u) {
            states[u] = user_slice(joint, u);
        }
        const double eps = agent.epsilon();
        EpisodeAccumulator acc;
        for (;;) {
            for (std::size_t u = 0; u < users; ++u) {
                actions[u] = env::Action::from_index(agent.act(states[u]));
            }
            const auto out = environment.step(actions);
            for (std::size_t u = 0; u < users; ++u) {
                Transition t;
                t.state = states[u];
                t.action_index = actions[u].index();
                t.reward = out.users[u].reward;
                t.next_state = user_slice(out.next_state, u);
                t.terminal = out.terminal;
                agent.remember(t);
                acc.add(out.users[u]);
                states[u] = t.next_state;
            }
            if (auto loss = agent.learn()) {
                acc.add_loss(*loss);
            }
            if (out.terminal) {
                break;
            }
        }
        agent.end_episode();
        result.metrics.push_back(acc.finish(ep, eps));
        if (on_episode) {
            on_episode(result.metrics.back());
        }
    }
    result.current = agent.current();
    result.target = agent.target();
    return result;
}

} // namespace jppo::agent
