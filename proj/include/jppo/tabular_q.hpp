#pragma once

#include <algorithm>
#include <map>
#include <vector>

#include "jppo/error.hpp"

namespace jppo::agent {

/// Reference Q-learner over small discrete state spaces, used to
/// cross-check the value-update rule.
class TabularQ {
public:
    struct Step {
        int state = 0;
        int action = 0;
        double reward = 0.0;
        int next_state = 0;
        bool terminal = false;
    };

    TabularQ(std::vector<int> states, int num_actions) : num_actions_(num_actions)
    {
        detail::require(num_actions >= 1, "num_actions must be >= 1");
        for (int s : states) {
            table_.emplace(s, std::vector<double>(static_cast<std::size_t>(num_actions), 0.0));
        }
    }

    double value(int state, int action) const { return row(state).at(checked_action(action)); }

    void set(int state, int action, double v) { mutable_row(state).at(checked_action(action)) = v; }

    double max_value(int state) const
    {
        const auto& r = row(state);
        return *std::max_element(r.begin(), r.end());
    }

    /// Q(s, a) += lr * (r + mu * max_a' Q(s', a') - Q(s, a)); no bootstrap on terminal steps.
    void update(const Step& t, double learning_rate, double discount)
    {
        const double bootstrap = t.terminal ? 0.0 : discount * max_value(t.next_state);
        double& q = mutable_row(t.state).at(checked_action(t.action));
        q += learning_rate * (t.reward + bootstrap - q);
    }

private:
    std::size_t checked_action(int action) const
    {
        detail::require(action >= 0 && action < num_actions_, "unknown action key");
        return static_cast<std::size_t>(action);
    }

    const std::vector<double>& row(int state) const
    {
        auto it = table_.find(state);
        detail::require(it != table_.end(), "unknown state key");
        return it->second;
    }

    std::vector<double>& mutable_row(int state)
    {
        auto it = table_.find(state);
        detail::require(it != table_.end(), "unknown state key");
        return it->second;
    }

    int num_actions_;
    std::map<int, std::vector<double>> table_;
};

} // namespace jppo::agent
