#pragma once

#include <cstdint>
#include <algorithm>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jppo/agent.hpp"
#include "jppo/env.hpp"
#include "jppo/error.hpp"

namespace jppo::metrics {

using nlohmann::json;

inline constexpr const char* kEpisodeSchema = "jppo.episode.v1";
inline constexpr const char* kStepSchema = "jppo.step.v1";
inline constexpr const char* kSummarySchema = "jppo.summary.v1";

inline json violations_json(const std::array<std::int64_t, 4>& v)
{
    json j = json::object();
    for (std::size_t k = 0; k < v.size(); ++k) {
        j[env::kViolationNames[k].second] = v[k];
    }
    return j;
}

inline json to_json(const agent::EpisodeMetrics& m)
{
    return json{{"schema", kEpisodeSchema},
                {"episode", m.episode},
                {"steps", m.steps},
                {"total_reward", m.total_reward},
                {"mean_reward", m.mean_reward},
                {"mean_fidelity", m.mean_fidelity},
                {"mean_ber", m.mean_ber},
                {"mean_power_w", m.mean_power_w},
                {"mean_kappa", m.mean_kappa},
                {"mean_latency_s", m.mean_latency_s},
                {"violations", violations_json(m.violations)},
                {"epsilon", m.epsilon},
                {"mean_loss", m.mean_loss}};
}

inline void write_episode(std::ostream& os, const agent::EpisodeMetrics& m) { os << to_json(m).dump() << '\n'; }

namespace detail_metrics {

template <typename T>
T take(const json& j, const char* key, std::size_t line)
{
    auto it = j.find(key);
    if (it == j.end()) {
        throw ConfigError("metrics line " + std::to_string(line) + ": missing field '" + key + "'");
    }
    try {
        if constexpr (std::is_floating_point_v<T>) {
            if (!it->is_number()) {
                throw ConfigError("");
            }
        } else if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer()) {
                throw ConfigError("");
            }
        }
        return it->template get<T>();
    } catch (const std::exception&) {
        throw ConfigError("metrics line " + std::to_string(line) + ": field '" + key + "' has the wrong type");
    }
}

inline void exact_keys(const json& j, const std::vector<std::string>& keys, std::size_t line)
{
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
            throw ConfigError("metrics line " + std::to_string(line) + ": unknown field '" + it.key() + "'");
        }
    }
}

} // namespace detail_metrics

inline agent::EpisodeMetrics episode_from_json(const json& j, std::size_t line = 1)
{
    using detail_metrics::take;
    if (!j.is_object()) {
        throw ConfigError("metrics line " + std::to_string(line) + ": expected an object");
    }
    const auto schema = take<std::string>(j, "schema", line);
    if (schema != kEpisodeSchema) {
        throw ConfigError("metrics line " + std::to_string(line) + ": unsupported schema '" + schema + "'");
    }
    detail_metrics::exact_keys(j,
                               {"schema", "episode", "steps", "total_reward", "mean_reward", "mean_fidelity",
                                "mean_ber", "mean_power_w", "mean_kappa", "mean_latency_s", "violations", "epsilon",
                                "mean_loss"},
                               line);
    agent::EpisodeMetrics m;
    m.episode = take<std::int64_t>(j, "episode", line);
    m.steps = take<std::int64_t>(j, "steps", line);
    m.total_reward = take<double>(j, "total_reward", line);
    m.mean_reward = take<double>(j, "mean_reward", line);
    m.mean_fidelity = take<double>(j, "mean_fidelity", line);
    m.mean_ber = take<double>(j, "mean_ber", line);
    m.mean_power_w = take<double>(j, "mean_power_w", line);
    m.mean_kappa = take<double>(j, "mean_kappa", line);
    m.mean_latency_s = take<double>(j, "mean_latency_s", line);
    m.epsilon = take<double>(j, "epsilon", line);
    m.mean_loss = take<double>(j, "mean_loss", line);
    const auto& v = j.at("violations");
    if (!v.is_object()) {
        throw ConfigError("metrics line " + std::to_string(line) + ": 'violations' must be an object");
    }
    std::vector<std::string> names;
    for (const auto& [tag, name] : env::kViolationNames) {
        names.emplace_back(name);
    }
    detail_metrics::exact_keys(v, names, line);
    for (std::size_t k = 0; k < names.size(); ++k) {
        m.violations[k] = take<std::int64_t>(v, names[k].c_str(), line);
    }
    return m;
}

/// Strict JSONL reader: every line must be a known-schema episode record.
inline std::vector<agent::EpisodeMetrics> read_episodes(std::istream& is)
{
    std::vector<agent::EpisodeMetrics> out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(is, text)) {
        ++line;
        if (text.empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError("metrics line " + std::to_string(line) + ": " + e.what());
        }
        out.push_back(episode_from_json(j, line));
    }
    return out;
}

inline json step_json(std::int64_t episode, std::int64_t step, std::size_t user, const env::UserOutcome& u)
{
    json violated = json::array();
    for (const auto& [tag, name] : env::kViolationNames) {
        if (u.violated.contains(tag)) {
            violated.push_back(name);
        }
    }
    return json{{"schema", kStepSchema},
                {"episode", episode},
                {"step", step},
                {"user", user},
                {"compression_level", u.action.compression_level},
                {"power_level", u.action.power_level},
                {"kappa", u.cost.kappa},
                {"p_tx_w", u.p_tx_w},
                {"prompt_index", u.prompt_index},
                {"fading_gain", u.link.fading_gain},
                {"snr", u.link.snr},
                {"ber", u.link.ber},
                {"f1", u.fidelity.f1},
                {"f2", u.fidelity.f2},
                {"f3", u.fidelity.f3},
                {"f", u.fidelity.f},
                {"energy_j", u.cost.energy_total_j},
                {"latency_s", u.cost.time_total_s},
                {"violated", violated},
                {"reward", u.reward}};
}

/// Window-averaged learning curves: reward, fidelity, BER and transmit power.
inline json summary_series(const std::vector<agent::EpisodeMetrics>& ms, std::int64_t window)
{
    detail::require(window >= 1, "summary window must be >= 1");
    json rows = json::array();
    for (std::size_t start = 0; start < ms.size(); start += static_cast<std::size_t>(window)) {
        const auto end = std::min(ms.size(), start + static_cast<std::size_t>(window));
        double r = 0, f = 0, b = 0, p = 0, k = 0;
        for (std::size_t i = start; i < end; ++i) {
            r += ms[i].total_reward;
            f += ms[i].mean_fidelity;
            b += ms[i].mean_ber;
            p += ms[i].mean_power_w;
            k += ms[i].mean_kappa;
        }
        const double n = static_cast<double>(end - start);
        rows.push_back({{"episode_start", ms[start].episode},
                        {"episode_end", ms[end - 1].episode},
                        {"mean_total_reward", r / n},
                        {"mean_fidelity", f / n},
                        {"mean_ber", b / n},
                        {"mean_power_w", p / n},
                        {"mean_kappa", k / n}});
    }
    return json{{"schema", kSummarySchema}, {"window", window}, {"series", rows}};
}

} // namespace jppo::metrics
