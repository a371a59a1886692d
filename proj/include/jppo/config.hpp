#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jppo/agent.hpp"
#include "jppo/env.hpp"
#include "jppo/error.hpp"
#include "jppo/oracle.hpp"

namespace jppo::config {

using nlohmann::json;

struct RunConfig {
    std::int64_t episodes = 10000;
    std::int64_t eval_episodes = 200;
    std::uint64_t eval_seed = 1000003;
};

/// Everything one experiment needs; the unit of config files and manifests.
struct ExperimentConfig {
    env::EnvConfig env;
    agent::AgentConfig agent;
    RunConfig run;
    oracle::BinSpec oracle;

    void validate() const
    {
        env.validate();
        agent.validate();
        detail::require(run.episodes >= 1, "run.episodes must be >= 1");
        detail::require(run.eval_episodes >= 1, "run.eval_episodes must be >= 1");
        detail::require(oracle.count >= 1, "oracle.bins must be >= 1");
        detail::require(oracle.mc_samples >= 1, "oracle.samples must be >= 1");
        detail::require(oracle.snr_min > 0.0 && oracle.snr_max > oracle.snr_min,
                        "oracle SNR range must satisfy 0 < snr_min < snr_max");
    }
};

namespace detail_cfg {

/// Reads keys out of one JSON object and rejects any key left unread.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) {
            throw ConfigError("config: '" + path_ + "' must be an object");
        }
    }

    template <typename T>
    void read(const char* key, T& out)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) {
            return;
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
                if constexpr (std::is_unsigned_v<T>) {
                    if (it->template get<std::int64_t>() < 0 && !it->is_number_unsigned()) {
                        throw ConfigError("");
                    }
                }
            }
            out = it->template get<T>();
        } catch (const std::exception&) {
            throw ConfigError("config: field '" + field(key) + "' has the wrong type");
        }
    }

    const json* child(const char* key)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.contains(it.key())) {
                throw ConfigError("config: unknown key '" + field(it.key().c_str()) + "'");
            }
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline std::string position_of(const std::string& text, std::size_t byte)
{
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

} // namespace detail_cfg

inline ExperimentConfig from_json(const json& root)
{
    using detail_cfg::Section;
    ExperimentConfig cfg;
    Section top(root, "");

    if (const json* j = top.child("env")) {
        Section s(*j, "env");
        auto& e = cfg.env;
        s.read("num_users", e.num_users);
        s.read("horizon", e.horizon);
        s.read("seed", e.seed);
        s.read("fixed_fading_gain", e.fixed_fading_gain);
        s.read("reference_power_level", e.reference_power_level);
        std::string mode = e.fading_mode == env::FadingMode::fixed ? "fixed" : "rayleigh";
        s.read("fading_mode", mode);
        if (mode != "rayleigh" && mode != "fixed") {
            throw ConfigError("config: field 'env.fading_mode' must be \"rayleigh\" or \"fixed\"");
        }
        e.fading_mode = mode == "fixed" ? env::FadingMode::fixed : env::FadingMode::rayleigh;
        std::string redraw = e.fading_redraw == env::FadingRedraw::per_episode ? "per_episode" : "per_step";
        s.read("fading_redraw", redraw);
        if (redraw != "per_step" && redraw != "per_episode") {
            throw ConfigError("config: field 'env.fading_redraw' must be \"per_step\" or \"per_episode\"");
        }
        e.fading_redraw = redraw == "per_episode" ? env::FadingRedraw::per_episode : env::FadingRedraw::per_step;
        s.finish();
    }
    if (const json* j = top.child("channel")) {
        Section s(*j, "channel");
        auto& c = cfg.env.channel;
        s.read("bandwidth_hz", c.bandwidth_hz);
        s.read("distance_m", c.distance_m);
        s.read("pathloss_exp", c.pathloss_exp);
        s.read("noise_power_w", c.noise_power_w);
        s.read("bits_per_token", c.bits_per_token);
        s.finish();
    }
    if (const json* j = top.child("service")) {
        Section s(*j, "service");
        if (const json* prompts = s.child("prompts")) {
            if (!prompts->is_array() || prompts->empty()) {
                throw ConfigError("config: field 'service.prompts' must be a non-empty array");
            }
            cfg.env.prompts.clear();
            for (std::size_t i = 0; i < prompts->size(); ++i) {
                Section p((*prompts)[i], "service.prompts[" + std::to_string(i) + "]");
                env::WeightedPrompt wp;
                p.read("len_instruction", wp.profile.len_instruction);
                p.read("len_demos", wp.profile.len_demos);
                p.read("len_question", wp.profile.len_question);
                p.read("weight", wp.weight);
                p.finish();
                cfg.env.prompts.push_back(wp);
            }
        }
        if (const json* compute = s.child("compute")) {
            Section c(*compute, "service.compute");
            auto& p = cfg.env.compute;
            c.read("slm_time_per_token_s", p.slm_time_per_token_s);
            c.read("llm_time_per_token_s", p.llm_time_per_token_s);
            c.read("llm_fixed_overhead_s", p.llm_fixed_overhead_s);
            c.read("output_tokens", p.output_tokens);
            c.read("slm_gpu_count", p.slm_gpu_count);
            c.read("slm_gpu_power_w", p.slm_gpu_power_w);
            c.read("llm_gpu_count", p.llm_gpu_count);
            c.read("llm_gpu_power_w", p.llm_gpu_power_w);
            c.finish();
        }
        s.finish();
    }
    if (const json* j = top.child("fidelity")) {
        Section s(*j, "fidelity");
        auto& m = cfg.env.fidelity_cfg;
        std::vector<double> w{cfg.env.weights.w1(), cfg.env.weights.w2(), cfg.env.weights.w3()};
        s.read("weights", w);
        if (w.size() != 3) {
            throw ConfigError("config: field 'fidelity.weights' must hold three numbers");
        }
        try {
            cfg.env.weights = fidelity::FidelityWeights(w[0], w[1], w[2]);
        } catch (const InvalidArgument& e) {
            throw ConfigError(std::string("config: field 'fidelity.weights': ") + e.what());
        }
        s.read("beta1", m.beta1);
        s.read("retention_exp", m.retention_exp);
        s.read("beta3", m.beta3);
        s.read("gamma3", m.gamma3);
        s.finish();
    }
    if (const json* j = top.child("constraints")) {
        Section s(*j, "constraints");
        auto& c = cfg.env.constraints;
        s.read("energy_max_j", c.energy_max_j);
        s.read("power_max_w", c.power_max_w);
        s.read("latency_max_s", c.latency_max_s);
        s.read("fidelity_min", c.fidelity_min);
        s.finish();
    }
    if (const json* j = top.child("reward")) {
        Section s(*j, "reward");
        auto& r = cfg.env.reward_cfg;
        s.read("w_fidelity", r.w_fidelity);
        s.read("w_ber", r.w_ber);
        s.read("w_power", r.w_power);
        s.read("violation_penalty", r.violation_penalty);
        s.finish();
    }
    if (const json* j = top.child("agent")) {
        Section s(*j, "agent");
        auto& a = cfg.agent;
        s.read("learning_rate", a.learning_rate);
        s.read("discount", a.discount);
        s.read("epsilon_start", a.epsilon_start);
        s.read("epsilon_decay", a.epsilon_decay);
        s.read("epsilon_min", a.epsilon_min);
        s.read("batch_size", a.batch_size);
        s.read("buffer_capacity", a.buffer_capacity);
        s.read("target_sync_every", a.target_sync_every);
        s.read("hidden", a.hidden);
        s.finish();
    }
    if (const json* j = top.child("run")) {
        Section s(*j, "run");
        s.read("episodes", cfg.run.episodes);
        s.read("eval_episodes", cfg.run.eval_episodes);
        s.read("eval_seed", cfg.run.eval_seed);
        s.finish();
    }
    if (const json* j = top.child("oracle")) {
        Section s(*j, "oracle");
        s.read("bins", cfg.oracle.count);
        s.read("samples", cfg.oracle.mc_samples);
        s.read("snr_min", cfg.oracle.snr_min);
        s.read("snr_max", cfg.oracle.snr_max);
        s.read("seed", cfg.oracle.seed);
        s.finish();
    }
    top.finish();

    try {
        cfg.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

inline json to_json(const ExperimentConfig& cfg)
{
    const auto& e = cfg.env;
    json prompts = json::array();
    for (const auto& p : e.prompts) {
        prompts.push_back({{"len_instruction", p.profile.len_instruction},
                           {"len_demos", p.profile.len_demos},
                           {"len_question", p.profile.len_question},
                           {"weight", p.weight}});
    }
    const auto& c = e.compute;
    return json{
        {"env",
         {{"num_users", e.num_users},
          {"horizon", e.horizon},
          {"seed", e.seed},
          {"fading_mode", e.fading_mode == env::FadingMode::fixed ? "fixed" : "rayleigh"},
          {"fixed_fading_gain", e.fixed_fading_gain},
          {"fading_redraw", e.fading_redraw == env::FadingRedraw::per_episode ? "per_episode" : "per_step"},
          {"reference_power_level", e.reference_power_level}}},
        {"channel",
         {{"bandwidth_hz", e.channel.bandwidth_hz},
          {"distance_m", e.channel.distance_m},
          {"pathloss_exp", e.channel.pathloss_exp},
          {"noise_power_w", e.channel.noise_power_w},
          {"bits_per_token", e.channel.bits_per_token}}},
        {"service",
         {{"prompts", prompts},
          {"compute",
           {{"slm_time_per_token_s", c.slm_time_per_token_s},
            {"llm_time_per_token_s", c.llm_time_per_token_s},
            {"llm_fixed_overhead_s", c.llm_fixed_overhead_s},
            {"output_tokens", c.output_tokens},
            {"slm_gpu_count", c.slm_gpu_count},
            {"slm_gpu_power_w", c.slm_gpu_power_w},
            {"llm_gpu_count", c.llm_gpu_count},
            {"llm_gpu_power_w", c.llm_gpu_power_w}}}}},
        {"fidelity",
         {{"weights", {e.weights.w1(), e.weights.w2(), e.weights.w3()}},
          {"beta1", e.fidelity_cfg.beta1},
          {"retention_exp", e.fidelity_cfg.retention_exp},
          {"beta3", e.fidelity_cfg.beta3},
          {"gamma3", e.fidelity_cfg.gamma3}}},
        {"constraints",
         {{"energy_max_j", e.constraints.energy_max_j},
          {"power_max_w", e.constraints.power_max_w},
          {"latency_max_s", e.constraints.latency_max_s},
          {"fidelity_min", e.constraints.fidelity_min}}},
        {"reward",
         {{"w_fidelity", e.reward_cfg.w_fidelity},
          {"w_ber", e.reward_cfg.w_ber},
          {"w_power", e.reward_cfg.w_power},
          {"violation_penalty", e.reward_cfg.violation_penalty}}},
        {"agent",
         {{"learning_rate", cfg.agent.learning_rate},
          {"discount", cfg.agent.discount},
          {"epsilon_start", cfg.agent.epsilon_start},
          {"epsilon_decay", cfg.agent.epsilon_decay},
          {"epsilon_min", cfg.agent.epsilon_min},
          {"batch_size", cfg.agent.batch_size},
          {"buffer_capacity", cfg.agent.buffer_capacity},
          {"target_sync_every", cfg.agent.target_sync_every},
          {"hidden", cfg.agent.hidden}}},
        {"run",
         {{"episodes", cfg.run.episodes}, {"eval_episodes", cfg.run.eval_episodes}, {"eval_seed", cfg.run.eval_seed}}},
        {"oracle",
         {{"bins", cfg.oracle.count},
          {"samples", cfg.oracle.mc_samples},
          {"snr_min", cfg.oracle.snr_min},
          {"snr_max", cfg.oracle.snr_max},
          {"seed", cfg.oracle.seed}}},
    };
}

inline ExperimentConfig parse(const std::string& text)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error at " + detail_cfg::position_of(text, e.byte) + ": " + e.what());
    }
    return from_json(root);
}

inline ExperimentConfig load(const std::string& path)
{
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot open config file: " + path);
    }
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str());
}

} // namespace jppo::config
