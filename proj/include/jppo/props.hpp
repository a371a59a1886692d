#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jppo/agent.hpp"
#include "jppo/channel.hpp"
#include "jppo/env.hpp"
#include "jppo/fidelity.hpp"
#include "jppo/oracle.hpp"
#include "jppo/qnetwork.hpp"
#include "jppo/rng.hpp"
#include "jppo/service.hpp"

namespace jppo::props {

using nlohmann::json;
using agent::Transition;
using DNet = agent::QNetwork<double>;

struct Tolerances {
    double exact_rel = 1e-12;
    double agreement = 1e-9;
    double grad_rel = 1e-4;
    double fd_step = 1e-7;
    double golden_rel = 1e-9;
};

/// The formulas the mutation checks swap out one at a time.
struct Impl {
    std::function<std::int64_t(std::int64_t tokens, double kappa)> compressed_tokens;
    std::function<fidelity::FidelityReport(double, double, double, const fidelity::FidelityWeights&)> combine;
    std::function<double(double encode_j, double tx_j)> energy_total;
    std::function<double(const service::EncodeTimes&, const service::ComputeProfile&)> energy_encode;
    std::function<service::TxCost(std::int64_t bits, double p_tx_w, double rate_bps)> tx;
    std::function<double(double snr, const channel::ChannelParams&)> rate;
    std::function<double(double slm_s, double llm_s, double tx_s)> latency_total;
    std::function<agent::LossResult<double>(std::span<const Transition>, const DNet&, const DNet&, double)> td_loss;
    std::function<double(const Transition&, const DNet& current, const DNet& target, double discount)> target;
};

inline Impl reference_impl()
{
    Impl m;
    m.compressed_tokens = [](std::int64_t tokens, double kappa) {
        return service::compressed_tokens(service::PromptProfile{0, tokens, 0}, kappa);
    };
    m.combine = [](double f1, double f2, double f3, const fidelity::FidelityWeights& w) {
        return fidelity::combine(f1, f2, f3, w);
    };
    m.energy_total = [](double e, double t) { return e + t; };
    m.energy_encode = [](const service::EncodeTimes& t, const service::ComputeProfile& c) {
        return service::energy_encode(t, c);
    };
    m.tx = [](std::int64_t bits, double p, double r) { return service::energy_and_time_tx(bits, p, r); };
    m.rate = [](double snr, const channel::ChannelParams& p) { return channel::rate(snr, p); };
    m.latency_total = [](double a, double b, double c) { return a + b + c; };
    m.td_loss = [](std::span<const Transition> batch, const DNet& cur, const DNet& tgt, double mu) {
        return agent::td_loss<double>(batch, cur, tgt, mu);
    };
    m.target = [](const Transition& t, const DNet& cur, const DNet& tgt, double mu) {
        return agent::double_dqn_target<double>(t, cur, tgt, mu);
    };
    return m;
}

struct PropertyResult {
    std::string name;
    std::string module;
    bool passed = false;
    std::string detail;
};

struct Mutation {
    std::string name;
    std::string quantity;
    std::string description;
    std::function<void(Impl&)> apply;
};

struct MutationResult {
    std::string name;
    std::string quantity;
    std::string description;
    bool detected = false;
    std::vector<std::string> failing;
};

struct GoldenResult {
    std::string id;
    std::string source;
    bool passed = false;
    std::string detail;
};

struct Report {
    std::uint64_t seed = 0;
    std::vector<PropertyResult> properties;
    std::vector<MutationResult> mutations;
    std::vector<GoldenResult> goldens;

    bool all_passed() const
    {
        return std::all_of(properties.begin(), properties.end(), [](const auto& p) { return p.passed; }) &&
               std::all_of(mutations.begin(), mutations.end(), [](const auto& m) { return m.detected; }) &&
               std::all_of(goldens.begin(), goldens.end(), [](const auto& g) { return g.passed; });
    }

    std::string text() const
    {
        std::ostringstream os;
        for (const auto& p : properties) {
            os << (p.passed ? "PASS " : "FAIL ") << p.module << "/" << p.name;
            if (!p.passed) {
                os << ": " << p.detail;
            }
            os << '\n';
        }
        for (const auto& m : mutations) {
            os << (m.detected ? "KILLED   " : "SURVIVED ") << m.name << " [" << m.quantity << "]";
            if (!m.failing.empty()) {
                os << " by";
                for (const auto& f : m.failing) {
                    os << ' ' << f;
                }
            }
            os << '\n';
        }
        for (const auto& g : goldens) {
            os << (g.passed ? "PASS " : "FAIL ") << "golden/" << g.id;
            if (!g.passed) {
                os << ": " << g.detail;
            }
            os << '\n';
        }
        os << (all_passed() ? "all checks passed" : "some checks failed") << '\n';
        return os.str();
    }

    json to_json() const
    {
        json props = json::array();
        for (const auto& p : properties) {
            props.push_back({{"name", p.name}, {"module", p.module}, {"passed", p.passed}, {"detail", p.detail}});
        }
        json muts = json::array();
        for (const auto& m : mutations) {
            muts.push_back({{"name", m.name},
                            {"quantity", m.quantity},
                            {"description", m.description},
                            {"detected", m.detected},
                            {"failing_properties", m.failing}});
        }
        json golds = json::array();
        for (const auto& g : goldens) {
            golds.push_back({{"id", g.id}, {"source", g.source}, {"passed", g.passed}, {"detail", g.detail}});
        }
        return json{{"schema", "jppo.props.v1"},
                    {"seed", seed},
                    {"all_passed", all_passed()},
                    {"properties", props},
                    {"mutations", muts},
                    {"goldens", golds}};
    }
};

/// Thrown inside a property body to record a failure with context.
class PropertyFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail_props {

inline void check(bool ok, const std::string& what)
{
    if (!ok) {
        throw PropertyFailure(what);
    }
}

inline bool close(double a, double b, double rel, double abs_floor = 0.0)
{
    if (a == b) {
        return true;
    }
    return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs_floor;
}

inline std::string num(double v)
{
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline DNet random_net(const std::vector<int>& dims, Rng& rng)
{
    auto net = DNet::he_uniform(dims, rng);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) {
            net.bias(l)(i) = 0.2 * (2.0 * uniform01(rng) - 1.0);
        }
    }
    return net;
}

inline env::StateVec random_state(Rng& rng)
{
    return {uniform01(rng), uniform01(rng), 0.5 * uniform01(rng)};
}

inline Transition random_transition(Rng& rng, int actions, bool allow_terminal)
{
    Transition t;
    t.state = random_state(rng);
    t.next_state = random_state(rng);
    t.action_index = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(actions)));
    t.reward = 4.0 * uniform01(rng) - 2.0;
    t.terminal = allow_terminal && uniform01(rng) < 0.2;
    return t;
}

inline env::EnvConfig small_env(int users, int horizon)
{
    env::EnvConfig c;
    c.num_users = users;
    c.horizon = horizon;
    return c;
}

} // namespace detail_props

struct Property {
    std::string name;
    std::string module;
    /// Returns normally on success, throws PropertyFailure on violation.
    std::function<void(const Impl&, const Tolerances&, std::uint64_t seed)> body;
    /// Depends on a swappable formula, so it takes part in mutation runs.
    bool uses_impl = false;
};

inline std::vector<Property> registry()
{
    using namespace detail_props;
    std::vector<Property> ps;
    const channel::ChannelParams ch;

    // ---- channel
    ps.push_back({"ber_monotone_and_bounded", "channel", [](const Impl&, const Tolerances&, std::uint64_t) {
                      check(channel::ber_bpsk(0.0) == 0.5, "ber(0) != 0.5");
                      double prev = 0.5;
                      for (double s = 1e-4; s < 60.0; s *= 1.1) {
                          const double b = channel::ber_bpsk(s);
                          check(b <= prev, "ber increased at snr " + num(s));
                          check(b > 0.0 && b <= 0.5, "ber out of (0, 0.5] at snr " + num(s));
                          prev = b;
                      }
                  }});
    ps.push_back({"rate_increasing_and_linear_in_bandwidth", "channel",
                  [ch](const Impl& m, const Tolerances& tol, std::uint64_t) {
                      check(close(m.rate(1.0, ch), ch.bandwidth_hz, tol.exact_rel), "R(snr=1) != W");
                      check(close(m.rate(3.0, ch), 2.0 * ch.bandwidth_hz, tol.exact_rel), "R(snr=3) != 2W");
                      double prev = m.rate(0.0, ch);
                      check(prev == 0.0, "R(0) != 0");
                      for (double s = 1e-3; s < 1e3; s *= 1.3) {
                          const double r = m.rate(s, ch);
                          check(r > prev, "rate not strictly increasing at snr " + num(s));
                          prev = r;
                          auto wide = ch;
                          wide.bandwidth_hz *= 3.0;
                          check(close(m.rate(s, wide), 3.0 * r, tol.exact_rel), "rate not linear in bandwidth");
                      }
                  }});
    ps.push_back({"snr_linear_in_power_and_gain", "channel", [ch](const Impl&, const Tolerances& tol, std::uint64_t) {
                      const double base = channel::snr(1.0, 1.0, ch);
                      const double expect = 1.0 / (ch.noise_power_w * std::pow(ch.distance_m, ch.pathloss_exp));
                      check(close(base, expect, tol.exact_rel), "snr(1 W, g=1) mismatch");
                      for (double p : {0.5, 2.0, 4.5}) {
                          for (double g : {0.1, 1.0, 3.7}) {
                              check(close(channel::snr(p, g, ch), p * g * base, tol.exact_rel),
                                    "snr not bilinear at p=" + num(p) + " g=" + num(g));
                          }
                      }
                  }});
    ps.push_back({"more_power_less_ber", "channel", [ch](const Impl&, const Tolerances&, std::uint64_t) {
                      for (double g : {0.05, 0.3, 1.0}) {
                          double prev = 1.0;
                          for (int l = 0; l < service::kNumPowerLevels; ++l) {
                              const double b =
                                  channel::ber_bpsk(channel::snr(service::power_of_level(l), g, ch));
                              check(b < prev, "ber did not drop with power at g=" + num(g));
                              prev = b;
                          }
                      }
                  }});
    ps.push_back({"fading_deterministic_per_seed", "channel", [](const Impl&, const Tolerances&, std::uint64_t seed) {
                      Rng a(seed);
                      Rng b(seed);
                      for (int i = 0; i < 1000; ++i) {
                          check(channel::sample_fading(a) == channel::sample_fading(b), "fading streams diverged");
                      }
                  }});

    // ---- service
    ps.push_back({"compressed_tokens_match_ratio", "service", [](const Impl& m, const Tolerances&, std::uint64_t) {
                      for (std::int64_t len = 1; len <= 1200; ++len) {
                          check(m.compressed_tokens(len, 1.0) == len, "kappa = 1 changed the length");
                          for (int lvl = 1; lvl < service::kNumCompressionLevels; ++lvl) {
                              const std::int64_t expect = (len + lvl) / (lvl + 1);
                              const auto got = m.compressed_tokens(len, service::kappa_of_level(lvl));
                              check(got == expect, "tokens(" + std::to_string(len) + ", level " +
                                                       std::to_string(lvl) + ") = " + std::to_string(got) +
                                                       ", expected " + std::to_string(expect));
                          }
                      }
                  }});
    ps.push_back({"costs_non_decreasing_in_kappa", "service", [ch](const Impl&, const Tolerances&, std::uint64_t) {
                      const service::ComputeProfile cp;
                      const service::PromptProfile prompt{40, 500, 60};
                      for (double g : {0.2, 1.0, 5.0}) {
                          for (int pl : {0, 4, 9}) {
                              const auto link = channel::evaluate_link(service::power_of_level(pl), g, ch);
                              double prev_e = std::numeric_limits<double>::infinity();
                              double prev_t = std::numeric_limits<double>::infinity();
                              // from kappa = 1 (level 0) down to kappa = 1/5 (level 4)
                              for (int cl = 0; cl < service::kNumCompressionLevels; ++cl) {
                                  const auto c = service::total_cost(prompt, {cl, pl}, link, cp, ch);
                                  if (cl > 0) {
                                      check(c.energy_total_j <= prev_e, "energy rose as kappa fell");
                                      check(c.time_total_s <= prev_t, "latency rose as kappa fell");
                                  }
                                  prev_e = c.energy_total_j;
                                  prev_t = c.time_total_s;
                              }
                          }
                      }
                  }});
    ps.push_back({"tx_time_decreasing_energy_increasing", "service",
                  [ch](const Impl& m, const Tolerances& tol, std::uint64_t) {
                      const std::int64_t bits = 6400;
                      for (double g : {0.01, 1.0, 30.0}) {
                          double prev_t = std::numeric_limits<double>::infinity();
                          double prev_e = 0.0;
                          for (double p = 0.05; p <= 50.0; p *= 1.25) {
                              const double rate = ch.bandwidth_hz * std::log2(1.0 + channel::snr(p, g, ch));
                              const auto tx = m.tx(bits, p, rate);
                              check(close(tx.time_s, static_cast<double>(bits) / rate, tol.exact_rel),
                                    "t_tx != bits / rate");
                              check(close(tx.energy_j, tx.time_s * p, tol.exact_rel), "E_tx != t_tx * P");
                              check(tx.time_s < prev_t, "t_tx not decreasing in power");
                              // p / log(1 + c p) grows since log(1 + x) > x / (1 + x)
                              check(tx.energy_j > prev_e, "E_tx not increasing in power");
                              prev_t = tx.time_s;
                              prev_e = tx.energy_j;
                          }
                      }
                  }});
    ps.push_back({"encode_energy_matches_gpu_sum", "service", [](const Impl& m, const Tolerances& tol, std::uint64_t) {
                      service::ComputeProfile cp;
                      for (double slm : {0.0, 3.5, 10.0}) {
                          for (double llm : {1.0, 50.0, 90.0}) {
                              const double expect = slm * 1 * 50.0 + llm * 4 * 300.0;
                              check(close(m.energy_encode({slm, llm}, cp), expect, tol.exact_rel),
                                    "E_e mismatch at slm=" + num(slm) + " llm=" + num(llm));
                          }
                      }
                  }});
    ps.push_back({"cost_sums_exact", "service", [ch](const Impl& m, const Tolerances& tol, std::uint64_t seed) {
                      const service::ComputeProfile cp;
                      Rng rng(seed);
                      for (int i = 0; i < 200; ++i) {
                          const service::PromptProfile prompt{1 + static_cast<std::int64_t>(uniform_index(rng, 60)),
                                                              static_cast<std::int64_t>(uniform_index(rng, 800)),
                                                              1 + static_cast<std::int64_t>(uniform_index(rng, 80))};
                          const env::Action a = env::Action::from_index(static_cast<int>(uniform_index(rng, 50)));
                          const double g = 0.05 + 3.0 * uniform01(rng);
                          const auto link = channel::evaluate_link(service::power_of_level(a.power_level), g, ch);
                          const auto c = service::total_cost(prompt, a, link, cp, ch);
                          check(c.energy_total_j == c.energy_encode_j + c.energy_tx_j, "library energy sum inexact");
                          check(c.time_total_s == c.time_slm_s + c.time_llm_s + c.time_tx_s,
                                "library latency sum inexact");
                          check(c.energy_encode_j >= 0 && c.energy_tx_j >= 0 && c.time_slm_s >= 0 &&
                                    c.time_llm_s >= 0 && c.time_tx_s >= 0,
                                "negative cost term");
                          const double e = m.energy_total(c.energy_encode_j, c.energy_tx_j);
                          const double t = m.latency_total(c.time_slm_s, c.time_llm_s, c.time_tx_s);
                          check(close(e, c.energy_encode_j + c.energy_tx_j, tol.exact_rel), "energy total mismatch");
                          check(close(t, c.time_slm_s + c.time_llm_s + c.time_tx_s, tol.exact_rel),
                                "latency total mismatch");
                          check(e > c.energy_tx_j && e > c.energy_encode_j, "energy total misses a term");
                          check(t > c.time_tx_s && t > c.time_llm_s, "latency total misses a term");
                      }
                  }});
    ps.push_back({"uncompressed_baseline", "service", [ch](const Impl&, const Tolerances& tol, std::uint64_t) {
                      const service::ComputeProfile cp;
                      const service::PromptProfile prompt{32, 300, 56};
                      check(service::compressed_bits(prompt, 1.0, ch.bits_per_token) == 388 * ch.bits_per_token,
                            "kappa = 1 bits differ from the raw prompt");
                      const auto t = service::encode_times(prompt, 1.0, cp);
                      check(t.slm_s == 0.0, "kappa = 1 still runs the compressor");
                      check(close(t.llm_s,
                                  cp.llm_fixed_overhead_s + cp.llm_time_per_token_s * (388.0 + cp.output_tokens),
                                  tol.exact_rel),
                            "kappa = 1 LLM time differs from the baseline model");
                  }});

    // ---- fidelity
    ps.push_back({"combine_linear_and_bounded", "fidelity", [](const Impl& m, const Tolerances& tol, std::uint64_t seed) {
                      const fidelity::FidelityWeights w;
                      check(close(m.combine(1, 1, 1, w).f, 1.0, tol.exact_rel), "combine(1,1,1) != 1");
                      check(m.combine(0, 0, 0, w).f == 0.0, "combine(0,0,0) != 0");
                      Rng rng(seed);
                      for (int i = 0; i < 500; ++i) {
                          const double a = uniform01(rng), b = uniform01(rng), c = uniform01(rng);
                          const double f = m.combine(a, b, c, w).f;
                          check(f >= 0.0 && f <= 1.0, "f out of [0, 1]");
                          check(close(f, 0.4 * a + 0.3 * b + 0.3 * c, tol.exact_rel, 1e-15), "f != weighted sum");
                      }
                  }});
    ps.push_back({"fidelity_monotone", "fidelity", [](const Impl&, const Tolerances&, std::uint64_t) {
                      const fidelity::SyntheticFidelity s({}, {});
                      check(s.score(1.0, 0.0).f == 1.0, "f(1, 0) != 1");
                      for (int lvl = 0; lvl < service::kNumCompressionLevels; ++lvl) {
                          const double k = service::kappa_of_level(lvl);
                          double prev = 2.0;
                          for (double ber = 0.0; ber <= 0.5; ber += 0.01) {
                              const double f = s.score(k, ber).f;
                              check(f <= prev, "f increased with ber");
                              prev = f;
                          }
                      }
                      for (double ber : {0.0, 0.05, 0.3, 0.5}) {
                          double prev = -1.0;
                          for (double k = 0.05; k <= 1.0; k += 0.05) {
                              const double f = s.score(k, ber).f;
                              check(f >= prev, "f decreased with kappa");
                              prev = f;
                          }
                      }
                  }});
    ps.push_back({"weights_must_sum_to_one", "fidelity", [](const Impl&, const Tolerances&, std::uint64_t) {
                      bool threw = false;
                      try {
                          fidelity::FidelityWeights(0.4, 0.3, 0.2);
                      } catch (const InvalidArgument&) {
                          threw = true;
                      }
                      check(threw, "weights summing to 0.9 were accepted");
                  }});

    // ---- env
    ps.push_back({"reward_direction", "env", [](const Impl&, const Tolerances&, std::uint64_t) {
                      const env::RewardConfig r;
                      const env::ViolationSet none;
                      const double base = env::reward(0.8, 0.1, 2.0, none, r, 5.0);
                      check(env::reward(0.81, 0.1, 2.0, none, r, 5.0) > base, "reward not increasing in f");
                      check(env::reward(0.8, 0.11, 2.0, none, r, 5.0) < base, "reward not decreasing in ber");
                      check(env::reward(0.8, 0.1, 2.5, none, r, 5.0) < base, "reward not decreasing in power");
                  }});
    ps.push_back({"constraint_flags_exact", "env", [](const Impl&, const Tolerances&, std::uint64_t) {
                      const service::Constraints c;
                      service::CostBreakdown cost;
                      cost.energy_total_j = c.energy_max_j;
                      cost.time_total_s = c.latency_max_s;
                      auto v = env::check_constraints(cost, c.power_max_w, c.fidelity_min + 1e-12, c);
                      check(v.empty(), "values at the limits were flagged");
                      cost.energy_total_j = std::nextafter(c.energy_max_j, 1e300);
                      cost.time_total_s = std::nextafter(c.latency_max_s, 1e300);
                      v = env::check_constraints(cost, std::nextafter(c.power_max_w, 1e300), c.fidelity_min, c);
                      check(v.contains(env::ViolationSet::energy) && v.contains(env::ViolationSet::power) &&
                                v.contains(env::ViolationSet::latency) && v.contains(env::ViolationSet::fidelity),
                            "values just past the limits were not all flagged");
                  }});
    ps.push_back({"trajectory_reproducible", "env", [](const Impl&, const Tolerances&, std::uint64_t seed) {
                      const auto cfg = small_env(2, 10);
                      env::JppoEnv a(cfg);
                      env::JppoEnv b(cfg);
                      check(a.reset(seed) == b.reset(seed), "reset observations differ");
                      Rng rng(derive_seed(seed, 7));
                      for (int t = 0; t < cfg.horizon; ++t) {
                          std::vector<env::Action> acts;
                          for (int u = 0; u < cfg.num_users; ++u) {
                              acts.push_back(env::Action::from_index(static_cast<int>(uniform_index(rng, 50))));
                          }
                          const auto x = a.step(acts);
                          const auto y = b.step(acts);
                          check(x.next_state == y.next_state && x.terminal == y.terminal, "step diverged");
                          for (std::size_t u = 0; u < x.users.size(); ++u) {
                              check(x.users[u].reward == y.users[u].reward, "rewards diverged");
                          }
                      }
                  }});
    ps.push_back({"users_independent", "env", [](const Impl&, const Tolerances&, std::uint64_t seed) {
                      const auto cfg = small_env(3, 5);
                      env::JppoEnv e(cfg);
                      e.reset(seed);
                      Rng rng(derive_seed(seed, 8));
                      for (int t = 0; t < cfg.horizon; ++t) {
                          const std::vector<double> gains(e.fading_gains().begin(), e.fading_gains().end());
                          const std::vector<std::size_t> prompts(e.prompt_indices().begin(),
                                                                 e.prompt_indices().end());
                          std::vector<env::Action> acts;
                          for (int u = 0; u < cfg.num_users; ++u) {
                              acts.push_back(env::Action::from_index(static_cast<int>(uniform_index(rng, 50))));
                          }
                          const auto out = e.step(acts);
                          for (std::size_t u = 0; u < acts.size(); ++u) {
                              const auto solo = e.evaluate(acts[u], gains[u], prompts[u]);
                              check(solo.reward == out.users[u].reward, "user reward depends on other users");
                          }
                      }
                  }});

    // ---- agent
    ps.push_back({"double_target_reduces_to_max_target", "agent",
                  [](const Impl& m, const Tolerances&, std::uint64_t seed) {
                      Rng rng(seed);
                      for (int i = 0; i < 1000; ++i) {
                          const auto net = random_net({3, 8, 8, 50}, rng);
                          const auto t = random_transition(rng, 50, true);
                          const double mu = uniform01(rng);
                          check(m.target(t, net, net, mu) == agent::max_q_target<double>(t, net, mu),
                                "case " + std::to_string(i) + ": targets differ with shared weights");
                      }
                  }});
    ps.push_back({"double_target_below_max_target", "agent", [](const Impl& m, const Tolerances&, std::uint64_t seed) {
                      Rng rng(derive_seed(seed, 2));
                      double sum_double = 0.0;
                      double sum_max = 0.0;
                      for (int i = 0; i < 400; ++i) {
                          const auto cur = random_net({3, 16, 50}, rng);
                          const auto tgt = random_net({3, 16, 50}, rng);
                          auto t = random_transition(rng, 50, false);
                          sum_double += m.target(t, cur, tgt, 0.9);
                          sum_max += agent::max_q_target<double>(t, tgt, 0.9);
                      }
                      check(sum_double < sum_max, "mean double target " + num(sum_double / 400) +
                                                      " not below mean max target " + num(sum_max / 400));
                  }});
    ps.push_back({"loss_gradient_matches_finite_differences", "agent",
                  [](const Impl& m, const Tolerances& tol, std::uint64_t seed) {
                      Rng rng(derive_seed(seed, 3));
                      auto cur = random_net({3, 5, 4, 50}, rng);
                      const auto tgt = random_net({3, 5, 4, 50}, rng);
                      std::vector<Transition> batch;
                      for (int i = 0; i < 6; ++i) {
                          batch.push_back(random_transition(rng, 50, true));
                      }
                      const auto res = m.td_loss(batch, cur, tgt, 0.7);
                      std::vector<double> analytic;
                      for (std::size_t l = 0; l < res.grads.weights.size(); ++l) {
                          const auto& w = res.grads.weights[l];
                          for (Eigen::Index r = 0; r < w.rows(); ++r) {
                              for (Eigen::Index c = 0; c < w.cols(); ++c) {
                                  analytic.push_back(w(r, c));
                              }
                          }
                          for (Eigen::Index r = 0; r < res.grads.biases[l].size(); ++r) {
                              analytic.push_back(res.grads.biases[l](r));
                          }
                      }
                      std::size_t k = 0;
                      std::string bad;
                      cur.for_each_parameter([&](double& p) {
                          const double keep = p;
                          p = keep + tol.fd_step;
                          const double up = m.td_loss(batch, cur, tgt, 0.7).loss;
                          p = keep - tol.fd_step;
                          const double dn = m.td_loss(batch, cur, tgt, 0.7).loss;
                          p = keep;
                          const double numeric = (up - dn) / (2.0 * tol.fd_step);
                          // the absolute floor covers roundoff of the loss itself (~1e-16 / step)
                          if (bad.empty() && !close(analytic[k], numeric, tol.grad_rel, 1e-8)) {
                              bad = "parameter " + std::to_string(k) + ": analytic " + num(analytic[k]) +
                                    " numeric " + num(numeric);
                          }
                          ++k;
                      });
                      check(k == analytic.size(), "gradient count mismatch");
                      check(bad.empty(), bad);
                  }});
    ps.push_back({"target_frozen_between_syncs", "agent", [](const Impl&, const Tolerances&, std::uint64_t seed) {
                      agent::AgentConfig cfg;
                      cfg.batch_size = 8;
                      cfg.buffer_capacity = 64;
                      cfg.target_sync_every = 3;
                      cfg.hidden = {8};
                      agent::DqnAgent<double> ag(cfg, seed);
                      Rng rng(derive_seed(seed, 4));
                      auto snapshot = ag.current();
                      check(ag.target() == snapshot, "target differs from current at start");
                      for (int ep = 1; ep <= 9; ++ep) {
                          for (int s = 0; s < 10; ++s) {
                              ag.remember(random_transition(rng, 50, s == 9));
                              ag.learn();
                              check(ag.target() == snapshot, "target moved between syncs");
                          }
                          ag.end_episode();
                          if (ep % cfg.target_sync_every == 0) {
                              check(ag.target() == ag.current(), "target not synced");
                              snapshot = ag.current();
                          } else {
                              check(ag.target() == snapshot, "target changed off schedule");
                          }
                      }
                  }});
    ps.push_back({"training_deterministic", "agent", [](const Impl&, const Tolerances&, std::uint64_t seed) {
                      auto cfg = small_env(2, 10);
                      agent::AgentConfig ac;
                      ac.batch_size = 16;
                      ac.hidden = {16};
                      env::JppoEnv a(cfg);
                      env::JppoEnv b(cfg);
                      const auto x = agent::train(a, ac, 15, seed);
                      const auto y = agent::train(b, ac, 15, seed);
                      check(x.current == y.current && x.target == y.target, "weights differ across runs");
                      for (std::size_t i = 0; i < x.metrics.size(); ++i) {
                          check(x.metrics[i].total_reward == y.metrics[i].total_reward &&
                                    x.metrics[i].mean_loss == y.metrics[i].mean_loss,
                                "metrics differ at episode " + std::to_string(i));
                      }
                  }});

    // ---- oracle
    ps.push_back({"oracle_agrees_with_env", "oracle", [](const Impl&, const Tolerances& tol, std::uint64_t) {
                      const env::EnvConfig cfg;
                      const env::JppoEnv e(cfg);
                      const oracle::Oracle o(cfg);
                      for (double g : {0.002, 0.05, 0.4, 1.0, 2.5, 9.0}) {
                          for (std::size_t p = 0; p < cfg.prompts.size(); ++p) {
                              for (int a = 0; a < service::kNumActions; ++a) {
                                  const auto x = e.evaluate(env::Action::from_index(a), g, p);
                                  const auto y = o.evaluate(a, g, p);
                                  const auto tag = "action " + std::to_string(a) + " g " + num(g);
                                  check(close(x.reward, y.reward, tol.agreement, tol.agreement), tag + " reward");
                                  check(close(x.fidelity.f, y.f, tol.agreement), tag + " fidelity");
                                  check(close(x.cost.energy_total_j, y.energy_j, tol.agreement), tag + " energy");
                                  check(close(x.cost.time_total_s, y.latency_s, tol.agreement), tag + " latency");
                                  check(close(x.link.ber, y.ber, tol.agreement, 1e-300), tag + " ber");
                                  check(x.violated.bits() == y.violated, tag + " constraint flags");
                              }
                          }
                      }
                  }});
    ps.push_back({"mc_error_shrinks_with_samples", "oracle", [](const Impl&, const Tolerances&, std::uint64_t seed) {
                      const oracle::Oracle o(env::EnvConfig{});
                      const oracle::FadingBand band{0.0, std::numeric_limits<double>::infinity()};
                      const auto a = o.expected_reward(24, band, 2000, seed);
                      const auto b = o.expected_reward(24, band, 8000, seed);
                      const double ratio = b.std_error / a.std_error;
                      check(ratio > 0.35 && ratio < 0.65,
                            "std error ratio for 4x samples is " + num(ratio) + ", expected near 0.5");
                  }});
    ps.push_back({"oracle_considers_every_action", "oracle", [](const Impl&, const Tolerances&, std::uint64_t seed) {
                      const env::EnvConfig cfg;
                      const oracle::Oracle o(cfg);
                      oracle::BinSpec spec;
                      spec.count = 4;
                      spec.mc_samples = 200;
                      spec.seed = seed;
                      const auto table = o.optimal_policy(spec);
                      const auto edges = oracle::Oracle::bin_edges(spec);
                      for (std::size_t b = 0; b < table.bins.size(); ++b) {
                          const oracle::FadingBand band{o.gain_of_observed_snr(edges[b]),
                                                        o.gain_of_observed_snr(edges[b + 1])};
                          int best = -1;
                          double best_v = -std::numeric_limits<double>::infinity();
                          for (int a = 0; a < service::kNumActions; ++a) {
                              const double v = o.expected_reward(a, band, spec.mc_samples, derive_seed(seed, b)).mean;
                              if (v > best_v) {
                                  best_v = v;
                                  best = a;
                              }
                          }
                          check(table.bins[b].best.index() == best,
                                "bin " + std::to_string(b) + " best differs from the exhaustive search");
                          check(table.bins[b].expected_reward == best_v, "bin value differs");
                      }
                  }});
    for (auto& p : ps) {
        static const std::vector<std::string> impl_users = {
            "rate_increasing_and_linear_in_bandwidth", "compressed_tokens_match_ratio",
            "tx_time_decreasing_energy_increasing",   "encode_energy_matches_gpu_sum",
            "cost_sums_exact",                         "combine_linear_and_bounded",
            "double_target_reduces_to_max_target",     "double_target_below_max_target",
            "loss_gradient_matches_finite_differences"};
        p.uses_impl = std::find(impl_users.begin(), impl_users.end(), p.name) != impl_users.end();
    }
    return ps;
}

inline std::vector<Mutation> mutations()
{
    std::vector<Mutation> ms;
    ms.push_back({"tokens_floor", "compression ratio", "compressed length rounds down instead of up",
                  [](Impl& m) {
                      m.compressed_tokens = [](std::int64_t len, double kappa) {
                          return std::max<std::int64_t>(1, static_cast<std::int64_t>(kappa * static_cast<double>(len)));
                      };
                  }});
    ms.push_back({"combine_drops_understanding", "fidelity", "weighted sum omits the w3 f3 term",
                  [](Impl& m) {
                      m.combine = [](double f1, double f2, double, const fidelity::FidelityWeights& w) {
                          return fidelity::FidelityReport{f1, f2, 0.0, w.w1() * f1 + w.w2() * f2};
                      };
                  }});
    ms.push_back({"energy_drops_tx", "total energy", "total energy ignores transmission energy",
                  [](Impl& m) { m.energy_total = [](double e, double) { return e; }; }});
    ms.push_back({"encode_drops_llm", "encoding energy", "encoding energy counts only the compressor GPUs",
                  [](Impl& m) {
                      m.energy_encode = [](const service::EncodeTimes& t, const service::ComputeProfile& c) {
                          return t.slm_s * c.slm_gpu_count * c.slm_gpu_power_w;
                      };
                  }});
    ms.push_back({"tx_energy_without_power", "transmission energy", "E_tx = s / R, power factor dropped",
                  [](Impl& m) {
                      m.tx = [](std::int64_t bits, double, double r) {
                          const double t = static_cast<double>(bits) / r;
                          return service::TxCost{t, t};
                      };
                  }});
    ms.push_back({"rate_natural_log", "rate", "rate uses ln instead of log2",
                  [](Impl& m) {
                      m.rate = [](double snr, const channel::ChannelParams& p) {
                          return p.bandwidth_hz * std::log1p(snr);
                      };
                  }});
    ms.push_back({"latency_drops_tx", "latency", "total latency ignores transmission time",
                  [](Impl& m) { m.latency_total = [](double a, double b, double) { return a + b; }; }});
    ms.push_back({"loss_gradient_halved", "loss", "gradient of the squared error loses its factor 2",
                  [](Impl& m) {
                      m.td_loss = [](std::span<const Transition> batch, const DNet& cur, const DNet& tgt, double mu) {
                          auto r = agent::td_loss<double>(batch, cur, tgt, mu);
                          for (auto& w : r.grads.weights) {
                              w *= 0.5;
                          }
                          for (auto& b : r.grads.biases) {
                              b *= 0.5;
                          }
                          return r;
                      };
                  }});
    ms.push_back({"target_self_argmax", "double dqn target", "target net evaluated at its own argmax",
                  [](Impl& m) {
                      m.target = [](const Transition& t, const DNet&, const DNet& tgt, double mu) {
                          return agent::double_dqn_target<double>(t, tgt, tgt, mu);
                      };
                  }});
    return ms;
}

inline PropertyResult run_property(const Property& p, const Impl& impl, const Tolerances& tol, std::uint64_t seed)
{
    PropertyResult r{p.name, p.module, true, ""};
    try {
        p.body(impl, tol, seed);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = e.what();
    }
    return r;
}

// ---- golden files

struct GoldenCase {
    std::string id;
    std::string kind;
    std::string description;
    std::string source;
    std::string script;
    json input;
    json expected;
};

inline std::vector<GoldenCase> load_golden(const std::filesystem::path& file)
{
    std::ifstream is(file);
    if (!is) {
        throw ConfigError("cannot open golden file: " + file.string());
    }
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("golden file " + file.string() + ": " + e.what());
    }
    std::vector<GoldenCase> out;
    for (const auto& c : j.at("cases")) {
        out.push_back({c.at("id"), c.at("kind"), c.value("description", ""), c.at("script"),
                       c.value("script", ""), c.at("input"), c.at("expected")});
    }
    return out;
}

namespace detail_props {

inline json outcome_json(const env::UserOutcome& u)
{
    return json{{"p_tx_w", u.p_tx_w},
                {"snr", u.link.snr},
                {"rate_bps", u.link.rate_bps},
                {"ber", u.link.ber},
                {"kappa", u.cost.kappa},
                {"tx_bits", u.cost.tx_bits},
                {"time_slm_s", u.cost.time_slm_s},
                {"time_llm_s", u.cost.time_llm_s},
                {"time_tx_s", u.cost.time_tx_s},
                {"time_total_s", u.cost.time_total_s},
                {"energy_encode_j", u.cost.energy_encode_j},
                {"energy_tx_j", u.cost.energy_tx_j},
                {"energy_total_j", u.cost.energy_total_j},
                {"f1", u.fidelity.f1},
                {"f2", u.fidelity.f2},
                {"f3", u.fidelity.f3},
                {"f", u.fidelity.f},
                {"violated", u.violated.bits()},
                {"reward", u.reward}};
}

/// Recomputes a golden case with the library.
inline json compute_golden(const GoldenCase& c)
{
    const env::EnvConfig cfg;
    if (c.kind == "user_outcome") {
        const env::JppoEnv e(cfg);
        const env::Action a{c.input.at("compression_level"), c.input.at("power_level")};
        return outcome_json(e.evaluate(a, c.input.at("fading_gain"), c.input.at("prompt_index")));
    }
    if (c.kind == "cost_table") {
        const double snr = c.input.at("snr");
        const channel::LinkState link{0.0, snr, channel::rate(snr, cfg.channel), channel::ber_bpsk(snr)};
        const auto& prompt = cfg.prompts.at(c.input.at("prompt_index").get<std::size_t>()).profile;
        json rows = json::array();
        for (int a = 0; a < service::kNumActions; ++a) {
            const auto cost = service::total_cost(prompt, env::Action::from_index(a), link, cfg.compute, cfg.channel);
            rows.push_back({{"kappa", cost.kappa},
                            {"tx_bits", cost.tx_bits},
                            {"time_slm_s", cost.time_slm_s},
                            {"time_llm_s", cost.time_llm_s},
                            {"time_tx_s", cost.time_tx_s},
                            {"time_total_s", cost.time_total_s},
                            {"energy_encode_j", cost.energy_encode_j},
                            {"energy_tx_j", cost.energy_tx_j},
                            {"energy_total_j", cost.energy_total_j}});
        }
        return json{{"rows", rows}};
    }
    if (c.kind == "action_rewards") {
        const oracle::Oracle o(cfg);
        json rewards = json::array();
        for (int a = 0; a < service::kNumActions; ++a) {
            rewards.push_back(o.prompt_averaged_reward(a, c.input.at("fading_gain")));
        }
        return json{{"rewards", rewards}};
    }
    if (c.kind == "env_reset") {
        auto ec = cfg;
        ec.num_users = c.input.at("num_users");
        env::JppoEnv e(ec);
        const auto obs = e.reset(c.input.at("seed").get<std::uint64_t>());
        json prompts = json::array();
        for (auto p : e.prompt_indices()) {
            prompts.push_back(p);
        }
        return json{{"fading_gains", e.fading_gains()}, {"prompt_indices", prompts}, {"observation", obs}};
    }
    if (c.kind == "env_step") {
        env::JppoEnv e(cfg);
        e.reset(c.input.at("seed").get<std::uint64_t>());
        const env::Action a{c.input.at("compression_level"), c.input.at("power_level")};
        const auto out = e.step(std::vector<env::Action>{a});
        return json{{"outcome", outcome_json(out.users.front())}, {"next_state", out.next_state}};
    }
    throw ConfigError("unknown golden kind: " + c.kind);
}

inline void compare_json(const json& expected, const json& actual, const std::string& path, double rel,
                         std::string& err)
{
    if (!err.empty()) {
        return;
    }
    if (expected.is_number()) {
        if (!actual.is_number()) {
            err = path + ": expected a number";
            return;
        }
        const double e = expected.get<double>();
        const double a = actual.get<double>();
        if (!close(e, a, rel, 1e-300)) {
            err = path + ": expected " + num(e) + ", got " + num(a);
        }
        return;
    }
    if (expected.is_object()) {
        for (auto it = expected.begin(); it != expected.end(); ++it) {
            if (!actual.contains(it.key())) {
                err = path + "." + it.key() + ": missing";
                return;
            }
            compare_json(*it, actual.at(it.key()), path + "." + it.key(), rel, err);
        }
        return;
    }
    if (expected.is_array()) {
        if (!actual.is_array() || actual.size() != expected.size()) {
            err = path + ": array size mismatch";
            return;
        }
        for (std::size_t i = 0; i < expected.size(); ++i) {
            compare_json(expected[i], actual[i], path + "[" + std::to_string(i) + "]", rel, err);
        }
        return;
    }
    if (expected != actual) {
        err = path + ": value mismatch";
    }
}

} // namespace detail_props

inline GoldenResult check_golden(const GoldenCase& c, double rel)
{
    GoldenResult r{c.id, c.source, false, ""};
    try {
        const auto actual = detail_props::compute_golden(c);
        detail_props::compare_json(c.expected, actual, c.id, rel, r.detail);
        r.passed = r.detail.empty();
    } catch (const std::exception& e) {
        r.detail = e.what();
    }
    return r;
}

/// Runs every property on the reference build, then each mutant against the
/// properties, then any golden files found in golden_dir.
inline Report run_all(const Tolerances& tol = {}, std::uint64_t seed = 20240101,
                      const std::filesystem::path& golden_dir = {})
{
    Report report;
    report.seed = seed;
    const auto props = registry();
    const Impl ref = reference_impl();
    for (const auto& p : props) {
        report.properties.push_back(run_property(p, ref, tol, seed));
    }
    for (const auto& mut : mutations()) {
        Impl impl = ref;
        mut.apply(impl);
        MutationResult mr{mut.name, mut.quantity, mut.description, false, {}};
        for (std::size_t i = 0; i < props.size(); ++i) {
            const auto& p = props[i];
            if (p.uses_impl && report.properties[i].passed && !run_property(p, impl, tol, seed).passed) {
                mr.failing.push_back(p.module + "/" + p.name);
            }
        }
        mr.detected = !mr.failing.empty();
        report.mutations.push_back(std::move(mr));
    }
    if (!golden_dir.empty()) {
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(golden_dir)) {
            if (entry.path().extension() == ".json") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            for (const auto& c : load_golden(f)) {
                report.goldens.push_back(check_golden(c, tol.golden_rel));
            }
        }
    }
    return report;
}

} // namespace jppo::props
