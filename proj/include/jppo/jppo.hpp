#pragma once

#include "jppo/agent.hpp"
#include "jppo/calibrate.hpp"
#include "jppo/channel.hpp"
#include "jppo/checkpoint.hpp"
#include "jppo/config.hpp"
#include "jppo/env.hpp"
#include "jppo/error.hpp"
#include "jppo/fidelity.hpp"
#include "jppo/llm_bridge.hpp"
#include "jppo/metrics.hpp"
#include "jppo/oracle.hpp"
#include "jppo/props.hpp"
#include "jppo/qnetwork.hpp"
#include "jppo/replay_buffer.hpp"
#include "jppo/rng.hpp"
#include "jppo/runner.hpp"
#include "jppo/service.hpp"
#include "jppo/tabular_q.hpp"
