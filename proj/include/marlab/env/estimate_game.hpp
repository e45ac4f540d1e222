#pragma once

#include "marlab/core/rng.hpp"
#include "marlab/graph/comm_graph.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <vector>

namespace marlab
{

struct GameConfig
{
	int n_agents = 4;
	int horizon = 5;
	int n_actions = 4;
	double edge_density = 0.6;
	double local_weight = 0.3;

	void validate() const
	{
		MARLAB_CHECK(n_agents >= 1, "game: need at least one agent");
		MARLAB_CHECK(horizon >= 1, "game: need at least one step");
		MARLAB_CHECK(n_actions >= 2, "game: need at least two actions");
		MARLAB_CHECK(edge_density >= 0.0 && edge_density <= 1.0, "game: density outside [0,1]");
		MARLAB_CHECK(local_weight >= 0.0 && local_weight <= 1.0, "game: local weight outside [0,1]");
	}
};

struct GameState
{
	Vec<double> s;
	CommGraph<double> graph; // adjacency fixed for the whole episode
	int t = 0;
};

struct GameStep
{
	GameState state;
	Vec<double> rewards;
	bool done = false;
};

// State and adjacency draw from separate streams of the episode seed so the
// two can be varied independently in tests.
inline GameState game_reset(const GameConfig& cfg, uint64_t episode_seed)
{
	cfg.validate();
	GameState st;
	Rng state_rng(split_seed(episode_seed, 0));
	st.s.resize(cfg.n_agents);
	for (int i = 0; i < cfg.n_agents; ++i) { st.s[i] = state_rng.uniform(); }
	st.graph = random_adjacency<double>(cfg.n_agents, cfg.edge_density, split_seed(episode_seed, 1));
	st.t = 0;
	return st;
}

// Observation of agent i is its own scalar state.
inline Vec<double> game_observations(const GameState& st)
{
	return st.s;
}

inline double neighbor_mean(const GameState& st, int i, bool centred)
{
	double acc = 0.0;
	int count = 0;
	const auto n = st.graph.n_nodes();
	for (index_t j = 0; j < n; ++j)
	{
		if (st.graph.has_edge(i, j))
		{
			acc += centred ? st.s[j] - 0.5 : st.s[j];
			++count;
		}
	}
	if (count == 0) { return 0.0; } // isolated agents depend on nobody
	return acc / double(count);
}

inline Vec<double> target_y(const GameConfig& cfg, const GameState& st)
{
	const double eta = cfg.local_weight;
	Vec<double> y(cfg.n_agents);
	for (int i = 0; i < cfg.n_agents; ++i)
	{
		y[i] = 2.0 * (eta * (st.s[i] - 0.5) + (1.0 - eta) * neighbor_mean(st, i, true)) + 0.5;
	}
	return y;
}

// Action a covers the interval [a/|A|, (a+1)/|A|); its centre misses y by up
// to the half-width for free, anything beyond is penalised linearly.
inline double action_penalty(int action, double y, int n_actions)
{
	double half = 1.0 / (2.0 * n_actions);
	double centre = double(action) / double(n_actions) + half;
	return std::max(std::abs(centre - y) - half, 0.0);
}

inline GameStep game_step(const GameConfig& cfg, const GameState& st, const std::vector<int>& actions)
{
	MARLAB_CHECK(st.t < cfg.horizon, "game: episode already finished");
	MARLAB_CHECK(static_cast<int>(actions.size()) == cfg.n_agents, "game: one action per agent");
	for (int a : actions) { MARLAB_CHECK(a >= 0 && a < cfg.n_actions, "game: action out of range"); }

	Vec<double> y = target_y(cfg, st);
	GameStep out;
	out.rewards.resize(cfg.n_agents);
	for (int i = 0; i < cfg.n_agents; ++i) { out.rewards[i] = -action_penalty(actions[i], y[i], cfg.n_actions); }

	const double eta = cfg.local_weight;
	out.state.s.resize(cfg.n_agents);
	for (int i = 0; i < cfg.n_agents; ++i)
	{
		double mix = double(actions[i]) + eta * st.s[i] + (1.0 - eta) * neighbor_mean(st, i, false);
		out.state.s[i] = 0.5 * std::cos(mix) + 0.5;
	}
	out.state.graph = st.graph;
	out.state.t = st.t + 1;
	out.done = out.state.t >= cfg.horizon;
	return out;
}

// Full-information per-step optimiser: each agent takes the action whose
// interval centre is closest to its target, ties broken toward the lower
// index. The immediate reward is unaffected by other agents' actions, so the
// per-agent argmin is jointly optimal for the step.
inline std::vector<int> greedy_oracle(const GameConfig& cfg, const GameState& st)
{
	Vec<double> y = target_y(cfg, st);
	std::vector<int> actions(cfg.n_agents);
	for (int i = 0; i < cfg.n_agents; ++i)
	{
		int best = 0;
		double best_pen = action_penalty(0, y[i], cfg.n_actions);
		for (int a = 1; a < cfg.n_actions; ++a)
		{
			double pen = action_penalty(a, y[i], cfg.n_actions);
			if (pen < best_pen)
			{
				best = a;
				best_pen = pen;
			}
		}
		actions[i] = best;
	}
	return actions;
}

// Rolls the greedy oracle to the end of the episode; returns total reward
// summed over agents and steps.
inline double greedy_rollout_return(const GameConfig& cfg, GameState st)
{
	double total = 0.0;
	while (st.t < cfg.horizon)
	{
		GameStep step = game_step(cfg, st, greedy_oracle(cfg, st));
		total += step.rewards.sum();
		st = step.state;
	}
	return total;
}

struct ExhaustiveResult
{
	double best_return = 0.0;
	std::vector<std::vector<int>> best_actions; // [t][agent]
};

namespace detail
{

// Best achievable tail return from `st` plus the action sequence reaching it.
inline ExhaustiveResult exhaustive_search(const GameConfig& cfg, const GameState& st)
{
	ExhaustiveResult out;
	if (st.t >= cfg.horizon)
	{
		out.best_return = 0.0;
		return out;
	}
	const int n = cfg.n_agents;
	std::vector<int> joint(n, 0);
	out.best_return = -std::numeric_limits<double>::infinity();
	while (true)
	{
		GameStep step = game_step(cfg, st, joint);
		ExhaustiveResult tail = exhaustive_search(cfg, step.state);
		double total = step.rewards.sum() + tail.best_return;
		if (total > out.best_return)
		{
			out.best_return = total;
			out.best_actions.clear();
			out.best_actions.push_back(joint);
			out.best_actions.insert(out.best_actions.end(), tail.best_actions.begin(),
															tail.best_actions.end());
		}
		int d = 0;
		while (d < n)
		{
			if (++joint[d] < cfg.n_actions) { break; }
			joint[d] = 0;
			++d;
		}
		if (d == n) { break; }
	}
	return out;
}

} // namespace detail

// Exact optimum by enumerating every joint action sequence. Guarded so the
// search space stays desk-sized.
inline ExhaustiveResult exhaustive_oracle(const GameConfig& cfg, const GameState& st)
{
	double space = std::pow(double(cfg.n_actions), double(cfg.n_agents) * double(cfg.horizon - st.t));
	MARLAB_CHECK(space <= 1e6, "exhaustive_oracle: instance too large");
	return detail::exhaustive_search(cfg, st);
}

inline uint64_t adjacency_hash(const Mat<uint8_t>& adjacency)
{
	uint64_t h = 14695981039346656037ull;
	for (index_t i = 0; i < adjacency.rows(); ++i)
	{
		for (index_t j = 0; j < adjacency.cols(); ++j)
		{
			h ^= uint64_t(adjacency(i, j));
			h *= 1099511628211ull;
		}
	}
	return h;
}

// One line per step: the pre-step state, the target it induced, the actions
// taken and the rewards received.
inline void write_trace_record(std::ostream& os, const GameConfig& cfg, const GameState& before,
															 const std::vector<int>& actions, const Vec<double>& rewards)
{
	nlohmann::json rec;
	rec["t"] = before.t;
	rec["s"] = std::vector<double>(before.s.data(), before.s.data() + before.s.size());
	rec["adjacency_hash"] = adjacency_hash(before.graph.adjacency);
	rec["actions"] = actions;
	Vec<double> y = target_y(cfg, before);
	rec["y"] = std::vector<double>(y.data(), y.data() + y.size());
	rec["rewards"] = std::vector<double>(rewards.data(), rewards.data() + rewards.size());
	os << rec.dump() << "\n";
}

} // namespace marlab
