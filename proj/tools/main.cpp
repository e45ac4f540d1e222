#include "marlab/exp/report.hpp"
#include "marlab/exp/runner.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace
{

uint64_t seed_from_env_or(uint64_t fallback)
{
	const char* s = std::getenv("MARLAB_SEED");
	if (s == nullptr || *s == '\0') { return fallback; }
	return std::strtoull(s, nullptr, 10);
}

marlab::ScoreBoundsMap load_bounds(const std::string& path)
{
	if (path.empty()) { return marlab::default_bounds(); }
	std::ifstream is(path);
	MARLAB_CHECK(is.good(), "cannot open bounds file: " + path);
	return marlab::read_bounds(is);
}

int cmd_run(const std::string& config_path, const std::string& algo, const std::string& env,
						int64_t seed, int64_t steps, int run_index, const std::string& out_dir,
						const std::string& bounds_path, bool quiet)
{
	marlab::ExperimentConfig cfg = marlab::desk_config();
	if (!config_path.empty())
	{
		std::ifstream is(config_path);
		MARLAB_CHECK(is.good(), "cannot open config file: " + config_path);
		nlohmann::json j;
		is >> j;
		marlab::from_json(j, cfg);
	}
	if (!algo.empty()) { cfg.algorithm = algo; }
	if (!env.empty()) { cfg.env = env; }
	if (seed >= 0) { cfg.seed = uint64_t(seed); }
	if (steps > 0) { cfg.steps = steps; }
	cfg.seed = seed_from_env_or(cfg.seed);
	cfg.run_index = run_index >= 0 ? run_index : int(cfg.seed);
	cfg.finalize();
	cfg.validate_base();

	auto res = marlab::run_experiment(cfg, out_dir, load_bounds(bounds_path), quiet);
	std::cout << nlohmann::json{{"status", res.status},
															{"algorithm", cfg.algorithm},
															{"seed", cfg.seed},
															{"env_steps", res.env_steps},
															{"raw_score", res.final_raw},
															{"normalized_score", res.final_norm},
															{"out", out_dir}}
							 .dump()
						<< "\n";
	return res.status == "complete" ? 0 : 1;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& bounds_path,
							 const std::string& out_dir, const marlab::ReportOptions& opts)
{
	auto run_dirs = marlab::discover_runs(runs);
	auto bounds = load_bounds(bounds_path);
	marlab::aggregate_report(run_dirs, bounds, out_dir, opts);
	marlab::wm_loss_report(run_dirs, out_dir);
	std::cout << nlohmann::json{{"status", "complete"},
															{"runs", run_dirs.size()},
															{"out", out_dir}}
							 .dump()
						<< "\n";
	return 0;
}

int cmd_oracle(const std::string& env, const std::string& mode, int episodes, int64_t seed,
							 const std::string& trace_path, const marlab::GameConfig& game)
{
	MARLAB_CHECK(env == "estimate_game", "oracle: unknown environment " + env);
	uint64_t root = seed_from_env_or(seed >= 0 ? uint64_t(seed) : 0);

	std::ofstream trace;
	if (!trace_path.empty())
	{
		trace.open(trace_path, std::ios::trunc);
		MARLAB_CHECK(trace.good(), "oracle: cannot open trace file " + trace_path);
	}

	double sum = 0.0, lo = 0.0, hi = 0.0;
	for (int e = 0; e < episodes; ++e)
	{
		marlab::GameState st = marlab::game_reset(game, marlab::split_seed(root, uint64_t(e)));
		double total = 0.0;
		if (mode == "greedy")
		{
			while (st.t < game.horizon)
			{
				std::vector<int> actions = marlab::greedy_oracle(game, st);
				marlab::GameStep step = marlab::game_step(game, st, actions);
				if (trace.is_open())
				{
					marlab::write_trace_record(trace, game, st, actions, step.rewards);
				}
				total += step.rewards.sum();
				st = step.state;
			}
		}
		else
		{
			marlab::ExhaustiveResult res = marlab::exhaustive_oracle(game, st);
			total = res.best_return;
			if (trace.is_open())
			{
				marlab::GameState replay = st;
				for (const auto& actions : res.best_actions)
				{
					marlab::GameStep step = marlab::game_step(game, replay, actions);
					marlab::write_trace_record(trace, game, replay, actions, step.rewards);
					replay = step.state;
				}
			}
		}
		double per_agent = total / game.n_agents;
		sum += per_agent;
		if (e == 0 || per_agent < lo) { lo = per_agent; }
		if (e == 0 || per_agent > hi) { hi = per_agent; }
	}
	std::cout << nlohmann::json{{"env", env},
															{"mode", mode},
															{"episodes", episodes},
															{"seed", root},
															{"mean_return", sum / episodes},
															{"min_return", lo},
															{"max_return", hi}}
							 .dump()
						<< "\n";
	return 0;
}

} // namespace

int main(int argc, char** argv)
{
	CLI::App app{"marlab: multi-agent model-based RL laboratory"};
	app.require_subcommand(1);

	std::string run_config, run_algo, run_env, run_out, run_bounds;
	int64_t run_seed = -1, run_steps = -1;
	int run_index = -1;
	bool run_quiet = false;
	auto* run = app.add_subcommand("run", "train one agent and write run artifacts");
	run->add_option("--config", run_config, "json experiment config; missing keys keep defaults");
	std::vector<std::string> algos(marlab::algorithm_registry().begin(),
																 marlab::algorithm_registry().end());
	run->add_option("--algo", run_algo, "algorithm")->check(CLI::IsMember(algos));
	run->add_option("--env", run_env, "environment")
		->check(CLI::IsMember(std::vector<std::string>{"estimate_game"}));
	run->add_option("--seed", run_seed, "run seed; MARLAB_SEED overrides");
	run->add_option("--steps", run_steps, "total environment steps");
	run->add_option("--run-index", run_index, "run index for score records (default: seed)");
	run->add_option("--out", run_out, "output directory")->required();
	run->add_option("--bounds", run_bounds, "score bounds json (default: built-in)");
	run->add_flag("--quiet", run_quiet, "suppress progress lines");

	std::vector<std::string> rep_runs;
	std::string rep_bounds, rep_out;
	marlab::ReportOptions rep_opts;
	auto* rep = app.add_subcommand("report", "aggregate run directories into tables and plots");
	rep->add_option("--runs", rep_runs, "run directories, or directories of runs")->required();
	rep->add_option("--bounds", rep_bounds, "score bounds json (default: built-in)");
	rep->add_option("--out", rep_out, "output directory")->required();
	rep->add_option("--aggregate-reps", rep_opts.aggregate_reps, "bootstrap replications, aggregates");
	rep->add_option("--poi-reps", rep_opts.poi_reps, "bootstrap replications, improvement probs");
	rep->add_option("--curve-reps", rep_opts.curve_reps, "bootstrap replications, curves");
	rep->add_option("--profile-reps", rep_opts.profile_reps, "bootstrap replications, profiles");
	rep->add_option("--stat-seed", rep_opts.seed, "bootstrap seed");

	std::string ora_env = "estimate_game", ora_mode, ora_trace;
	int ora_episodes = 100;
	int64_t ora_seed = 0;
	marlab::GameConfig ora_game;
	auto* ora = app.add_subcommand("oracle", "roll oracle policies over fresh episodes");
	ora->add_option("--env", ora_env, "environment")
		->check(CLI::IsMember(std::vector<std::string>{"estimate_game"}));
	ora->add_option("--mode", ora_mode, "oracle type")
		->required()
		->check(CLI::IsMember(std::vector<std::string>{"greedy", "exhaustive"}));
	ora->add_option("--episodes", ora_episodes, "episode count");
	ora->add_option("--seed", ora_seed, "episode seed root; MARLAB_SEED overrides");
	ora->add_option("--trace", ora_trace, "write per-step trace jsonl here");
	ora->add_option("--agents", ora_game.n_agents, "agent count");
	ora->add_option("--horizon", ora_game.horizon, "episode length");
	ora->add_option("--actions", ora_game.n_actions, "actions per agent");

	CLI11_PARSE(app, argc, argv);

	try
	{
		if (run->parsed())
		{
			return cmd_run(run_config, run_algo, run_env, run_seed, run_steps, run_index, run_out,
										 run_bounds, run_quiet);
		}
		if (rep->parsed()) { return cmd_report(rep_runs, rep_bounds, rep_out, rep_opts); }
		if (ora->parsed())
		{
			return cmd_oracle(ora_env, ora_mode, ora_episodes, ora_seed, ora_trace, ora_game);
		}
	}
	catch (const std::exception& e)
	{
		std::cerr << "error: " << e.what() << "\n";
		return 1;
	}
	return 1;
}
