#include "marlab/exp/report.hpp"
#include "marlab/exp/runner.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace marlab;

namespace
{

ExperimentConfig tiny_exp(const std::string& algo, uint64_t seed)
{
	ExperimentConfig cfg;
	cfg.algorithm = algo;
	cfg.seed = seed;
	cfg.run_index = int(seed);
	cfg.steps = 100;
	cfg.workers = 2;
	cfg.game.n_agents = 2;
	cfg.game.horizon = 5;
	cfg.game.n_actions = 3;
	cfg.wm.latents = 3;
	cfg.wm.classes = 3;
	cfg.wm.hidden = 8;
	cfg.wm.gru_hidden = 8;
	cfg.wm.mlp_layers = 1;
	cfg.wm.gat_hidden = 4;
	cfg.wm.gat_out = 4;
	cfg.wm.reward_bins = 33;
	cfg.ac.hidden = 8;
	cfg.ac.mlp_layers = 1;
	cfg.ac.gat_hidden = 4;
	cfg.ac.gat_out = 4;
	cfg.ac.horizon = 4;
	cfg.ac.critic_bins = 33;
	cfg.training.prefill = 40;
	cfg.training.pretrain_updates = 3;
	cfg.training.train_every = 10;
	cfg.training.batch = 2;
	cfg.training.length = 8;
	cfg.training.imag_start_stride = 4;
	cfg.eval.interval = 50;
	cfg.eval.episodes = 2;
	cfg.eval.final_episodes = 4;
	cfg.ippo.hidden = 8;
	cfg.ippo.mlp_layers = 1;
	cfg.ippo.epochs = 2;
	cfg.ippo.minibatches = 2;
	cfg.ippo.batch_sequences = 4;
	cfg.ippo.batch_length = 10;
	cfg.ippo.queue_capacity = 64;
	cfg.finalize();
	return cfg;
}

std::string slurp(const std::filesystem::path& p)
{
	std::ifstream is(p, std::ios::binary);
	REQUIRE(is.good());
	std::ostringstream os;
	os << is.rdbuf();
	return os.str();
}

std::filesystem::path fresh_dir(const std::string& name)
{
	auto dir = std::filesystem::temp_directory_path() / "marlab_test_exp" / name;
	std::filesystem::remove_all(dir);
	std::filesystem::create_directories(dir);
	return dir;
}

nlohmann::json manifest_without_clock(const std::filesystem::path& run_dir)
{
	nlohmann::json j = nlohmann::json::parse(slurp(run_dir / "manifest.json"));
	j.erase("wall_clock_seconds");
	return j;
}

} // namespace

TEST_CASE("experiment config survives a json round trip")
{
	ExperimentConfig cfg = desk_config();
	cfg.algorithm = "codreamer";
	cfg.seed = 11;
	cfg.finalize();
	nlohmann::json j = cfg;
	ExperimentConfig back;
	from_json(j, back);
	back.finalize();
	nlohmann::json j2 = back;
	CHECK(j.dump() == j2.dump());
}

TEST_CASE("partial config json only overrides the keys it names")
{
	ExperimentConfig cfg = desk_config();
	const int64_t old_steps = cfg.steps;
	const int old_batch = cfg.training.batch;
	nlohmann::json patch = {{"steps", old_steps / 2}, {"training", {{"length", 12}}}};
	from_json(patch, cfg);
	CHECK(cfg.steps == old_steps / 2);
	CHECK(cfg.training.length == 12);
	CHECK(cfg.training.batch == old_batch);
}

TEST_CASE("config validation rejects bad setups")
{
	ExperimentConfig cfg = tiny_exp("idreamer", 0);
	cfg.algorithm = "nope";
	CHECK_THROWS(cfg.validate_base());

	cfg = tiny_exp("idreamer", 0);
	cfg.steps = 101; // not divisible by workers
	CHECK_THROWS(cfg.validate_base());

	cfg = tiny_exp("idreamer", 0);
	cfg.eval.interval = 33;
	CHECK_THROWS(cfg.validate_base());

	cfg = tiny_exp("idreamer", 0);
	CHECK_NOTHROW(cfg.validate_base());
}

TEST_CASE("finalize propagates the variant gating into the module configs")
{
	auto flags = [](const std::string& algo) {
		ExperimentConfig cfg = tiny_exp(algo, 0);
		return std::make_pair(cfg.wm.comm, cfg.ac.comm);
	};
	CHECK(flags("idreamer") == std::make_pair(false, false));
	CHECK(flags("codreamer") == std::make_pair(true, true));
	CHECK(flags("wm_comm") == std::make_pair(true, false));
	CHECK(flags("ac_comm") == std::make_pair(false, true));

	ExperimentConfig cfg = tiny_exp("codreamer", 0);
	CHECK(cfg.wm.n_agents == cfg.game.n_agents);
	CHECK(cfg.wm.n_actions == cfg.game.n_actions);
	CHECK(cfg.ac.n_actions == cfg.game.n_actions);
	CHECK(cfg.ippo.n_agents == cfg.game.n_agents);
	CHECK(cfg.ippo.n_actions == cfg.game.n_actions);
}

TEST_CASE("communication variants strictly add parameters where they communicate")
{
	DreamerModels<float> id(tiny_exp("idreamer", 3));
	DreamerModels<float> co(tiny_exp("codreamer", 3));
	DreamerModels<float> wm(tiny_exp("wm_comm", 3));
	DreamerModels<float> ac(tiny_exp("ac_comm", 3));

	CHECK(wm.wm_param_count() > id.wm_param_count());
	CHECK(co.wm_param_count() == wm.wm_param_count());
	CHECK(ac.wm_param_count() == id.wm_param_count());

	CHECK(ac.ac_param_count() > id.ac_param_count());
	CHECK(co.ac_param_count() == ac.ac_param_count());
	CHECK(wm.ac_param_count() == id.ac_param_count());

	CHECK(co.trainable_param_count() > id.trainable_param_count());
}

TEST_CASE("a tiny dreamer run is deterministic and complete")
{
	ExperimentConfig cfg = tiny_exp("idreamer", 21);
	auto dir_a = fresh_dir("dreamer_a");
	auto dir_b = fresh_dir("dreamer_b");
	RunResult a = run_experiment(cfg, dir_a, default_bounds(), true);
	RunResult b = run_experiment(cfg, dir_b, default_bounds(), true);

	CHECK(a.status == "complete");
	CHECK(a.env_steps == 100);

	// pretrain happened once, before any actor-critic update
	CHECK(a.ac_updates_at_pretrain_end == 0);
	// 3 pretrain updates plus one per train_every sweep after prefill
	CHECK(a.wm_updates == 3 + 6);
	CHECK(a.ac_updates == 6);

	// interval evaluations at exact multiples of the interval
	REQUIRE(a.intervals.size() == 2);
	CHECK(a.intervals[0].env_step == 50);
	CHECK(a.intervals[1].env_step == 100);
	double best = std::max(a.intervals[0].mean_return, a.intervals[1].mean_return);
	CHECK(a.intervals[a.best_interval].mean_return == best);

	CHECK(std::filesystem::exists(dir_a / "ckpt_best.bin"));
	CHECK(std::filesystem::exists(dir_a / "ckpt_latest.bin"));
	CHECK(std::filesystem::exists(dir_a / "config.json"));

	// identical artifacts across the two runs, wall clock aside
	CHECK(manifest_without_clock(dir_a).dump() == manifest_without_clock(dir_b).dump());
	CHECK(slurp(dir_a / "scores.jsonl") == slurp(dir_b / "scores.jsonl"));
	CHECK(slurp(dir_a / "metrics.jsonl") == slurp(dir_b / "metrics.jsonl"));

	// score record is self-consistent
	std::ifstream sf(dir_a / "scores.jsonl");
	auto recs = read_score_records(sf);
	REQUIRE(recs.size() == 1);
	CHECK(recs[0].algorithm == "idreamer");
	CHECK(recs[0].task == "estimate_game");
	CHECK(recs[0].raw_score == Catch::Approx(a.final_raw));
	const TaskBounds& tb = default_bounds().at("estimate_game");
	CHECK(recs[0].normalized_score ==
				Catch::Approx(normalize_score(recs[0].raw_score, tb.min, tb.max)));
}

TEST_CASE("a tiny ippo run is deterministic and updates on schedule")
{
	ExperimentConfig cfg = tiny_exp("ippo", 22);
	auto dir_a = fresh_dir("ippo_a");
	auto dir_b = fresh_dir("ippo_b");
	RunResult a = run_experiment(cfg, dir_a, default_bounds(), true);
	RunResult b = run_experiment(cfg, dir_b, default_bounds(), true);

	CHECK(a.status == "complete");
	CHECK(a.env_steps == 100);
	CHECK(a.wm_updates == 0);
	CHECK(a.ac_updates == 0);
	// 4 streams fill a 10-step sequence every 10 sweeps of 2 workers
	CHECK(a.ppo_updates == 5);

	CHECK(manifest_without_clock(dir_a).dump() == manifest_without_clock(dir_b).dump());
	CHECK(slurp(dir_a / "scores.jsonl") == slurp(dir_b / "scores.jsonl"));
	CHECK(b.final_raw == a.final_raw);
}

TEST_CASE("different seeds give different trajectories")
{
	ExperimentConfig c1 = tiny_exp("ippo", 31);
	ExperimentConfig c2 = tiny_exp("ippo", 32);
	auto d1 = fresh_dir("seed_a");
	auto d2 = fresh_dir("seed_b");
	RunResult r1 = run_experiment(c1, d1, default_bounds(), true);
	RunResult r2 = run_experiment(c2, d2, default_bounds(), true);
	bool same_intervals = true;
	for (size_t k = 0; k < r1.intervals.size(); ++k)
	{
		same_intervals = same_intervals && r1.intervals[k].mean_return == r2.intervals[k].mean_return;
	}
	CHECK_FALSE(same_intervals);
}

TEST_CASE("the report aggregates runs end to end")
{
	// reuse the artifacts of the determinism tests where possible; rebuild if absent
	auto base = std::filesystem::temp_directory_path() / "marlab_test_exp";
	for (const char* name : {"dreamer_a", "ippo_a"})
	{
		if (!std::filesystem::exists(base / name / "manifest.json"))
		{
			std::string algo = std::string(name).find("dreamer") != std::string::npos ? "idreamer"
																																								: "ippo";
			run_experiment(tiny_exp(algo, 21), base / name, default_bounds(), true);
		}
	}
	auto runs = discover_runs({(base / "dreamer_a").string(), (base / "ippo_a").string()});
	REQUIRE(runs.size() == 2);

	auto out = fresh_dir("report_out");
	ReportOptions opts;
	opts.aggregate_reps = 200;
	opts.poi_reps = 100;
	opts.curve_reps = 100;
	opts.profile_reps = 50;
	nlohmann::json j = aggregate_report(runs, default_bounds(), out, opts);

	REQUIRE(j.contains("aggregates"));
	CHECK(j["aggregates"].contains("idreamer"));
	CHECK(j["aggregates"].contains("ippo"));
	for (const auto& algo : {"idreamer", "ippo"})
	{
		const auto& agg = j["aggregates"][algo];
		for (const auto& metric : {"iqm", "median", "mean", "optimality_gap"})
		{
			REQUIRE(agg.contains(metric));
			CHECK(agg[metric]["lo"].get<double>() <= agg[metric]["hi"].get<double>());
		}
	}
	CHECK(j["probability_of_improvement"]["idreamer"].contains("ippo"));
	CHECK(j["probability_of_improvement"]["ippo"].contains("idreamer"));
	CHECK(j.contains("sample_efficiency"));
	CHECK(j.contains("performance_profile"));

	for (const char* f : {"report.json", "tables.txt", "performance_profiles.svg",
												"performance_profiles.csv", "sample_efficiency.svg",
												"sample_efficiency.csv", "aggregate_iqm.svg", "aggregate_iqm.csv"})
	{
		CHECK(std::filesystem::exists(out / f));
	}

	// svg output is well-formed enough to open and close
	std::string svg = slurp(out / "sample_efficiency.svg");
	CHECK(svg.find("<svg") != std::string::npos);
	CHECK(svg.rfind("</svg>") != std::string::npos);

	nlohmann::json wm = wm_loss_report(runs, out);
	CHECK(wm["final_third"].contains("idreamer"));
	CHECK_FALSE(wm["final_third"].contains("ippo"));
	CHECK(std::filesystem::exists(out / "wm_losses.json"));
	CHECK(std::filesystem::exists(out / "wm_loss_obs.svg"));
	CHECK(std::filesystem::exists(out / "wm_loss_reward.svg"));
	CHECK(std::filesystem::exists(out / "wm_loss_cont.svg"));
}

TEST_CASE("discover_runs accepts parents of run directories")
{
	auto base = std::filesystem::temp_directory_path() / "marlab_test_exp";
	REQUIRE(std::filesystem::exists(base / "dreamer_a" / "manifest.json"));
	auto runs = discover_runs({base.string()});
	CHECK(runs.size() >= 2);
	CHECK_THROWS(discover_runs({(base / "definitely_missing").string()}));
}

TEST_CASE("checkpoints restore the policy that was saved")
{
	ExperimentConfig cfg = tiny_exp("idreamer", 21);
	auto dir = std::filesystem::temp_directory_path() / "marlab_test_exp" / "dreamer_a";
	REQUIRE(std::filesystem::exists(dir / "ckpt_best.bin"));

	// loading twice gives bitwise identical evaluations
	DreamerModels<float> m1(cfg);
	m1.load(dir / "ckpt_best.bin");
	DreamerModels<float> m2(cfg);
	m2.load(dir / "ckpt_best.bin");
	double e1 = detail::eval_episode(cfg, m1, split_seed(99, 1));
	double e2 = detail::eval_episode(cfg, m2, split_seed(99, 1));
	CHECK(e1 == e2);

	// and the stored weights are the trained ones, not the initial ones
	DreamerModels<float> fresh(cfg);
	ParamSet<float> trained_ps = m1.all_params();
	ParamSet<float> fresh_ps = fresh.all_params();
	REQUIRE(trained_ps.size() == fresh_ps.size());
	bool any_diff = false;
	for (size_t i = 0; i < trained_ps.size() && !any_diff; ++i)
	{
		any_diff = trained_ps[i]->value != fresh_ps[i]->value;
	}
	CHECK(any_diff);
}
