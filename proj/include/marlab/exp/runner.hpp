#pragma once

#include "marlab/core/checkpoint.hpp"
#include "marlab/exp/config.hpp"
#include "marlab/replay/replay_buffer.hpp"
#include "marlab/stats/score_io.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace marlab
{

struct RunPaths
{
	std::filesystem::path dir;
	std::filesystem::path manifest;
	std::filesystem::path metrics;
	std::filesystem::path scores;
	std::filesystem::path config_echo;
	std::filesystem::path ckpt_latest;
	std::filesystem::path ckpt_best;

	explicit RunPaths(const std::filesystem::path& out_dir)
		: dir(out_dir),
			manifest(out_dir / "manifest.json"),
			metrics(out_dir / "metrics.jsonl"),
			scores(out_dir / "scores.jsonl"),
			config_echo(out_dir / "config.json"),
			ckpt_latest(out_dir / "ckpt_latest.bin"),
			ckpt_best(out_dir / "ckpt_best.bin")
	{
	}
};

inline void atomic_write_text(const std::filesystem::path& path, const std::string& text)
{
	std::filesystem::path tmp = path;
	tmp += ".tmp";
	{
		std::ofstream os(tmp, std::ios::trunc);
		MARLAB_CHECK(os.good(), "atomic_write_text: cannot open " + tmp.string());
		os << text;
	}
	std::filesystem::rename(tmp, path);
}

struct IntervalRecord
{
	int64_t env_step = 0;
	double mean_return = 0.0;
};

struct RunResult
{
	std::string status = "incomplete";
	std::vector<IntervalRecord> intervals;
	size_t best_interval = 0;
	double final_raw = 0.0;
	double final_norm = 0.0;
	int64_t env_steps = 0;
	int64_t wm_updates = 0;
	int64_t ac_updates = 0;
	int64_t ac_updates_at_pretrain_end = -1;
	int64_t ppo_updates = 0;
	double wall_clock_seconds = 0.0;
};

// ---------------------------------------------------------------------------
// dreamer-family runner
// ---------------------------------------------------------------------------

template <class S>
struct DreamerModels
{
	ExperimentConfig cfg;
	Rng init_rng;
	WorldModel<S> wm;
	ActorCritic<S> ac;
	Adam<S> wm_opt, actor_opt, critic_opt;
	ParamSet<S> wm_ps, actor_ps, critic_ps;
	ReturnNormalizer<S> retnorm;

	explicit DreamerModels(const ExperimentConfig& c)
		: cfg(c),
			init_rng(split_seed(c.seed, 1)),
			wm(c.wm, init_rng),
			ac(c.ac, index_t(c.wm.gru_hidden) + c.wm.z_width(), init_rng),
			wm_opt(c.training.wm_lr, c.training.wm_adam_eps, c.training.wm_grad_clip),
			actor_opt(c.training.ac_lr, c.training.ac_adam_eps, c.training.ac_grad_clip),
			critic_opt(c.training.ac_lr, c.training.ac_adam_eps, c.training.ac_grad_clip)
	{
		retnorm.decay = c.ac.retnorm_decay;
		retnorm.floor = c.ac.retnorm_floor;
		wm.params(wm_ps);
		ac.actor_params(actor_ps);
		ac.critic_params(critic_ps);
	}

	index_t trainable_param_count()
	{
		ParamSet<S> all;
		wm.params(all);
		ac.actor_params(all);
		ac.critic_params(all);
		return param_count(all);
	}

	index_t wm_param_count()
	{
		ParamSet<S> only;
		wm.params(only);
		return param_count(only);
	}

	index_t ac_param_count()
	{
		ParamSet<S> only;
		ac.actor_params(only);
		ac.critic_params(only);
		return param_count(only);
	}

	ParamSet<S> all_params()
	{
		ParamSet<S> all;
		wm.params(all);
		ac.actor_params(all);
		ac.critic_params(all);
		ac.target_params(all);
		return all;
	}

	void save(const std::filesystem::path& path, const std::string& config_json)
	{
		ParamSet<S> all = all_params();
		save_params<S>(path.string(), config_json, all, true);
	}

	void load(const std::filesystem::path& path)
	{
		ParamSet<S> all = all_params();
		load_params<S>(path.string(), all);
	}
};

namespace detail
{

template <class S>
struct DreamerWorker
{
	GameConfig game;
	uint64_t root = 0;
	uint64_t episode_index = 0;
	Rng rng{0};
	std::optional<GameState> env;
	Mat<S> h, z;
	std::vector<int> prev_action;
	bool first = true;

	void ensure_episode()
	{
		if (env && env->t < game.horizon) { return; }
		env = game_reset(game, split_seed(root, episode_index++));
		first = true;
		std::fill(prev_action.begin(), prev_action.end(), 0);
	}
};

template <class S>
Mat<S> obs_matrix(const GameState& st)
{
	Mat<S> obs(st.s.size(), 1);
	for (index_t i = 0; i < st.s.size(); ++i) { obs(i, 0) = S(st.s[i]); }
	return obs;
}

template <class S>
Mat<S> onehot_actions(const std::vector<int>& actions, int n_actions)
{
	Mat<S> out = Mat<S>::Zero(index_t(actions.size()), n_actions);
	for (size_t i = 0; i < actions.size(); ++i) { out(index_t(i), actions[i]) = S(1); }
	return out;
}

// posterior step + action selection for one live environment
template <class S>
std::vector<int> dreamer_act(const ExperimentConfig& cfg, DreamerModels<S>& models,
														 DreamerWorker<S>& w, bool random_actions)
{
	const GameState& st = *w.env;
	CommGraph<S> graph;
	const CommGraph<S>* wm_graph = nullptr;
	const CommGraph<S>* ac_graph = nullptr;
	if (cfg.wm_comm() || cfg.ac_comm())
	{
		graph.adjacency = st.graph.adjacency;
		graph.edge_dist = st.graph.edge_dist.template cast<S>();
		graph.node_features = Mat<S>();
		if (cfg.wm_comm()) { wm_graph = &graph; }
		if (cfg.ac_comm()) { ac_graph = &graph; }
	}

	Tape<S> t(false);
	Mat<S> first_mask =
		w.first ? Mat<S>::Ones(w.h.rows(), 1) : Mat<S>::Zero(w.h.rows(), 1);
	auto out = models.wm.observe_step(t, t.constant(w.h), t.constant(w.z),
																		onehot_actions<S>(w.prev_action, cfg.game.n_actions),
																		obs_matrix<S>(st), first_mask, wm_graph, w.rng,
																		LatentMode::Sample);
	w.h = t.val(out.h);
	w.z = t.val(out.z);
	w.first = false;

	std::vector<int> actions(size_t(cfg.game.n_agents), 0);
	if (random_actions)
	{
		for (auto& a : actions) { a = int(w.rng.uniform_int(cfg.game.n_actions)); }
		return actions;
	}
	Var state = t.constant(hcat(w.h, w.z));
	Var probs_v = models.ac.actor_probs(t, models.ac.actor_logits(t, state, ac_graph));
	const Mat<S>& probs = t.val(probs_v);
	for (index_t r = 0; r < probs.rows(); ++r)
	{
		Vec<S> row = probs.row(r).transpose();
		actions[size_t(r)] = int(w.rng.categorical(row.data(), row.data() + row.size()));
	}
	return actions;
}

// one greedy evaluation episode; returns the per-agent mean episode return
template <class S>
double eval_episode(const ExperimentConfig& cfg, DreamerModels<S>& models, uint64_t ep_seed)
{
	GameState st = game_reset(cfg.game, ep_seed);
	CommGraph<S> graph;
	graph.adjacency = st.graph.adjacency;
	graph.edge_dist = st.graph.edge_dist.template cast<S>();
	const CommGraph<S>* wm_graph = cfg.wm_comm() ? &graph : nullptr;
	const CommGraph<S>* ac_graph = cfg.ac_comm() ? &graph : nullptr;

	const index_t n = cfg.game.n_agents;
	Mat<S> h = Mat<S>::Zero(n, cfg.wm.gru_hidden);
	Mat<S> z = Mat<S>::Zero(n, models.cfg.wm.z_width());
	std::vector<int> prev(size_t(n), 0);
	Vec<double> total = Vec<double>::Zero(n);
	Rng unused(0);
	bool first = true;
	while (st.t < cfg.game.horizon)
	{
		Tape<S> t(false);
		Mat<S> first_mask = first ? Mat<S>::Ones(n, 1) : Mat<S>::Zero(n, 1);
		auto out = models.wm.observe_step(t, t.constant(h), t.constant(z),
																			onehot_actions<S>(prev, cfg.game.n_actions),
																			obs_matrix<S>(st), first_mask, wm_graph, unused,
																			LatentMode::Mode);
		h = t.val(out.h);
		z = t.val(out.z);
		first = false;
		Var state = t.constant(hcat(h, z));
		Var probs_v = models.ac.actor_probs(t, models.ac.actor_logits(t, state, ac_graph));
		const Mat<S>& probs = t.val(probs_v);
		std::vector<int> actions(size_t(n), 0);
		for (index_t r = 0; r < n; ++r)
		{
			index_t best = 0;
			probs.row(r).maxCoeff(&best);
			actions[size_t(r)] = int(best);
		}
		auto step = game_step(cfg.game, st, actions);
		total += step.rewards;
		st = step.state;
		prev = actions;
	}
	return total.mean();
}

} // namespace detail

// ---------------------------------------------------------------------------
// manifest assembly
// ---------------------------------------------------------------------------

inline nlohmann::json manifest_json(const ExperimentConfig& cfg, const RunResult& res)
{
	nlohmann::json j;
	j["schema_version"] = 1;
	j["code_version"] = kCodeVersion;
	j["status"] = res.status;
	j["config"] = cfg;
	j["algorithm"] = cfg.algorithm;
	j["seed"] = cfg.seed;
	j["run_index"] = cfg.run_index;
	j["env_steps"] = res.env_steps;
	j["workers"] = cfg.workers;
	j["per_worker_steps"] = res.env_steps / cfg.workers;
	j["wall_clock_seconds"] = res.wall_clock_seconds;
	j["wm_updates"] = res.wm_updates;
	j["ac_updates"] = res.ac_updates;
	j["ac_updates_at_pretrain_end"] = res.ac_updates_at_pretrain_end;
	j["ppo_updates"] = res.ppo_updates;
	nlohmann::json intervals = nlohmann::json::array();
	for (const auto& iv : res.intervals)
	{
		intervals.push_back({{"env_step", iv.env_step}, {"mean_return", iv.mean_return}});
	}
	j["intervals"] = intervals;
	if (!res.intervals.empty())
	{
		j["best_interval"] = {{"index", res.best_interval},
													{"env_step", res.intervals[res.best_interval].env_step},
													{"mean_return", res.intervals[res.best_interval].mean_return}};
	}
	j["checkpoints"] = {{"best", "ckpt_best.bin"}, {"latest", "ckpt_latest.bin"}};
	j["files"] = {{"metrics", "metrics.jsonl"}, {"scores", "scores.jsonl"}};
	j["final"] = {{"task", cfg.env},
								{"episodes", cfg.eval.final_episodes},
								{"raw_score", res.final_raw},
								{"normalized_score", res.final_norm}};
	return j;
}

// ---------------------------------------------------------------------------
// full training run (both families); writes all artifacts into out_dir
// ---------------------------------------------------------------------------

inline RunResult run_experiment(ExperimentConfig cfg, const std::filesystem::path& out_dir,
																const ScoreBoundsMap& bounds = default_bounds(),
																bool quiet = false)
{
	using S = float;
	cfg.finalize();
	MARLAB_CHECK(bounds.count(cfg.env) == 1, "run: no normalization bounds for task " + cfg.env);

	std::filesystem::create_directories(out_dir);
	RunPaths paths(out_dir);
	nlohmann::json cfg_json = cfg;
	atomic_write_text(paths.config_echo, cfg_json.dump(2) + "\n");
	const std::string cfg_dump = cfg_json.dump();

	std::ofstream metrics(paths.metrics, std::ios::trunc);
	MARLAB_CHECK(metrics.good(), "run: cannot open metrics file");
	auto log_metrics = [&](nlohmann::json j) { metrics << j.dump() << "\n"; };

	RunResult res;
	auto t_start = std::chrono::steady_clock::now();
	double best_return = -std::numeric_limits<double>::infinity();

	auto write_manifest = [&]() {
		auto t_now = std::chrono::steady_clock::now();
		res.wall_clock_seconds = std::chrono::duration<double>(t_now - t_start).count();
		atomic_write_text(paths.manifest, manifest_json(cfg, res).dump(2) + "\n");
	};

	try
	{
		if (cfg.is_dreamer())
		{
			DreamerModels<S> models(cfg);
			ReplayBuffer replay(cfg.training.replay_capacity, cfg.workers);
			std::vector<detail::DreamerWorker<S>> workers(size_t(cfg.workers));
			for (int w = 0; w < cfg.workers; ++w)
			{
				auto& wk = workers[size_t(w)];
				wk.game = cfg.game;
				wk.root = split_seed(cfg.seed, 100 + uint64_t(w));
				wk.rng = Rng(split_seed(wk.root, 7));
				wk.h = Mat<S>::Zero(cfg.game.n_agents, cfg.wm.gru_hidden);
				wk.z = Mat<S>::Zero(cfg.game.n_agents, cfg.wm.z_width());
				wk.prev_action.assign(size_t(cfg.game.n_agents), 0);
			}
			Rng train_rng(split_seed(cfg.seed, 2));
			uint64_t sample_root = split_seed(cfg.seed, 3);
			uint64_t eval_root = split_seed(cfg.seed, 4);
			bool pretrained = false;
			int64_t round_counter = 0;

			auto append_first_record = [&](int w) {
				auto& wk = workers[size_t(w)];
				StepRecord rec;
				rec.obs = detail::obs_matrix<float>(*wk.env);
				rec.prev_action.assign(size_t(cfg.game.n_agents), 0);
				rec.reward = Vec<float>::Zero(cfg.game.n_agents);
				rec.cont = 1;
				rec.is_first = 1;
				rec.adjacency = wk.env->graph.adjacency;
				replay.append(std::move(rec), w);
			};

			auto worker_step = [&](int w, bool random_actions) {
				auto& wk = workers[size_t(w)];
				bool fresh = !wk.env || wk.env->t >= cfg.game.horizon;
				wk.ensure_episode();
				if (fresh) { append_first_record(w); }
				std::vector<int> actions = detail::dreamer_act(cfg, models, wk, random_actions);
				auto step = game_step(cfg.game, *wk.env, actions);
				StepRecord rec;
				rec.obs = detail::obs_matrix<float>(step.state);
				rec.prev_action = actions;
				rec.reward = step.rewards.cast<float>();
				rec.cont = step.done ? 0 : 1;
				rec.is_first = 0;
				rec.adjacency = wk.env->graph.adjacency;
				replay.append(std::move(rec), w);
				wk.env = step.state;
				wk.prev_action = actions;
			};

			struct WmRound
			{
				WmPosteriors<S> posts;
				std::vector<ReplaySequence> seqs;
			};

			auto wm_update = [&](bool log) -> WmRound {
				auto seqs = replay.sample(cfg.training.batch, cfg.training.length,
																	split_seed(sample_root, uint64_t(round_counter)));
				++round_counter;
				MARLAB_CHECK(seqs.has_value(), "run: replay has too little data to sample");
				auto batch = prepare_batch<S>(*seqs, cfg.wm);
				WmRound round;
				auto report = train_world_model(models.wm, models.wm_opt, models.wm_ps, batch, train_rng,
																				LatentMode::Sample, TrainAction::Update, &round.posts);
				++res.wm_updates;
				if (log)
				{
					log_metrics({{"kind", "wm"},
											 {"env_step", res.env_steps},
											 {"update", res.wm_updates},
											 {"recon", report.recon},
											 {"reward", report.reward},
											 {"cont", report.cont},
											 {"dyn_kl", report.dyn_kl},
											 {"rep_kl", report.rep_kl},
											 {"total", report.total},
											 {"grad_norm", report.grad_norm},
											 {"finite", report.finite}});
				}
				round.seqs = std::move(*seqs);
				return round;
			};

			auto ac_update = [&](const WmRound& round) {
				const auto& posts = round.posts;
				const auto& seqs = round.seqs;
				const index_t n = cfg.game.n_agents;
				const int T = cfg.training.length;
				const int B = cfg.training.batch;
				std::vector<int> starts;
				for (int t = 0; t < T; t += cfg.training.imag_start_stride) { starts.push_back(t); }
				const index_t rows = index_t(starts.size()) * index_t(B) * n;
				Mat<S> start_h(rows, cfg.wm.gru_hidden);
				Mat<S> start_z(rows, cfg.wm.z_width());
				Vec<S> start_cont(rows);
				std::vector<const Mat<uint8_t>*> adj;
				adj.reserve(size_t(starts.size()) * size_t(B));
				index_t r = 0;
				for (int t : starts)
				{
					for (int b = 0; b < B; ++b)
					{
						start_h.middleRows(r, n) = posts.h[size_t(t)].middleRows(index_t(b) * n, n);
						start_z.middleRows(r, n) = posts.z[size_t(t)].middleRows(index_t(b) * n, n);
						for (index_t i = 0; i < n; ++i)
						{
							start_cont[r + i] = S(seqs[size_t(b)].steps[size_t(t)].cont);
						}
						adj.push_back(&seqs[size_t(b)].steps[size_t(t)].adjacency);
						r += n;
					}
				}
				CommGraph<S> graph = batch_graphs<S>(adj, n);
				auto traj = imagine(models.wm, models.ac, start_h, start_z, graph, start_cont,
														cfg.ac.horizon, train_rng, false);
				auto m = actor_critic_update(models.ac, models.actor_opt, models.critic_opt,
																		 models.actor_ps, models.critic_ps, models.retnorm, traj,
																		 TrainAction::Update);
				++res.ac_updates;
				log_metrics({{"kind", "ac"},
										 {"env_step", res.env_steps},
										 {"update", res.ac_updates},
										 {"actor_loss", m.actor_loss},
										 {"critic_loss", m.critic_loss},
										 {"entropy", m.entropy},
										 {"mean_return", m.mean_return},
										 {"mean_value", m.mean_value},
										 {"advantage_scale", m.advantage_scale},
										 {"actor_grad_norm", m.actor_grad_norm},
										 {"critic_grad_norm", m.critic_grad_norm},
										 {"finite", m.finite}});
			};

			while (res.env_steps < cfg.steps)
			{
				bool random_phase = res.env_steps < cfg.training.prefill;
				for (int w = 0; w < cfg.workers; ++w)
				{
					worker_step(w, random_phase);
					++res.env_steps;
				}
				if (!pretrained && res.env_steps >= cfg.training.prefill)
				{
					res.ac_updates_at_pretrain_end = res.ac_updates; // stays zero by construction
					for (int i = 0; i < cfg.training.pretrain_updates; ++i)
					{
						wm_update(i % 25 == 0 || i + 1 == cfg.training.pretrain_updates);
					}
					pretrained = true;
					log_metrics({{"kind", "pretrain_done"},
											 {"env_step", res.env_steps},
											 {"wm_updates", res.wm_updates},
											 {"ac_updates", res.ac_updates}});
				}
				else if (pretrained && res.env_steps % cfg.training.train_every == 0)
				{
					for (int i = 0; i < cfg.training.wm_updates; ++i)
					{
						WmRound round = wm_update(true);
						for (int k = 0; k < cfg.training.ac_updates; ++k) { ac_update(round); }
					}
				}
				if (res.env_steps % cfg.eval.interval == 0)
				{
					size_t k = res.intervals.size();
					double acc = 0.0;
					for (int e = 0; e < cfg.eval.episodes; ++e)
					{
						acc += detail::eval_episode(cfg, models,
																				split_seed(split_seed(eval_root, k), uint64_t(e)));
					}
					IntervalRecord iv{res.env_steps, acc / cfg.eval.episodes};
					res.intervals.push_back(iv);
					models.save(paths.ckpt_latest, cfg_dump);
					if (iv.mean_return > best_return)
					{
						best_return = iv.mean_return;
						res.best_interval = k;
						std::filesystem::copy_file(paths.ckpt_latest, paths.ckpt_best,
																			 std::filesystem::copy_options::overwrite_existing);
					}
					log_metrics({{"kind", "eval"},
											 {"env_step", res.env_steps},
											 {"interval", k},
											 {"mean_return", iv.mean_return}});
					if (!quiet)
					{
						std::fprintf(stderr, "[%s seed %llu] step %lld eval %.4f\n", cfg.algorithm.c_str(),
												 (unsigned long long)cfg.seed, (long long)res.env_steps, iv.mean_return);
					}
					write_manifest();
				}
			}

			// final evaluation on the best checkpoint
			DreamerModels<S> best(cfg);
			best.load(paths.ckpt_best);
			uint64_t final_root = split_seed(cfg.seed, 5);
			double acc = 0.0;
			for (int e = 0; e < cfg.eval.final_episodes; ++e)
			{
				acc += detail::eval_episode(cfg, best, split_seed(final_root, uint64_t(e)));
			}
			res.final_raw = acc / cfg.eval.final_episodes;
		}
		else
		{
			// ---------------- ippo ----------------
			Rng init_rng(split_seed(cfg.seed, 1));
			Ippo<S> agent(cfg.ippo, init_rng);
			PpoQueue queue(size_t(cfg.ippo.queue_capacity));
			Rng update_rng(split_seed(cfg.seed, 2));
			uint64_t eval_root = split_seed(cfg.seed, 4);

			struct Partial
			{
				std::vector<float> obs;
				std::vector<int> actions;
				std::vector<float> logp;
				std::vector<float> values;
				std::vector<float> rewards;
				std::vector<uint8_t> dones;
			};
			struct PpoWorker
			{
				GameConfig game;
				uint64_t root = 0;
				uint64_t episode_index = 0;
				Rng rng{0};
				std::optional<GameState> env;
				std::vector<Partial> partial;
			};
			std::vector<PpoWorker> workers(size_t(cfg.workers));
			for (int w = 0; w < cfg.workers; ++w)
			{
				auto& wk = workers[size_t(w)];
				wk.game = cfg.game;
				wk.root = split_seed(cfg.seed, 100 + uint64_t(w));
				wk.rng = Rng(split_seed(wk.root, 7));
				wk.partial.resize(size_t(cfg.game.n_agents));
			}
			int fresh_sequences = 0;

			auto eval_episode_ppo = [&](const Ippo<S>& policy, uint64_t ep_seed) {
				GameState st = game_reset(cfg.game, ep_seed);
				Vec<double> total = Vec<double>::Zero(cfg.game.n_agents);
				Rng unused(0);
				std::vector<int> ids(size_t(cfg.game.n_agents));
				std::iota(ids.begin(), ids.end(), 0);
				while (st.t < cfg.game.horizon)
				{
					Mat<S> obs = detail::obs_matrix<S>(st);
					auto out = policy.act(obs, ids, unused, true);
					auto step = game_step(cfg.game, st, out.actions);
					total += step.rewards;
					st = step.state;
				}
				return total.mean();
			};

			auto worker_step = [&](int w) {
				auto& wk = workers[size_t(w)];
				if (!wk.env || wk.env->t >= cfg.game.horizon)
				{
					wk.env = game_reset(cfg.game, split_seed(wk.root, wk.episode_index++));
				}
				Mat<S> obs = detail::obs_matrix<S>(*wk.env);
				std::vector<int> ids(size_t(cfg.game.n_agents));
				std::iota(ids.begin(), ids.end(), 0);
				auto out = agent.act(obs, ids, wk.rng);
				auto step = game_step(cfg.game, *wk.env, out.actions);
				for (int a = 0; a < cfg.game.n_agents; ++a)
				{
					auto& p = wk.partial[size_t(a)];
					p.obs.push_back(float(obs(a, 0)));
					p.actions.push_back(out.actions[size_t(a)]);
					p.logp.push_back(float(out.logp[a]));
					p.values.push_back(float(out.values[a]));
					p.rewards.push_back(float(step.rewards[a]));
					p.dones.push_back(step.done ? 1 : 0);
				}
				wk.env = step.state;

				if (int(wk.partial[0].obs.size()) >= cfg.ippo.batch_length)
				{
					// bootstrap with the value of the upcoming state
					if (wk.env->t >= cfg.game.horizon)
					{
						wk.env = game_reset(cfg.game, split_seed(wk.root, wk.episode_index++));
					}
					Mat<S> next_obs = detail::obs_matrix<S>(*wk.env);
					Rng unused(0);
					auto boot = agent.act(next_obs, ids, unused, true);
					for (int a = 0; a < cfg.game.n_agents; ++a)
					{
						auto& p = wk.partial[size_t(a)];
						const int T = int(p.obs.size());
						PpoSequence seq;
						seq.agent_id = a;
						seq.obs = Mat<float>(T, 1);
						for (int t = 0; t < T; ++t) { seq.obs(t, 0) = p.obs[size_t(t)]; }
						seq.actions = p.actions;
						seq.logp = Eigen::Map<Vec<float>>(p.logp.data(), T);
						seq.values = Vec<float>(T + 1);
						for (int t = 0; t < T; ++t) { seq.values[t] = p.values[size_t(t)]; }
						seq.values[T] = float(boot.values[a]);
						seq.rewards = Eigen::Map<Vec<float>>(p.rewards.data(), T);
						seq.dones = p.dones;
						queue.push(std::move(seq));
						p = Partial{};
						++fresh_sequences;
					}
				}
			};

			while (res.env_steps < cfg.steps)
			{
				for (int w = 0; w < cfg.workers; ++w)
				{
					worker_step(w);
					++res.env_steps;
				}
				if (fresh_sequences >= cfg.ippo.batch_sequences)
				{
					auto batch = queue.newest(size_t(cfg.ippo.batch_sequences));
					auto m = agent.update(batch, update_rng);
					fresh_sequences = 0;
					++res.ppo_updates;
					log_metrics({{"kind", "ppo"},
											 {"env_step", res.env_steps},
											 {"update", res.ppo_updates},
											 {"policy_loss", m.policy_loss},
											 {"value_loss", m.value_loss},
											 {"entropy", m.entropy},
											 {"approx_kl", m.approx_kl},
											 {"clip_fraction", m.clip_fraction},
											 {"grad_norm", m.grad_norm},
											 {"lr", m.lr},
											 {"epochs_run", m.epochs_run},
											 {"finite", m.finite}});
				}
				if (res.env_steps % cfg.eval.interval == 0)
				{
					size_t k = res.intervals.size();
					double acc = 0.0;
					for (int e = 0; e < cfg.eval.episodes; ++e)
					{
						acc += eval_episode_ppo(agent, split_seed(split_seed(eval_root, k), uint64_t(e)));
					}
					IntervalRecord iv{res.env_steps, acc / cfg.eval.episodes};
					res.intervals.push_back(iv);
					ParamSet<S> ps;
					agent.params(ps);
					save_params<S>(paths.ckpt_latest.string(), cfg_dump, ps, true);
					if (iv.mean_return > best_return)
					{
						best_return = iv.mean_return;
						res.best_interval = k;
						std::filesystem::copy_file(paths.ckpt_latest, paths.ckpt_best,
																			 std::filesystem::copy_options::overwrite_existing);
					}
					log_metrics({{"kind", "eval"},
											 {"env_step", res.env_steps},
											 {"interval", k},
											 {"mean_return", iv.mean_return}});
					if (!quiet)
					{
						std::fprintf(stderr, "[%s seed %llu] step %lld eval %.4f\n", cfg.algorithm.c_str(),
												 (unsigned long long)cfg.seed, (long long)res.env_steps, iv.mean_return);
					}
					write_manifest();
				}
			}

			Rng best_rng(split_seed(cfg.seed, 9));
			Ippo<S> best(cfg.ippo, best_rng);
			{
				ParamSet<S> ps;
				best.params(ps);
				load_params<S>(paths.ckpt_best.string(), ps);
			}
			uint64_t final_root = split_seed(cfg.seed, 5);
			double acc = 0.0;
			for (int e = 0; e < cfg.eval.final_episodes; ++e)
			{
				acc += eval_episode_ppo(best, split_seed(final_root, uint64_t(e)));
			}
			res.final_raw = acc / cfg.eval.final_episodes;
		}

		const TaskBounds& b = bounds.at(cfg.env);
		res.final_norm = normalize_score(res.final_raw, b.min, b.max);
		{
			std::ofstream scores(paths.scores, std::ios::trunc);
			std::vector<ScoreRecord> recs{
				{cfg.env, cfg.algorithm, cfg.run_index, res.final_raw, res.final_norm}};
			write_score_records(scores, recs);
		}
		res.status = "complete";
		write_manifest();
	}
	catch (const std::exception& e)
	{
		res.status = std::string("partial: ") + e.what();
		write_manifest();
		throw;
	}
	return res;
}

} // namespace marlab
