#pragma once

#include "marlab/behavior/behavior.hpp"
#include "marlab/env/estimate_game.hpp"
#include "marlab/ppo/ippo.hpp"
#include "marlab/wm/world_model.hpp"

#include <nlohmann/json.hpp>

#include <set>
#include <string>
#include <vector>

namespace marlab
{

inline const char* kCodeVersion = "marlab-0.1";

inline const std::set<std::string>& algorithm_registry()
{
	static const std::set<std::string> algos{"ippo", "idreamer", "codreamer", "wm_comm", "ac_comm"};
	return algos;
}

struct EvalConfig
{
	int interval = 10000;      // env steps between interval evaluations
	int episodes = 32;         // episodes per interval evaluation
	int final_episodes = 320;  // episodes for the final evaluation
};

struct TrainingConfig
{
	int prefill = 2000;          // env steps of random-action seed data
	int pretrain_updates = 500;  // world-model-only updates before any ac update
	int train_every = 64;        // env steps between train rounds
	int wm_updates = 1;          // world-model updates per round
	int ac_updates = 1;          // actor-critic updates per round
	int imag_start_stride = 4;   // use every k-th posterior step as an imagination start
	int batch = 8;               // replay batch size (sequences)
	int length = 16;             // replay sequence length
	size_t replay_capacity = 100000;
	double wm_lr = 1e-4;
	double wm_adam_eps = 1e-8;
	double wm_grad_clip = 1000.0;
	double ac_lr = 3e-5;
	double ac_adam_eps = 1e-5;
	double ac_grad_clip = 100.0;
};

struct ExperimentConfig
{
	int schema_version = 1;
	std::string algorithm = "codreamer";
	std::string env = "estimate_game";
	uint64_t seed = 0;
	int run_index = 0;
	int64_t steps = 200000;
	int workers = 8;

	GameConfig game;
	WorldModelConfig wm;
	BehaviorConfig ac;
	IppoConfig ippo;
	TrainingConfig training;
	EvalConfig eval;

	bool wm_comm() const { return algorithm == "codreamer" || algorithm == "wm_comm"; }
	bool ac_comm() const { return algorithm == "codreamer" || algorithm == "ac_comm"; }
	bool is_dreamer() const { return algorithm != "ippo"; }

	// propagate environment shape and ablation flags into the module configs
	void finalize()
	{
		validate_base();
		wm.n_agents = game.n_agents;
		wm.obs_dim = 1;
		wm.n_actions = game.n_actions;
		wm.comm = wm_comm();
		ac.n_actions = game.n_actions;
		ac.comm = ac_comm();
		ippo.n_agents = game.n_agents;
		ippo.obs_dim = 1;
		ippo.n_actions = game.n_actions;
		game.validate();
	}

	void validate_base() const
	{
		MARLAB_CHECK(algorithm_registry().count(algorithm) == 1,
								 "config: unknown algorithm '" + algorithm + "'");
		MARLAB_CHECK(env == "estimate_game", "config: unknown env '" + env + "'");
		MARLAB_CHECK(steps > 0, "config: steps must be positive");
		MARLAB_CHECK(workers > 0, "config: workers must be positive");
		MARLAB_CHECK(steps % workers == 0, "config: steps must divide evenly across workers");
		MARLAB_CHECK(eval.interval > 0 && eval.interval % workers == 0,
								 "config: eval interval must divide evenly across workers");
		MARLAB_CHECK(training.train_every > 0 && training.train_every % workers == 0,
								 "config: train_every must divide evenly across workers");
		MARLAB_CHECK(training.imag_start_stride >= 1, "config: bad imagination stride");
	}
};

// full-scale hyperparameters (512-wide nets, 32x32 latents); heavy for a desk run
inline ExperimentConfig full_scale_config()
{
	ExperimentConfig cfg;
	cfg.steps = 500000;
	cfg.wm.latents = 32;
	cfg.wm.classes = 32;
	cfg.wm.hidden = 512;
	cfg.wm.gru_hidden = 512;
	cfg.wm.gat_hidden = 128;
	cfg.wm.gat_out = 128;
	cfg.ac.hidden = 512;
	cfg.ac.gat_hidden = 128;
	cfg.ac.gat_out = 128;
	cfg.ac.horizon = 15;
	cfg.ippo.hidden = 512;
	cfg.ippo.mlp_layers = 3;
	cfg.training.batch = 16;
	cfg.training.length = 64;
	cfg.training.replay_capacity = 1000000;
	return cfg;
}

// desk-scale profile: reduced widths and 200k steps, same recipe
inline ExperimentConfig desk_config()
{
	ExperimentConfig cfg;
	cfg.steps = 200000;
	cfg.wm.latents = 16;
	cfg.wm.classes = 16;
	cfg.wm.hidden = 128;
	cfg.wm.gru_hidden = 128;
	cfg.wm.gat_hidden = 32;
	cfg.wm.gat_out = 32;
	cfg.ac.hidden = 128;
	cfg.ac.gat_hidden = 32;
	cfg.ac.gat_out = 32;
	cfg.ac.horizon = 15;
	cfg.ippo.hidden = 128;
	cfg.ippo.mlp_layers = 2;
	// the full-scale optimizer is tuned for ~1e6 gradient updates; a 200k-step
	// desk run only gets a few thousand, so the behavior optimizer runs hotter
	// and training fires twice as often
	cfg.training.train_every = 32;
	cfg.training.ac_lr = 3e-4;
	return cfg;
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c)
{
	j = nlohmann::json{
		{"schema_version", c.schema_version},
		{"algorithm", c.algorithm},
		{"env", c.env},
		{"seed", c.seed},
		{"run_index", c.run_index},
		{"steps", c.steps},
		{"workers", c.workers},
		{"game",
		 {{"n_agents", c.game.n_agents},
			{"horizon", c.game.horizon},
			{"n_actions", c.game.n_actions},
			{"edge_density", c.game.edge_density},
			{"local_weight", c.game.local_weight}}},
		{"wm",
		 {{"latents", c.wm.latents},
			{"classes", c.wm.classes},
			{"hidden", c.wm.hidden},
			{"gru_hidden", c.wm.gru_hidden},
			{"mlp_layers", c.wm.mlp_layers},
			{"gat_hidden", c.wm.gat_hidden},
			{"gat_out", c.wm.gat_out},
			{"unimix", c.wm.unimix},
			{"free_bits", c.wm.free_bits},
			{"beta_pred", c.wm.beta_pred},
			{"beta_dyn", c.wm.beta_dyn},
			{"beta_rep", c.wm.beta_rep},
			{"reward_bins", c.wm.reward_bins},
			{"bin_bound", c.wm.bin_bound}}},
		{"ac",
		 {{"hidden", c.ac.hidden},
			{"mlp_layers", c.ac.mlp_layers},
			{"gat_hidden", c.ac.gat_hidden},
			{"gat_out", c.ac.gat_out},
			{"horizon", c.ac.horizon},
			{"gamma", c.ac.gamma},
			{"lambda", c.ac.lambda},
			{"entropy_scale", c.ac.entropy_scale},
			{"actor_unimix", c.ac.actor_unimix},
			{"polyak", c.ac.polyak},
			{"retnorm_decay", c.ac.retnorm_decay},
			{"retnorm_floor", c.ac.retnorm_floor},
			{"critic_bins", c.ac.critic_bins},
			{"bin_bound", c.ac.bin_bound}}},
		{"ippo",
		 {{"hidden", c.ippo.hidden},
			{"mlp_layers", c.ippo.mlp_layers},
			{"gamma", c.ippo.gamma},
			{"gae_lambda", c.ippo.gae_lambda},
			{"clip_eps", c.ippo.clip_eps},
			{"entropy_scale", c.ippo.entropy_scale},
			{"value_coef", c.ippo.value_coef},
			{"lr_init", c.ippo.lr_init},
			{"lr_final", c.ippo.lr_final},
			{"lr_anneal_steps", c.ippo.lr_anneal_steps},
			{"adam_eps", c.ippo.adam_eps},
			{"grad_clip", c.ippo.grad_clip},
			{"epochs", c.ippo.epochs},
			{"minibatches", c.ippo.minibatches},
			{"batch_sequences", c.ippo.batch_sequences},
			{"batch_length", c.ippo.batch_length},
			{"queue_capacity", c.ippo.queue_capacity}}},
		{"training",
		 {{"prefill", c.training.prefill},
			{"pretrain_updates", c.training.pretrain_updates},
			{"train_every", c.training.train_every},
			{"wm_updates", c.training.wm_updates},
			{"ac_updates", c.training.ac_updates},
			{"imag_start_stride", c.training.imag_start_stride},
			{"batch", c.training.batch},
			{"length", c.training.length},
			{"replay_capacity", c.training.replay_capacity},
			{"wm_lr", c.training.wm_lr},
			{"wm_adam_eps", c.training.wm_adam_eps},
			{"wm_grad_clip", c.training.wm_grad_clip},
			{"ac_lr", c.training.ac_lr},
			{"ac_adam_eps", c.training.ac_adam_eps},
			{"ac_grad_clip", c.training.ac_grad_clip}}},
		{"eval",
		 {{"interval", c.eval.interval},
			{"episodes", c.eval.episodes},
			{"final_episodes", c.eval.final_episodes}}}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c)
{
	auto get = [](const nlohmann::json& obj, const char* key, auto& dst) {
		if (obj.contains(key)) { obj.at(key).get_to(dst); }
	};
	get(j, "schema_version", c.schema_version);
	MARLAB_CHECK(c.schema_version == 1, "config: unsupported schema version");
	get(j, "algorithm", c.algorithm);
	get(j, "env", c.env);
	get(j, "seed", c.seed);
	get(j, "run_index", c.run_index);
	get(j, "steps", c.steps);
	get(j, "workers", c.workers);
	if (j.contains("game"))
	{
		const auto& g = j.at("game");
		get(g, "n_agents", c.game.n_agents);
		get(g, "horizon", c.game.horizon);
		get(g, "n_actions", c.game.n_actions);
		get(g, "edge_density", c.game.edge_density);
		get(g, "local_weight", c.game.local_weight);
	}
	if (j.contains("wm"))
	{
		const auto& w = j.at("wm");
		get(w, "latents", c.wm.latents);
		get(w, "classes", c.wm.classes);
		get(w, "hidden", c.wm.hidden);
		get(w, "gru_hidden", c.wm.gru_hidden);
		get(w, "mlp_layers", c.wm.mlp_layers);
		get(w, "gat_hidden", c.wm.gat_hidden);
		get(w, "gat_out", c.wm.gat_out);
		get(w, "unimix", c.wm.unimix);
		get(w, "free_bits", c.wm.free_bits);
		get(w, "beta_pred", c.wm.beta_pred);
		get(w, "beta_dyn", c.wm.beta_dyn);
		get(w, "beta_rep", c.wm.beta_rep);
		get(w, "reward_bins", c.wm.reward_bins);
		get(w, "bin_bound", c.wm.bin_bound);
	}
	if (j.contains("ac"))
	{
		const auto& a = j.at("ac");
		get(a, "hidden", c.ac.hidden);
		get(a, "mlp_layers", c.ac.mlp_layers);
		get(a, "gat_hidden", c.ac.gat_hidden);
		get(a, "gat_out", c.ac.gat_out);
		get(a, "horizon", c.ac.horizon);
		get(a, "gamma", c.ac.gamma);
		get(a, "lambda", c.ac.lambda);
		get(a, "entropy_scale", c.ac.entropy_scale);
		get(a, "actor_unimix", c.ac.actor_unimix);
		get(a, "polyak", c.ac.polyak);
		get(a, "retnorm_decay", c.ac.retnorm_decay);
		get(a, "retnorm_floor", c.ac.retnorm_floor);
		get(a, "critic_bins", c.ac.critic_bins);
		get(a, "bin_bound", c.ac.bin_bound);
	}
	if (j.contains("ippo"))
	{
		const auto& p = j.at("ippo");
		get(p, "hidden", c.ippo.hidden);
		get(p, "mlp_layers", c.ippo.mlp_layers);
		get(p, "gamma", c.ippo.gamma);
		get(p, "gae_lambda", c.ippo.gae_lambda);
		get(p, "clip_eps", c.ippo.clip_eps);
		get(p, "entropy_scale", c.ippo.entropy_scale);
		get(p, "value_coef", c.ippo.value_coef);
		get(p, "lr_init", c.ippo.lr_init);
		get(p, "lr_final", c.ippo.lr_final);
		get(p, "lr_anneal_steps", c.ippo.lr_anneal_steps);
		get(p, "adam_eps", c.ippo.adam_eps);
		get(p, "grad_clip", c.ippo.grad_clip);
		get(p, "epochs", c.ippo.epochs);
		get(p, "minibatches", c.ippo.minibatches);
		get(p, "batch_sequences", c.ippo.batch_sequences);
		get(p, "batch_length", c.ippo.batch_length);
		get(p, "queue_capacity", c.ippo.queue_capacity);
	}
	if (j.contains("training"))
	{
		const auto& t = j.at("training");
		get(t, "prefill", c.training.prefill);
		get(t, "pretrain_updates", c.training.pretrain_updates);
		get(t, "train_every", c.training.train_every);
		get(t, "wm_updates", c.training.wm_updates);
		get(t, "ac_updates", c.training.ac_updates);
		get(t, "imag_start_stride", c.training.imag_start_stride);
		get(t, "batch", c.training.batch);
		get(t, "length", c.training.length);
		get(t, "replay_capacity", c.training.replay_capacity);
		get(t, "wm_lr", c.training.wm_lr);
		get(t, "wm_adam_eps", c.training.wm_adam_eps);
		get(t, "wm_grad_clip", c.training.wm_grad_clip);
		get(t, "ac_lr", c.training.ac_lr);
		get(t, "ac_adam_eps", c.training.ac_adam_eps);
		get(t, "ac_grad_clip", c.training.ac_grad_clip);
	}
	if (j.contains("eval"))
	{
		const auto& e = j.at("eval");
		get(e, "interval", c.eval.interval);
		get(e, "episodes", c.eval.episodes);
		get(e, "final_episodes", c.eval.final_episodes);
	}
}

} // namespace marlab
