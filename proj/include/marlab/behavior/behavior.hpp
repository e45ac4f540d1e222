#pragma once

#include "marlab/wm/world_model.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace marlab
{

struct BehaviorConfig
{
	int n_actions = 4;
	int hidden = 64;
	int mlp_layers = 1;
	bool comm = false; // GNN torsos in front of actor and critic
	int gat_hidden = 32;
	int gat_out = 32;
	int horizon = 15;
	double gamma = 0.997;
	double lambda = 0.95;
	double entropy_scale = 3e-4;
	double actor_unimix = 0.01;
	double polyak = 0.02;
	double retnorm_decay = 0.99;
	double retnorm_floor = 1.0;
	int critic_bins = 255;
	double bin_bound = 20.0;
};

// R_t = r_t + gamma c_t ((1-lambda) v_{t+1} + lambda R_{t+1}), R_H = v_H.
// continues[t] is the continue probability of the state the reward led into.
template <class S>
std::vector<Vec<S>> lambda_returns(const std::vector<Vec<S>>& rewards,
																	 const std::vector<Vec<S>>& values,
																	 const std::vector<Vec<S>>& continues, double gamma,
																	 double lambda)
{
	const size_t H = rewards.size();
	MARLAB_CHECK(values.size() == H + 1, "lambda_returns: need H+1 values");
	MARLAB_CHECK(continues.size() == H, "lambda_returns: need H continues");
	std::vector<Vec<S>> returns(H + 1);
	returns[H] = values[H];
	for (size_t t = H; t-- > 0;)
	{
		returns[t] = rewards[t].array() +
								 S(gamma) * continues[t].array() *
									 ((S(1) - S(lambda)) * values[t + 1].array() + S(lambda) * returns[t + 1].array());
	}
	return returns;
}

// Actor and critic over compact states (h || z), optionally behind distinct
// GAT torsos. The slow critic is a value-copied twin blended by Polyak steps.
template <class S>
class ActorCritic
{
public:
	BehaviorConfig cfg;
	index_t state_width = 0;
	Mlp<S> actor;
	Mlp<S> critic;
	Mlp<S> critic_target;
	std::optional<GatLayer<S>> actor_gat;
	std::optional<GatLayer<S>> critic_gat;
	std::optional<GatLayer<S>> critic_target_gat;
	TwoHotBins<S> bins;

	ActorCritic(const BehaviorConfig& c, index_t state_w, Rng& rng)
		: cfg(c),
			state_width(state_w),
			actor("ac.actor", torso_out_width(), c.hidden, c.mlp_layers, c.n_actions, rng),
			critic("ac.critic", torso_out_width(), c.hidden, c.mlp_layers, c.critic_bins, rng,
						 /*zero_init_head=*/true),
			critic_target("ac.critic_tgt", torso_out_width(), c.hidden, c.mlp_layers, c.critic_bins, rng,
										/*zero_init_head=*/true),
			bins(c.critic_bins, S(c.bin_bound))
	{
		if (c.comm)
		{
			actor_gat.emplace("ac.actor_gat", state_w, index_t(c.gat_hidden), index_t(c.gat_out), rng);
			critic_gat.emplace("ac.critic_gat", state_w, index_t(c.gat_hidden), index_t(c.gat_out), rng);
			critic_target_gat.emplace("ac.critic_tgt_gat", state_w, index_t(c.gat_hidden),
																index_t(c.gat_out), rng);
		}
		sync_target();
	}

	index_t torso_out_width() const
	{
		return state_width + (cfg.comm ? index_t(cfg.gat_out) : 0);
	}

	void actor_params(ParamSet<S>& out)
	{
		actor.params(out);
		if (actor_gat) { actor_gat->params(out); }
	}

	void critic_params(ParamSet<S>& out)
	{
		critic.params(out);
		if (critic_gat) { critic_gat->params(out); }
	}

	void target_params(ParamSet<S>& out)
	{
		critic_target.params(out);
		if (critic_target_gat) { critic_target_gat->params(out); }
	}

	Var actor_logits(Tape<S>& t, Var state, const CommGraph<S>* graph) const
	{
		Var in = state;
		if (cfg.comm) { in = (*actor_gat)(t, in, *graph); }
		return actor(t, in);
	}

	Var actor_probs(Tape<S>& t, Var logits) const
	{
		Var probs = t.softmax_groups(logits, t.cols(logits));
		S mix = static_cast<S>(cfg.actor_unimix);
		return t.affine(probs, S(1) - mix, mix / S(cfg.n_actions));
	}

	Var critic_logits(Tape<S>& t, Var state, const CommGraph<S>* graph) const
	{
		Var in = state;
		if (cfg.comm) { in = (*critic_gat)(t, in, *graph); }
		return critic(t, in);
	}

	Vec<S> critic_value(const Mat<S>& states, const CommGraph<S>* graph) const
	{
		Tape<S> t(false);
		Var logits = critic_logits(t, t.constant(states), graph);
		Mat<S> probs = Tape<S>::grouped_softmax(t.val(logits), cfg.critic_bins);
		return bins.decode(probs);
	}

	Vec<S> target_value(const Mat<S>& states, const CommGraph<S>* graph) const
	{
		Tape<S> t(false);
		Var in = t.constant(states);
		if (cfg.comm) { in = (*critic_target_gat)(t, in, *graph); }
		Var logits = critic_target(t, in);
		Mat<S> probs = Tape<S>::grouped_softmax(t.val(logits), cfg.critic_bins);
		return bins.decode(probs);
	}

	void sync_target()
	{
		ParamSet<S> src, dst;
		critic_params(src);
		target_params(dst);
		for (size_t i = 0; i < src.size(); ++i) { dst[i]->value = src[i]->value; }
	}

	void polyak_update()
	{
		ParamSet<S> src, dst;
		critic_params(src);
		target_params(dst);
		S step = static_cast<S>(cfg.polyak);
		for (size_t i = 0; i < src.size(); ++i)
		{
			dst[i]->value = (S(1) - step) * dst[i]->value + step * src[i]->value;
		}
	}
};

template <class S>
Mat<S> hcat(const Mat<S>& a, const Mat<S>& b)
{
	Mat<S> out(a.rows(), a.cols() + b.cols());
	out.leftCols(a.cols()) = a;
	out.rightCols(b.cols()) = b;
	return out;
}

// H-step rollout under a frozen communication graph. States carry gradients
// nowhere: the rollout is value-level and the update pass recomputes network
// outputs on the recorded states.
template <class S>
struct ImaginedTrajectory
{
	index_t rows = 0;
	CommGraph<S> graph;
	Vec<S> start_cont;          // continue flag of the replayed start step
	std::vector<Mat<S>> h;      // H+1
	std::vector<Mat<S>> z;      // H+1
	std::vector<Mat<S>> action; // H, one-hot rows
	std::vector<Vec<S>> reward; // H, reward entering state k+1
	std::vector<Vec<S>> cont;   // H, continue probability of state k+1
};

template <class S>
ImaginedTrajectory<S> imagine(const WorldModel<S>& wm, const ActorCritic<S>& ac,
															const Mat<S>& start_h, const Mat<S>& start_z,
															const CommGraph<S>& graph, const Vec<S>& start_cont, int horizon,
															Rng& rng, bool argmax_actions = false)
{
	ImaginedTrajectory<S> traj;
	traj.rows = start_h.rows();
	traj.graph = graph;
	traj.start_cont = start_cont;
	traj.h.push_back(start_h);
	traj.z.push_back(start_z);
	const CommGraph<S>* wm_graph = wm.cfg.comm ? &traj.graph : nullptr;
	const CommGraph<S>* ac_graph = ac.cfg.comm ? &traj.graph : nullptr;

	for (int k = 0; k < horizon; ++k)
	{
		Tape<S> t(false);
		Var state = t.constant(hcat(traj.h.back(), traj.z.back()));
		Var probs_v = ac.actor_probs(t, ac.actor_logits(t, state, ac_graph));
		const Mat<S>& probs = t.val(probs_v);
		Mat<S> act = Mat<S>::Zero(traj.rows, ac.cfg.n_actions);
		for (index_t r = 0; r < traj.rows; ++r)
		{
			int a;
			if (argmax_actions)
			{
				index_t best = 0;
				probs.row(r).maxCoeff(&best);
				a = int(best);
			}
			else
			{
				const S* begin = probs.row(r).data();
				a = rng.categorical(begin, begin + ac.cfg.n_actions);
			}
			act(r, a) = S(1);
		}

		auto step = wm.imagine_step(t, t.constant(traj.h.back()), t.constant(traj.z.back()), act,
																wm_graph, rng,
																argmax_actions ? LatentMode::Mode : LatentMode::Sample);
		Mat<S> new_h = t.val(step.h);
		Mat<S> new_z = t.val(step.z);
		Var rlogits = wm.reward_logits(t, step.h, step.z, wm_graph);
		Var clogit = wm.cont_logit(t, step.h, step.z, wm_graph);
		traj.reward.push_back(wm.decode_reward(t.val(rlogits)));
		traj.cont.push_back(wm.decode_cont(t.val(clogit)));
		traj.action.push_back(std::move(act));
		traj.h.push_back(std::move(new_h));
		traj.z.push_back(std::move(new_z));
	}
	return traj;
}

// Running range of the return distribution, for advantage scaling.
template <class S>
struct ReturnNormalizer
{
	double decay = 0.99;
	double floor = 1.0;
	double ema = 0.0;
	bool initialized = false;

	static double percentile(std::vector<double> v, double q)
	{
		MARLAB_CHECK(!v.empty(), "percentile: empty");
		std::sort(v.begin(), v.end());
		double pos = q * double(v.size() - 1);
		auto lo = size_t(pos);
		size_t hi = std::min(lo + 1, v.size() - 1);
		double frac = pos - double(lo);
		return v[lo] * (1.0 - frac) + v[hi] * frac;
	}

	// Returns the scale: max(floor, ema range of P95-P5). The floor guards the
	// division when returns barely spread; tasks with small intrinsic reward
	// scales can lower it so late-stage advantages keep resolution.
	double update(const std::vector<double>& returns)
	{
		double range = percentile(returns, 0.95) - percentile(returns, 0.05);
		if (!initialized)
		{
			ema = range;
			initialized = true;
		}
		else { ema = decay * ema + (1.0 - decay) * range; }
		return std::max(floor, ema);
	}
};

struct AcMetrics
{
	double actor_loss = 0.0;
	double critic_loss = 0.0;
	double entropy = 0.0;
	double mean_return = 0.0;
	double mean_value = 0.0;
	double advantage_scale = 1.0;
	double actor_grad_norm = 0.0;
	double critic_grad_norm = 0.0;
	bool finite = true;
};

// Frozen targets for one update: critic values, lambda returns, imagination
// weights and the advantage scale. Computed once so gradient checks can hold
// them fixed while perturbing network parameters.
template <class S>
struct AcTargets
{
	std::vector<Vec<S>> values;  // H+1
	std::vector<Vec<S>> returns; // H+1
	std::vector<Vec<S>> weights; // H
	double scale = 1.0;
};

template <class S>
AcTargets<S> compute_ac_targets(const ActorCritic<S>& ac, const ImaginedTrajectory<S>& traj,
																ReturnNormalizer<S>& retnorm)
{
	const int H = int(traj.action.size());
	const index_t rows = traj.rows;
	const CommGraph<S>* ac_graph = ac.cfg.comm ? &traj.graph : nullptr;

	AcTargets<S> tg;
	tg.values.reserve(size_t(H) + 1);
	for (int k = 0; k <= H; ++k)
	{
		tg.values.push_back(ac.critic_value(hcat(traj.h[size_t(k)], traj.z[size_t(k)]), ac_graph));
	}
	tg.returns = lambda_returns<S>(traj.reward, tg.values, traj.cont, ac.cfg.gamma, ac.cfg.lambda);

	// imagination weights: w_0 = 1, decayed by gamma and the continue chain
	tg.weights.resize(size_t(H));
	Vec<S> w = Vec<S>::Ones(rows);
	for (int k = 0; k < H; ++k)
	{
		tg.weights[size_t(k)] = w;
		const Vec<S>& c = k == 0 ? traj.start_cont : traj.cont[size_t(k) - 1];
		w = (w.array() * c.array() * S(ac.cfg.gamma)).matrix();
	}

	std::vector<double> flat_returns;
	flat_returns.reserve(size_t(H) * size_t(rows));
	for (int k = 0; k < H; ++k)
	{
		for (index_t r = 0; r < rows; ++r) { flat_returns.push_back(double(tg.returns[size_t(k)][r])); }
	}
	tg.scale = retnorm.update(flat_returns);
	return tg;
}

// Actor and critic losses and (optionally) optimizer steps on precomputed
// targets.
template <class S>
AcMetrics apply_ac_update(ActorCritic<S>& ac, Adam<S>& actor_opt, Adam<S>& critic_opt,
													ParamSet<S>& actor_ps, ParamSet<S>& critic_ps,
													const ImaginedTrajectory<S>& traj, const AcTargets<S>& targets,
													TrainAction action_kind)
{
	const int H = int(traj.action.size());
	const index_t rows = traj.rows;
	const CommGraph<S>* ac_graph = ac.cfg.comm ? &traj.graph : nullptr;
	const std::vector<Vec<S>>& values = targets.values;
	const std::vector<Vec<S>>& returns = targets.returns;
	const std::vector<Vec<S>>& weights = targets.weights;
	const double scale = targets.scale;

	AcMetrics metrics;
	metrics.advantage_scale = scale;
	{
		double acc_r = 0.0, acc_v = 0.0;
		for (int k = 0; k < H; ++k)
		{
			acc_r += double(returns[size_t(k)].mean());
			acc_v += double(values[size_t(k)].mean());
		}
		metrics.mean_return = acc_r / H;
		metrics.mean_value = acc_v / H;
	}

	const bool with_grad = action_kind != TrainAction::EvalOnly;

	// ---- actor ----
	{
		Tape<S> t(with_grad);
		std::vector<Var> losses;
		double entropy_acc = 0.0;
		for (int k = 0; k < H; ++k)
		{
			Var state = t.constant(hcat(traj.h[size_t(k)], traj.z[size_t(k)]));
			Var probs = ac.actor_probs(t, ac.actor_logits(t, state, ac_graph));
			Var logp = t.log(probs);
			Var chosen_logp = t.rowsum(t.cmul(logp, traj.action[size_t(k)]));

			Mat<S> adv(rows, 1);
			for (index_t r = 0; r < rows; ++r)
			{
				adv(r, 0) = (returns[size_t(k)][r] - values[size_t(k)][r]) / S(scale);
			}
			Var entropy = t.affine(t.rowsum(t.mul(probs, logp)), S(-1), S(0));
			entropy_acc += double(t.val(entropy).mean());

			Var gain = t.add(t.cmul(chosen_logp, adv),
											 t.affine(entropy, S(ac.cfg.entropy_scale), S(0)));
			Mat<S> wcol(rows, 1);
			wcol.col(0) = weights[size_t(k)];
			losses.push_back(t.affine(t.cmul(gain, wcol), S(-1), S(0)));
		}
		Var loss = t.mean(t.concat_rows(std::span<const Var>(losses.data(), losses.size())));
		metrics.actor_loss = double(t.val(loss)(0, 0));
		metrics.entropy = entropy_acc / H;
		if (with_grad && std::isfinite(metrics.actor_loss))
		{
			zero_grad(actor_ps);
			t.backward(loss);
			if (action_kind == TrainAction::Update) { metrics.actor_grad_norm = actor_opt.step(actor_ps); }
			else { metrics.actor_grad_norm = grad_global_norm(actor_ps); }
		}
	}

	// ---- critic ----
	{
		Tape<S> t(with_grad);
		std::vector<Var> losses;
		for (int k = 0; k < H; ++k)
		{
			Mat<S> state = hcat(traj.h[size_t(k)], traj.z[size_t(k)]);
			Var logits = ac.critic_logits(t, t.constant(state), ac_graph);
			Var logprobs = t.log_softmax_groups(logits, ac.cfg.critic_bins);

			Mat<S> ret_col(rows, 1);
			ret_col.col(0) = returns[size_t(k)];
			Mat<S> ret_target = ac.bins.encode(ret_col);

			Vec<S> tgt_v = ac.target_value(state, ac_graph);
			Mat<S> tgt_col(rows, 1);
			tgt_col.col(0) = tgt_v;
			Mat<S> reg_target = ac.bins.encode(tgt_col);

			Var ce_ret = t.affine(t.rowsum(t.cmul(logprobs, std::move(ret_target))), S(-1), S(0));
			Var ce_reg = t.affine(t.rowsum(t.cmul(logprobs, std::move(reg_target))), S(-1), S(0));
			Mat<S> wcol(rows, 1);
			wcol.col(0) = weights[size_t(k)];
			losses.push_back(t.cmul(t.add(ce_ret, ce_reg), wcol));
		}
		Var loss = t.mean(t.concat_rows(std::span<const Var>(losses.data(), losses.size())));
		metrics.critic_loss = double(t.val(loss)(0, 0));
		if (with_grad && std::isfinite(metrics.critic_loss))
		{
			zero_grad(critic_ps);
			t.backward(loss);
			if (action_kind == TrainAction::Update)
			{
				metrics.critic_grad_norm = critic_opt.step(critic_ps);
				ac.polyak_update();
			}
			else { metrics.critic_grad_norm = grad_global_norm(critic_ps); }
		}
	}

	metrics.finite = std::isfinite(metrics.actor_loss) && std::isfinite(metrics.critic_loss);
	return metrics;
}

// One REINFORCE + two-hot critic update on an imagined trajectory.
template <class S>
AcMetrics actor_critic_update(ActorCritic<S>& ac, Adam<S>& actor_opt, Adam<S>& critic_opt,
															ParamSet<S>& actor_ps, ParamSet<S>& critic_ps,
															ReturnNormalizer<S>& retnorm, const ImaginedTrajectory<S>& traj,
															TrainAction action_kind)
{
	AcTargets<S> targets = compute_ac_targets(ac, traj, retnorm);
	return apply_ac_update(ac, actor_opt, critic_opt, actor_ps, critic_ps, traj, targets, action_kind);
}

} // namespace marlab
