#pragma once

#include "marlab/core/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <vector>

namespace marlab
{

struct IppoConfig
{
	int n_agents = 4;
	int obs_dim = 1;
	int n_actions = 4;
	int hidden = 64;
	int mlp_layers = 2;
	double gamma = 0.997;
	double gae_lambda = 0.95;
	double clip_eps = 0.3;
	double entropy_scale = 1e-2;
	double value_coef = 0.5;
	double lr_init = 1e-3;
	double lr_final = 5e-5;
	int64_t lr_anneal_steps = 10000;
	double adam_eps = 1e-5;
	double grad_clip = 1.0;
	int epochs = 30;
	int minibatches = 32;
	int batch_sequences = 64;
	int batch_length = 64;
	int queue_capacity = 1000;

	// linear anneal, flat at exactly lr_final from the horizon on
	double lr_at(int64_t step) const
	{
		if (step >= lr_anneal_steps) { return lr_final; }
		double frac = double(step) / double(lr_anneal_steps);
		return lr_init + (lr_final - lr_init) * frac;
	}

	index_t input_width() const { return index_t(obs_dim + n_agents); }
};

// One agent's slice of a rollout: T transitions plus the bootstrap value.
struct PpoSequence
{
	int agent_id = 0;
	Mat<float> obs;              // T x obs_dim
	std::vector<int> actions;    // T
	Vec<float> logp;             // T, behaviour log-probabilities
	Vec<float> values;           // T+1, includes bootstrap
	Vec<float> rewards;          // T
	std::vector<uint8_t> dones;  // T, 1 when the episode ended on this step
};

// FIFO staging area for collected sequences.
class PpoQueue
{
public:
	explicit PpoQueue(size_t capacity) : capacity_(capacity) {}

	void push(PpoSequence seq)
	{
		queue_.push_back(std::move(seq));
		while (queue_.size() > capacity_) { queue_.pop_front(); }
	}

	size_t size() const { return queue_.size(); }

	// newest n sequences, oldest of them first
	std::vector<const PpoSequence*> newest(size_t n) const
	{
		MARLAB_CHECK(n <= queue_.size(), "PpoQueue: not enough sequences");
		std::vector<const PpoSequence*> out;
		out.reserve(n);
		for (size_t i = queue_.size() - n; i < queue_.size(); ++i) { out.push_back(&queue_[i]); }
		return out;
	}

private:
	size_t capacity_;
	std::deque<PpoSequence> queue_;
};

struct GaeResult
{
	Vec<double> advantages;
	Vec<double> targets;
};

// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1},
// delta_t = r_t + gamma (1 - done_t) v_{t+1} - v_t, targets = A + v.
inline GaeResult gae(const Vec<double>& rewards, const Vec<double>& values,
										 const std::vector<uint8_t>& dones, double gamma, double lambda)
{
	const index_t T = rewards.size();
	MARLAB_CHECK(values.size() == T + 1, "gae: need T+1 values");
	MARLAB_CHECK(index_t(dones.size()) == T, "gae: need T dones");
	GaeResult out;
	out.advantages = Vec<double>::Zero(T);
	out.targets = Vec<double>::Zero(T);
	double acc = 0.0;
	for (index_t t = T; t-- > 0;)
	{
		double nonterminal = dones[size_t(t)] ? 0.0 : 1.0;
		double delta = rewards[t] + gamma * nonterminal * values[t + 1] - values[t];
		acc = delta + gamma * lambda * nonterminal * acc;
		out.advantages[t] = acc;
		out.targets[t] = acc + values[t];
	}
	return out;
}

// plain feed-forward stack: Linear + ReLU hidden layers, linear head
template <class S>
struct ReluMlp
{
	std::vector<Linear<S>> hidden;
	Linear<S> head;

	ReluMlp() = default;
	ReluMlp(const std::string& name, index_t in, index_t width, int depth, index_t out, Rng& rng)
	{
		index_t w = in;
		for (int i = 0; i < depth; ++i)
		{
			hidden.emplace_back(name + ".h" + std::to_string(i), w, width, rng);
			w = width;
		}
		head = Linear<S>(name + ".out", w, out, rng);
	}

	void params(ParamSet<S>& out_ps)
	{
		for (auto& l : hidden) { l.params(out_ps); }
		head.params(out_ps);
	}

	Var operator()(Tape<S>& t, Var x) const
	{
		for (auto& l : hidden) { x = t.relu(l(t, x)); }
		return head(t, x);
	}
};

struct PpoMetrics
{
	double policy_loss = 0.0;
	double value_loss = 0.0;
	double entropy = 0.0;
	double approx_kl = 0.0;
	double clip_fraction = 0.0;
	double grad_norm = 0.0;
	double lr = 0.0;
	int epochs_run = 0;
	bool finite = true;
};

template <class S>
struct Ippo
{
	IppoConfig cfg;
	ReluMlp<S> actor;
	ReluMlp<S> critic;
	Adam<S> opt;
	int64_t train_steps = 0;

	Ippo(const IppoConfig& c, Rng& rng)
		: cfg(c),
			actor("ippo.actor", c.input_width(), index_t(c.hidden), c.mlp_layers, index_t(c.n_actions),
						rng),
			critic("ippo.critic", c.input_width(), index_t(c.hidden), c.mlp_layers, 1, rng),
			opt(c.lr_init, S(c.adam_eps), S(c.grad_clip))
	{
	}

	void params(ParamSet<S>& out)
	{
		actor.params(out);
		critic.params(out);
	}

	// observation rows with the agent one-hot appended
	Mat<S> net_input(const Mat<S>& obs, const std::vector<int>& agent_ids) const
	{
		MARLAB_CHECK(obs.rows() == index_t(agent_ids.size()), "net_input: row mismatch");
		Mat<S> x = Mat<S>::Zero(obs.rows(), cfg.input_width());
		x.leftCols(obs.cols()) = obs;
		for (index_t r = 0; r < obs.rows(); ++r)
		{
			MARLAB_CHECK(agent_ids[size_t(r)] >= 0 && agent_ids[size_t(r)] < cfg.n_agents,
									 "net_input: bad agent id");
			x(r, index_t(cfg.obs_dim) + index_t(agent_ids[size_t(r)])) = S(1);
		}
		return x;
	}

	struct ActOut
	{
		std::vector<int> actions;
		Vec<S> logp;
		Vec<S> values;
	};

	// sample one action per row from the current policy
	ActOut act(const Mat<S>& obs, const std::vector<int>& agent_ids, Rng& rng,
						 bool argmax = false) const
	{
		Tape<S> t(false);
		Mat<S> x = net_input(obs, agent_ids);
		Var logits = actor(t, t.constant(x));
		Mat<S> logp_all = t.val(t.log_softmax_groups(logits, index_t(cfg.n_actions)));
		Mat<S> v = t.val(critic(t, t.constant(x)));

		ActOut out;
		out.actions.resize(size_t(obs.rows()));
		out.logp = Vec<S>(obs.rows());
		out.values = v.col(0);
		for (index_t r = 0; r < obs.rows(); ++r)
		{
			int a = 0;
			if (argmax)
			{
				index_t best = 0;
				logp_all.row(r).maxCoeff(&best);
				a = int(best);
			}
			else
			{
				Vec<S> probs = logp_all.row(r).transpose().array().exp();
				a = int(rng.categorical(probs.data(), probs.data() + probs.size()));
			}
			out.actions[size_t(r)] = a;
			out.logp[r] = logp_all(r, index_t(a));
		}
		return out;
	}

	// pessimistic clipped objective for a single sample
	static double clipped_objective(double ratio, double adv, double eps)
	{
		double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
		return std::min(ratio * adv, clipped * adv);
	}

	PpoMetrics update(const std::vector<const PpoSequence*>& seqs, Rng& rng)
	{
		MARLAB_CHECK(!seqs.empty(), "ppo update: empty batch");

		// flatten sequences into samples with frozen advantages and targets
		struct Sample
		{
			index_t row;
			int action;
			double old_logp;
			double advantage;
			double target;
		};
		index_t total = 0;
		for (auto* s : seqs) { total += s->obs.rows(); }
		Mat<S> inputs(total, cfg.input_width());
		std::vector<Sample> samples;
		samples.reserve(size_t(total));
		index_t row = 0;
		for (auto* s : seqs)
		{
			GaeResult g = gae(s->rewards.template cast<double>(), s->values.template cast<double>(),
												s->dones, cfg.gamma, cfg.gae_lambda);
			std::vector<int> ids(size_t(s->obs.rows()), s->agent_id);
			inputs.middleRows(row, s->obs.rows()) = net_input(s->obs.template cast<S>(), ids);
			for (index_t t = 0; t < s->obs.rows(); ++t)
			{
				MARLAB_CHECK(std::isfinite(double(s->logp[t])), "ppo update: non-finite logp");
				samples.push_back(Sample{row + t, s->actions[size_t(t)], double(s->logp[t]),
																 g.advantages[t], g.targets[t]});
			}
			row += s->obs.rows();
		}

		PpoMetrics metrics;
		ParamSet<S> ps;
		params(ps);
		// one training step of the anneal schedule per update round
		opt.lr = S(cfg.lr_at(train_steps));
		metrics.lr = double(opt.lr);
		++train_steps;
		std::vector<size_t> order(samples.size());
		std::iota(order.begin(), order.end(), size_t(0));

		double acc_pl = 0, acc_vl = 0, acc_ent = 0, acc_kl = 0, acc_clip = 0, acc_gn = 0;
		int n_minibatches = 0;
		for (int epoch = 0; epoch < cfg.epochs; ++epoch)
		{
			// Fisher-Yates shuffle with our own rng for reproducibility
			for (size_t i = order.size(); i > 1; --i)
			{
				size_t j = size_t(rng.uniform_int(int64_t(i)));
				std::swap(order[i - 1], order[j]);
			}
			bool aborted = false;
			for (int mb = 0; mb < cfg.minibatches; ++mb)
			{
				size_t lo = samples.size() * size_t(mb) / size_t(cfg.minibatches);
				size_t hi = samples.size() * size_t(mb + 1) / size_t(cfg.minibatches);
				if (hi == lo) { continue; }
				const index_t n = index_t(hi - lo);

				Mat<S> x(n, cfg.input_width());
				Mat<S> onehot = Mat<S>::Zero(n, cfg.n_actions);
				Mat<S> old_logp(n, 1), adv(n, 1), target(n, 1);
				double adv_mean = 0.0;
				for (index_t k = 0; k < n; ++k)
				{
					const Sample& s = samples[order[lo + size_t(k)]];
					x.row(k) = inputs.row(s.row);
					onehot(k, index_t(s.action)) = S(1);
					old_logp(k, 0) = S(s.old_logp);
					adv(k, 0) = S(s.advantage);
					target(k, 0) = S(s.target);
					adv_mean += s.advantage;
				}
				// normalize advantages within the minibatch
				adv_mean /= double(n);
				double var = 0.0;
				for (index_t k = 0; k < n; ++k)
				{
					double d = double(adv(k, 0)) - adv_mean;
					var += d * d;
				}
				var /= double(n);
				double denom = std::sqrt(std::max(var, 1e-8));
				for (index_t k = 0; k < n; ++k)
				{
					adv(k, 0) = S((double(adv(k, 0)) - adv_mean) / denom);
				}

				Tape<S> t;
				Var xin = t.constant(x);
				Var logits = actor(t, xin);
				Var logp_all = t.log_softmax_groups(logits, index_t(cfg.n_actions));
				Var probs = t.softmax_groups(logits, index_t(cfg.n_actions));
				Var chosen = t.rowsum(t.cmul(logp_all, onehot));
				Var ratio = t.exp(t.sub(chosen, t.constant(old_logp)));
				Var surr_raw = t.cmul(ratio, adv);
				Var surr_clip = t.cmul(t.clamp(ratio, S(1.0 - cfg.clip_eps), S(1.0 + cfg.clip_eps)), adv);
				Var surrogate = t.min(surr_raw, surr_clip);
				Var entropy = t.affine(t.rowsum(t.mul(probs, logp_all)), S(-1), S(0));
				Var value = critic(t, xin);
				Var verr = t.sub(value, t.constant(target));
				Var vloss = t.mean(t.square(verr));
				Var ploss = t.affine(t.mean(surrogate), S(-1), S(0));
				Var ent_mean = t.mean(entropy);
				Var loss = t.add(t.add(ploss, t.affine(ent_mean, S(-cfg.entropy_scale), S(0))),
												 t.affine(vloss, S(cfg.value_coef), S(0)));

				double loss_v = double(t.val(loss)(0, 0));
				if (!std::isfinite(loss_v))
				{
					metrics.finite = false;
					aborted = true;
					break;
				}

				zero_grad(ps);
				t.backward(loss);
				acc_gn += double(opt.step(ps));

				acc_pl += double(t.val(ploss)(0, 0));
				acc_vl += double(t.val(vloss)(0, 0));
				acc_ent += double(t.val(ent_mean)(0, 0));
				const Mat<S>& rv = t.val(ratio);
				const Mat<S>& cv = t.val(chosen);
				double kl = 0.0, clipped = 0.0;
				for (index_t k = 0; k < n; ++k)
				{
					kl += double(old_logp(k, 0)) - double(cv(k, 0));
					if (std::abs(double(rv(k, 0)) - 1.0) > cfg.clip_eps) { clipped += 1.0; }
				}
				acc_kl += kl / double(n);
				acc_clip += clipped / double(n);
				++n_minibatches;
			}
			metrics.epochs_run = epoch + 1;
			if (aborted) { break; }
		}
		if (n_minibatches > 0)
		{
			metrics.policy_loss = acc_pl / n_minibatches;
			metrics.value_loss = acc_vl / n_minibatches;
			metrics.entropy = acc_ent / n_minibatches;
			metrics.approx_kl = acc_kl / n_minibatches;
			metrics.clip_fraction = acc_clip / n_minibatches;
			metrics.grad_norm = acc_gn / n_minibatches;
		}
		return metrics;
	}
};

} // namespace marlab
