#pragma once

#include "marlab/core/nn.hpp"
#include "marlab/core/symexp.hpp"
#include "marlab/graph/comm_graph.hpp"
#include "marlab/replay/replay_buffer.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace marlab
{

// How categorical latents are realised from their distribution.
//  Sample: straight-through one-hot draw (training)
//  Mode:   straight-through argmax (evaluation, deterministic rollouts)
//  Mean:   the probabilities themselves (smooth; finite-difference tests)
enum class LatentMode
{
	Sample,
	Mode,
	Mean
};

struct WorldModelConfig
{
	int n_agents = 4;
	int obs_dim = 1;
	int n_actions = 4;
	int latents = 8;
	int classes = 8;
	int hidden = 64;
	int gru_hidden = 64;
	int mlp_layers = 1;
	bool comm = false; // GNN inside the RSSM and the reward/continue heads
	int gat_hidden = 32;
	int gat_out = 32;
	double unimix = 0.01;
	double free_bits = 1.0;
	double beta_pred = 1.0;
	double beta_dyn = 0.5;
	double beta_rep = 0.1;
	int reward_bins = 255;
	double bin_bound = 20.0;

	index_t z_width() const { return index_t(latents) * index_t(classes); }
	index_t feat_width() const { return index_t(gru_hidden) + (comm ? index_t(gat_out) : 0); }
	index_t head_in_width() const
	{
		index_t base = index_t(gru_hidden) + z_width();
		return base + (comm ? index_t(gat_out) : 0);
	}
};

// Disjoint union of B per-sequence communication graphs over B*n nodes, for
// processing a whole batch step in one layer call.
template <class S>
CommGraph<S> batch_graphs(const std::vector<const Mat<uint8_t>*>& adjacencies, int n_agents)
{
	const auto b = static_cast<index_t>(adjacencies.size());
	const index_t n = n_agents;
	CommGraph<S> g;
	g.adjacency = Mat<uint8_t>::Zero(b * n, b * n);
	g.edge_dist = Mat<S>::Zero(b * n, b * n);
	for (index_t k = 0; k < b; ++k)
	{
		const Mat<uint8_t>& a = *adjacencies[size_t(k)];
		MARLAB_CHECK(a.rows() == n && a.cols() == n, "batch_graphs: adjacency size mismatch");
		for (index_t i = 0; i < n; ++i)
		{
			for (index_t j = 0; j < n; ++j)
			{
				if (a(i, j) != 0)
				{
					g.adjacency(k * n + i, k * n + j) = 1;
					g.edge_dist(k * n + i, k * n + j) = S(1);
				}
			}
		}
	}
	return g;
}

template <class S>
class WorldModel
{
public:
	WorldModelConfig cfg;
	Mlp<S> encoder;
	Mlp<S> decoder;
	Dense<S> img_in;
	GruCell<S> gru;
	Mlp<S> prior_head;
	Mlp<S> post_head;
	Mlp<S> reward_head;
	Mlp<S> cont_head;
	std::optional<GatLayer<S>> rssm_gat;
	std::optional<GatLayer<S>> reward_gat;
	std::optional<GatLayer<S>> cont_gat;
	TwoHotBins<S> bins;

	WorldModel(const WorldModelConfig& c, Rng& rng)
		: cfg(c),
			encoder("wm.enc", c.obs_dim + c.n_agents, c.hidden, c.mlp_layers, c.hidden, rng),
			decoder("wm.dec", index_t(c.gru_hidden) + c.z_width(), c.hidden, c.mlp_layers, c.obs_dim, rng),
			img_in("wm.img_in", c.z_width() + c.n_actions, c.hidden, rng),
			gru("wm.gru", c.hidden, c.gru_hidden, rng),
			prior_head("wm.prior", c.feat_width(), c.hidden, c.mlp_layers, c.z_width(), rng),
			post_head("wm.post", c.feat_width() + c.hidden, c.hidden, c.mlp_layers, c.z_width(), rng),
			reward_head("wm.reward", c.head_in_width(), c.hidden, c.mlp_layers, c.reward_bins, rng,
									/*zero_init_head=*/true),
			cont_head("wm.cont", c.head_in_width(), c.hidden, c.mlp_layers, 1, rng),
			bins(c.reward_bins, S(c.bin_bound))
	{
		if (c.comm)
		{
			rssm_gat.emplace("wm.rssm_gat", index_t(c.gru_hidden), index_t(c.gat_hidden),
											 index_t(c.gat_out), rng);
			reward_gat.emplace("wm.reward_gat", index_t(c.gru_hidden) + c.z_width(),
												 index_t(c.gat_hidden), index_t(c.gat_out), rng);
			cont_gat.emplace("wm.cont_gat", index_t(c.gru_hidden) + c.z_width(), index_t(c.gat_hidden),
											 index_t(c.gat_out), rng);
		}
	}

	void params(ParamSet<S>& out)
	{
		encoder.params(out);
		decoder.params(out);
		img_in.params(out);
		gru.params(out);
		prior_head.params(out);
		post_head.params(out);
		reward_head.params(out);
		cont_head.params(out);
		if (rssm_gat) { rssm_gat->params(out); }
		if (reward_gat) { reward_gat->params(out); }
		if (cont_gat) { cont_gat->params(out); }
	}

	// Rows are (sequence, agent) pairs: agent one-hots tile per sequence.
	Mat<S> agent_onehots(index_t batch) const
	{
		const index_t n = cfg.n_agents;
		Mat<S> oh = Mat<S>::Zero(batch * n, n);
		for (index_t r = 0; r < batch * n; ++r) { oh(r, r % n) = S(1); }
		return oh;
	}

	// Symlog observation with the agent one-hot appended; the raw encoder input.
	Mat<S> encoder_input(const Mat<S>& obs) const
	{
		const index_t n = cfg.n_agents;
		MARLAB_CHECK(obs.rows() % n == 0, "embed: rows must be batch*n_agents");
		MARLAB_CHECK(obs.cols() == cfg.obs_dim, "embed: observation width mismatch");
		Mat<S> in(obs.rows(), obs.cols() + n);
		in.leftCols(obs.cols()) = symlog(obs);
		in.rightCols(n) = agent_onehots(obs.rows() / n);
		return in;
	}

	Var embed(Tape<S>& t, const Mat<S>& obs) const
	{
		return encoder(t, t.constant(encoder_input(obs)));
	}

	// 1% uniform mixing keeps every class reachable and the KL finite.
	Var unimix_probs(Tape<S>& t, Var logits) const
	{
		Var probs = t.softmax_groups(logits, cfg.classes);
		S mix = static_cast<S>(cfg.unimix);
		return t.affine(probs, S(1) - mix, mix / S(cfg.classes));
	}

	Mat<S> sample_onehot(const Mat<S>& probs, Rng& rng) const
	{
		Mat<S> hard = Mat<S>::Zero(probs.rows(), probs.cols());
		const index_t k = cfg.classes;
		for (index_t r = 0; r < probs.rows(); ++r)
		{
			for (int l = 0; l < cfg.latents; ++l)
			{
				const S* begin = probs.row(r).data() + index_t(l) * k;
				int pick = rng.categorical(begin, begin + k);
				hard(r, index_t(l) * k + pick) = S(1);
			}
		}
		return hard;
	}

	Mat<S> mode_onehot(const Mat<S>& probs) const
	{
		Mat<S> hard = Mat<S>::Zero(probs.rows(), probs.cols());
		const index_t k = cfg.classes;
		for (index_t r = 0; r < probs.rows(); ++r)
		{
			for (int l = 0; l < cfg.latents; ++l)
			{
				index_t best = 0;
				S best_p = probs(r, index_t(l) * k);
				for (index_t c = 1; c < k; ++c)
				{
					if (probs(r, index_t(l) * k + c) > best_p)
					{
						best_p = probs(r, index_t(l) * k + c);
						best = c;
					}
				}
				hard(r, index_t(l) * k + best) = S(1);
			}
		}
		return hard;
	}

	Var realise_latent(Tape<S>& t, Var probs, Rng& rng, LatentMode mode) const
	{
		switch (mode)
		{
			case LatentMode::Sample: return t.straight_through(probs, sample_onehot(t.val(probs), rng));
			case LatentMode::Mode: return t.straight_through(probs, mode_onehot(t.val(probs)));
			case LatentMode::Mean: return probs;
		}
		MARLAB_CHECK(false, "realise_latent: bad mode");
		return probs;
	}

	struct ObserveOut
	{
		Var h;
		Var feat;
		Var prior_logits;
		Var post_logits;
		Var prior_probs;
		Var post_probs;
		Var z;
	};

	// One posterior step for a whole batch of graphs. `first_mask` has a 1 for
	// rows that begin an episode; their incoming state and action are zeroed.
	ObserveOut observe_step(Tape<S>& t, Var h_prev, Var z_prev, const Mat<S>& action_onehot,
													const Mat<S>& obs, const Mat<S>& first_mask, const CommGraph<S>* graph,
													Rng& rng, LatentMode mode) const
	{
		MARLAB_CHECK((graph != nullptr) == cfg.comm, "observe_step: graph presence must match mode");
		Var keep = t.constant(Mat<S>::Ones(first_mask.rows(), 1) - first_mask);
		Var h_in = t.mul_colvec(h_prev, keep);
		Var z_in = t.mul_colvec(z_prev, keep);
		Var x = img_in(t, t.concat_cols(z_in, t.constant(action_onehot)));
		ObserveOut out;
		out.h = gru(t, x, h_in);
		out.feat = cfg.comm ? (*rssm_gat)(t, out.h, *graph) : out.h;
		out.prior_logits = prior_head(t, out.feat);
		Var emb = embed(t, obs);
		out.post_logits = post_head(t, t.concat_cols(out.feat, emb));
		out.prior_probs = unimix_probs(t, out.prior_logits);
		out.post_probs = unimix_probs(t, out.post_logits);
		out.z = realise_latent(t, out.post_probs, rng, mode);
		return out;
	}

	struct ImagineOut
	{
		Var h;
		Var z;
		Var prior_probs;
	};

	// One prior step: same recurrent update, latent drawn from the prior.
	ImagineOut imagine_step(Tape<S>& t, Var h_prev, Var z_prev, const Mat<S>& action_onehot,
													const CommGraph<S>* graph, Rng& rng, LatentMode mode) const
	{
		MARLAB_CHECK((graph != nullptr) == cfg.comm, "imagine_step: graph presence must match mode");
		Var x = img_in(t, t.concat_cols(z_prev, t.constant(action_onehot)));
		ImagineOut out;
		out.h = gru(t, x, h_prev);
		Var feat = cfg.comm ? (*rssm_gat)(t, out.h, *graph) : out.h;
		out.prior_probs = unimix_probs(t, prior_head(t, feat));
		out.z = realise_latent(t, out.prior_probs, rng, mode);
		return out;
	}

	Var decode(Tape<S>& t, Var h, Var z) const { return decoder(t, t.concat_cols(h, z)); }

	Var reward_logits(Tape<S>& t, Var h, Var z, const CommGraph<S>* graph) const
	{
		Var in = t.concat_cols(h, z);
		if (cfg.comm) { in = (*reward_gat)(t, in, *graph); }
		return reward_head(t, in);
	}

	Var cont_logit(Tape<S>& t, Var h, Var z, const CommGraph<S>* graph) const
	{
		Var in = t.concat_cols(h, z);
		if (cfg.comm) { in = (*cont_gat)(t, in, *graph); }
		return cont_head(t, in);
	}

	// Expected reward per row from head logits (value-level helper).
	Vec<S> decode_reward(const Mat<S>& logits) const
	{
		Mat<S> probs = Tape<S>::grouped_softmax(logits, logits.cols());
		return bins.decode(probs);
	}

	Vec<S> decode_cont(const Mat<S>& logit) const
	{
		Vec<S> out(logit.rows());
		for (index_t r = 0; r < logit.rows(); ++r) { out[r] = Tape<S>::sigmoid_scalar(logit(r, 0)); }
		return out;
	}
};

struct WorldModelLossReport
{
	double recon = 0.0;
	double reward = 0.0;
	double cont = 0.0;
	double dyn_kl = 0.0;
	double rep_kl = 0.0;
	double total = 0.0;
	double grad_norm = 0.0;
	bool finite = true;
};

// Replay window re-laid-out as per-step matrices of batch*n_agents rows.
template <class S>
struct WmBatch
{
	index_t batch = 0;
	index_t steps = 0;
	int n_agents = 0;
	std::vector<Mat<S>> obs;     // R x obs_dim
	std::vector<Mat<S>> action;  // R x n_actions, zeroed on is_first rows
	std::vector<Mat<S>> reward;  // R x 1
	std::vector<Mat<S>> cont;    // R x 1
	std::vector<Mat<S>> first;   // R x 1
	std::vector<CommGraph<S>> graphs; // per step, batched

	index_t rows() const { return batch * index_t(n_agents); }
};

template <class S>
WmBatch<S> prepare_batch(const std::vector<ReplaySequence>& seqs, const WorldModelConfig& cfg)
{
	MARLAB_CHECK(!seqs.empty(), "prepare_batch: empty batch");
	WmBatch<S> out;
	out.batch = static_cast<index_t>(seqs.size());
	out.steps = static_cast<index_t>(seqs[0].steps.size());
	out.n_agents = cfg.n_agents;
	const index_t n = cfg.n_agents;
	const index_t rows = out.batch * n;
	for (index_t tt = 0; tt < out.steps; ++tt)
	{
		Mat<S> obs(rows, cfg.obs_dim);
		Mat<S> act = Mat<S>::Zero(rows, cfg.n_actions);
		Mat<S> rew(rows, 1);
		Mat<S> cont(rows, 1);
		Mat<S> first(rows, 1);
		std::vector<const Mat<uint8_t>*> adjs;
		adjs.reserve(size_t(out.batch));
		for (index_t b = 0; b < out.batch; ++b)
		{
			const StepRecord& rec = seqs[size_t(b)].steps[size_t(tt)];
			MARLAB_CHECK(rec.obs.rows() == n && rec.obs.cols() == cfg.obs_dim,
									 "prepare_batch: observation shape mismatch");
			for (index_t i = 0; i < n; ++i)
			{
				index_t r = b * n + i;
				for (index_t c = 0; c < cfg.obs_dim; ++c) { obs(r, c) = static_cast<S>(rec.obs(i, c)); }
				if (!rec.is_first) { act(r, rec.prev_action[size_t(i)]) = S(1); }
				rew(r, 0) = static_cast<S>(rec.reward[i]);
				cont(r, 0) = static_cast<S>(rec.cont);
				first(r, 0) = static_cast<S>(rec.is_first);
			}
			adjs.push_back(&rec.adjacency);
		}
		out.obs.push_back(std::move(obs));
		out.action.push_back(std::move(act));
		out.reward.push_back(std::move(rew));
		out.cont.push_back(std::move(cont));
		out.first.push_back(std::move(first));
		out.graphs.push_back(batch_graphs<S>(adjs, cfg.n_agents));
	}
	return out;
}

// Posterior states for every step of the batch, for starting imagination.
template <class S>
struct WmPosteriors
{
	std::vector<Mat<S>> h;
	std::vector<Mat<S>> z;
};

enum class TrainAction
{
	EvalOnly, // forward pass, loss values only
	Backward, // accumulate gradients into the parameter set, no step
	Update    // backward plus one optimizer step
};

// Unrolls the model over the batch, builds the DreamerV3 loss, optionally
// applies one optimizer step, and hands back the posterior trajectory.
template <class S>
WorldModelLossReport train_world_model(WorldModel<S>& wm, Adam<S>& opt, ParamSet<S>& ps,
																			 const WmBatch<S>& batch, Rng& rng, LatentMode mode,
																			 TrainAction action, WmPosteriors<S>* posteriors = nullptr)
{
	const WorldModelConfig& cfg = wm.cfg;
	const index_t rows = batch.rows();
	Tape<S> t(action != TrainAction::EvalOnly);

	Var h = t.constant(Mat<S>::Zero(rows, cfg.gru_hidden));
	Var z = t.constant(Mat<S>::Zero(rows, cfg.z_width()));

	std::vector<Var> recon_rows, reward_rows, cont_rows, dyn_rows, rep_rows;
	for (index_t step = 0; step < batch.steps; ++step)
	{
		const CommGraph<S>* graph = cfg.comm ? &batch.graphs[size_t(step)] : nullptr;
		auto obs_out = wm.observe_step(t, h, z, batch.action[size_t(step)], batch.obs[size_t(step)],
																	 batch.first[size_t(step)], graph, rng, mode);
		h = obs_out.h;
		z = obs_out.z;
		if (posteriors)
		{
			posteriors->h.push_back(t.val(h));
			posteriors->z.push_back(t.val(z));
		}

		Var dec = wm.decode(t, h, z);
		Var target = t.constant(symlog(batch.obs[size_t(step)]));
		recon_rows.push_back(t.rowsum(t.square(t.sub(dec, target))));

		Var rlogits = wm.reward_logits(t, h, z, graph);
		Mat<S> rtarget = wm.bins.encode(batch.reward[size_t(step)]);
		Var rce = t.rowsum(t.cmul(t.log_softmax_groups(rlogits, cfg.reward_bins), std::move(rtarget)));
		reward_rows.push_back(t.affine(rce, S(-1), S(0)));

		Var clogit = wm.cont_logit(t, h, z, graph);
		Var bce = t.sub(t.softplus(clogit), t.cmul(clogit, batch.cont[size_t(step)]));
		cont_rows.push_back(t.rowsum(bce));

		Var p = obs_out.post_probs;
		Var q = obs_out.prior_probs;
		Var logp = t.log(p);
		Var logq = t.log(q);
		Var p_sg = t.stop_grad(p);
		Var logp_sg = t.stop_grad(logp);
		Var logq_sg = t.stop_grad(logq);
		dyn_rows.push_back(t.rowsum(t.mul(p_sg, t.sub(logp_sg, logq))));
		rep_rows.push_back(t.rowsum(t.mul(p, t.sub(logp, logq_sg))));
	}

	Var recon = t.mean(t.concat_rows(std::span<const Var>(recon_rows.data(), recon_rows.size())));
	Var reward = t.mean(t.concat_rows(std::span<const Var>(reward_rows.data(), reward_rows.size())));
	Var cont = t.mean(t.concat_rows(std::span<const Var>(cont_rows.data(), cont_rows.size())));
	Var dyn = t.mean(t.clamp_min(
		t.concat_rows(std::span<const Var>(dyn_rows.data(), dyn_rows.size())), S(cfg.free_bits)));
	Var rep = t.mean(t.clamp_min(
		t.concat_rows(std::span<const Var>(rep_rows.data(), rep_rows.size())), S(cfg.free_bits)));

	Var pred = t.add(t.add(recon, reward), cont);
	Var total = t.add(t.affine(pred, S(cfg.beta_pred), S(0)),
										t.add(t.affine(dyn, S(cfg.beta_dyn), S(0)), t.affine(rep, S(cfg.beta_rep), S(0))));

	WorldModelLossReport report;
	report.recon = double(t.val(recon)(0, 0));
	report.reward = double(t.val(reward)(0, 0));
	report.cont = double(t.val(cont)(0, 0));
	report.dyn_kl = double(t.val(dyn)(0, 0));
	report.rep_kl = double(t.val(rep)(0, 0));
	report.total = double(t.val(total)(0, 0));
	report.finite = std::isfinite(report.total);

	if (action != TrainAction::EvalOnly)
	{
		if (!report.finite) { return report; }
		zero_grad(ps);
		t.backward(total);
		if (action == TrainAction::Update) { report.grad_norm = opt.step(ps); }
		else { report.grad_norm = grad_global_norm(ps); }
	}
	return report;
}

} // namespace marlab
