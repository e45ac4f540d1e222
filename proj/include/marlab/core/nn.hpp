#pragma once

#include "marlab/core/rng.hpp"
#include "marlab/core/tape.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace marlab
{

template <class S>
using ParamSet = std::vector<Param<S>*>;

template <class S>
Mat<S> glorot_uniform(index_t fan_in, index_t fan_out, Rng& rng)
{
	double limit = std::sqrt(6.0 / double(fan_in + fan_out));
	Mat<S> w(fan_in, fan_out);
	for (index_t r = 0; r < fan_in; ++r)
	{
		for (index_t c = 0; c < fan_out; ++c) { w(r, c) = static_cast<S>(rng.uniform(-limit, limit)); }
	}
	return w;
}

// y = x @ W (+ b). Inputs are row-major batches: one sample per row.
template <class S>
struct Linear
{
	Param<S> weight;
	Param<S> bias;
	bool has_bias = true;

	Linear() = default;
	Linear(const std::string& name, index_t in, index_t out, Rng& rng, bool with_bias = true,
				 bool zero_init = false)
		: weight(name + ".w", zero_init ? Mat<S>::Zero(in, out) : glorot_uniform<S>(in, out, rng)),
			bias(name + ".b", Mat<S>::Zero(1, out)),
			has_bias(with_bias)
	{
	}

	Var operator()(Tape<S>& t, Var x) const
	{
		Var y = t.matmul(x, t.param(const_cast<Param<S>&>(weight)));
		if (has_bias) { y = t.add_rowvec(y, t.param(const_cast<Param<S>&>(bias))); }
		return y;
	}

	void params(ParamSet<S>& out)
	{
		out.push_back(&weight);
		if (has_bias) { out.push_back(&bias); }
	}
};

template <class S>
struct LayerNorm
{
	Param<S> scale;
	Param<S> shift;
	S eps = S(1e-3);

	LayerNorm() = default;
	LayerNorm(const std::string& name, index_t width)
		: scale(name + ".scale", Mat<S>::Ones(1, width)), shift(name + ".shift", Mat<S>::Zero(1, width))
	{
	}

	Var operator()(Tape<S>& t, Var x) const
	{
		Var y = t.layernorm_rows(x, eps);
		y = t.mul_rowvec(y, t.param(const_cast<Param<S>&>(scale)));
		return t.add_rowvec(y, t.param(const_cast<Param<S>&>(shift)));
	}

	void params(ParamSet<S>& out)
	{
		out.push_back(&scale);
		out.push_back(&shift);
	}
};

// Linear (no bias) + LayerNorm + SiLU: the standard hidden block.
template <class S>
struct Dense
{
	Linear<S> linear;
	LayerNorm<S> norm;

	Dense() = default;
	Dense(const std::string& name, index_t in, index_t out, Rng& rng)
		: linear(name, in, out, rng, /*with_bias=*/false), norm(name + ".norm", out)
	{
	}

	Var operator()(Tape<S>& t, Var x) const { return t.silu(norm(t, linear(t, x))); }

	void params(ParamSet<S>& out)
	{
		linear.params(out);
		norm.params(out);
	}
};

// Stack of Dense blocks followed by a plain Linear head. Heads that feed a
// distribution are zero-initialised so early outputs are neutral.
template <class S>
struct Mlp
{
	std::vector<Dense<S>> hidden;
	Linear<S> head;

	Mlp() = default;
	Mlp(const std::string& name, index_t in, index_t width, int depth, index_t out, Rng& rng,
			bool zero_init_head = false)
	{
		index_t cur = in;
		for (int i = 0; i < depth; ++i)
		{
			hidden.emplace_back(name + ".h" + std::to_string(i), cur, width, rng);
			cur = width;
		}
		head = Linear<S>(name + ".out", cur, out, rng, /*with_bias=*/true, zero_init_head);
	}

	Var operator()(Tape<S>& t, Var x) const
	{
		for (const auto& layer : hidden) { x = layer(t, x); }
		return head(t, x);
	}

	// Hidden trunk only, without the output projection.
	Var trunk(Tape<S>& t, Var x) const
	{
		for (const auto& layer : hidden) { x = layer(t, x); }
		return x;
	}

	void params(ParamSet<S>& out)
	{
		for (auto& layer : hidden) { layer.params(out); }
		head.params(out);
	}
};

// Normed GRU cell. A single linear maps [x, h] to three chunks which are
// layer-normed together, then split into reset / candidate / update. The
// update gate carries a fixed -1 bias so the cell starts out retaining state.
template <class S>
struct GruCell
{
	Linear<S> linear;
	LayerNorm<S> norm;
	index_t size = 0;

	GruCell() = default;
	GruCell(const std::string& name, index_t in, index_t hidden, Rng& rng)
		: linear(name, in + hidden, 3 * hidden, rng, /*with_bias=*/false),
			norm(name + ".norm", 3 * hidden),
			size(hidden)
	{
	}

	Var operator()(Tape<S>& t, Var x, Var h) const
	{
		Var parts = norm(t, linear(t, t.concat_cols(x, h)));
		Var reset = t.sigmoid(t.slice_cols(parts, 0, size));
		Var cand_pre = t.slice_cols(parts, size, size);
		Var update = t.sigmoid(t.affine(t.slice_cols(parts, 2 * size, size), S(1), S(-1)));
		Var cand = t.tanh(t.mul(reset, cand_pre));
		Var keep = t.affine(update, S(-1), S(1));
		return t.add(t.mul(update, cand), t.mul(keep, h));
	}

	void params(ParamSet<S>& out)
	{
		linear.params(out);
		norm.params(out);
	}
};

template <class S>
inline index_t param_count(const ParamSet<S>& ps)
{
	index_t n = 0;
	for (const auto* p : ps) { n += p->size(); }
	return n;
}

template <class S>
inline void zero_grad(ParamSet<S>& ps)
{
	for (auto* p : ps) { p->grad.setZero(); }
}

template <class S>
inline double grad_global_norm(const ParamSet<S>& ps)
{
	double sq = 0.0;
	for (const auto* p : ps) { sq += double(p->grad.squaredNorm()); }
	return std::sqrt(sq);
}

// Adam with global-norm gradient clipping applied across the whole set.
template <class S>
struct Adam
{
	double lr = 1e-4;
	double beta1 = 0.9;
	double beta2 = 0.999;
	double eps = 1e-8;
	double clip = 0.0; // 0 disables clipping
	int64_t step_count = 0;

	Adam() = default;
	Adam(double lr_, double eps_, double clip_) : lr(lr_), eps(eps_), clip(clip_) {}

	// Returns the pre-clip gradient norm (useful for logging).
	double step(ParamSet<S>& ps)
	{
		double norm = grad_global_norm(ps);
		double scale = 1.0;
		if (clip > 0.0 && norm > clip) { scale = clip / norm; }
		++step_count;
		double bc1 = 1.0 - std::pow(beta1, double(step_count));
		double bc2 = 1.0 - std::pow(beta2, double(step_count));
		for (auto* p : ps)
		{
			Mat<S> g = p->grad * static_cast<S>(scale);
			p->adam_m = static_cast<S>(beta1) * p->adam_m + static_cast<S>(1.0 - beta1) * g;
			p->adam_v = static_cast<S>(beta2) * p->adam_v +
									static_cast<S>(1.0 - beta2) * g.cwiseProduct(g).eval();
			Mat<S> mhat = p->adam_m / static_cast<S>(bc1);
			Mat<S> vhat = p->adam_v / static_cast<S>(bc2);
			p->value -= (static_cast<S>(lr) * mhat.array() /
									 (vhat.array().sqrt() + static_cast<S>(eps)))
										.matrix();
		}
		return norm;
	}
};

} // namespace marlab
