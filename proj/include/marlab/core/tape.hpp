#pragma once

#include "marlab/core/mat.hpp"

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace marlab
{

// Trainable tensor with Adam state. Lives outside the tape; the tape only
// accumulates into grad.
template <class S>
struct Param
{
	std::string name;
	Mat<S> value;
	Mat<S> grad;
	Mat<S> adam_m;
	Mat<S> adam_v;

	Param() = default;
	Param(std::string n, Mat<S> v) : name(std::move(n)), value(std::move(v))
	{
		grad = Mat<S>::Zero(value.rows(), value.cols());
		adam_m = grad;
		adam_v = grad;
	}

	index_t size() const { return value.size(); }
};

struct Var
{
	int32_t id = -1;
	bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense matrices. One tape per training step; clear()
// discards the graph. When grad recording is disabled the same ops act as a
// plain forward evaluator, which keeps the act/imagine path and the training
// path on identical arithmetic.
template <class S>
class Tape
{
public:
	using M = Mat<S>;

	explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

	void clear()
	{
		vals_.clear();
		grads_.clear();
		needs_.clear();
		ops_.clear();
		param_vars_.clear();
	}

	bool grad_enabled() const { return grad_enabled_; }
	void set_grad_enabled(bool on) { grad_enabled_ = on; }

	const M& val(Var v) const { return vals_[v.id]; }
	M& grad(Var v) { return grads_[v.id]; }
	bool needs_grad(Var v) const { return needs_[v.id] != 0; }
	index_t rows(Var v) const { return vals_[v.id].rows(); }
	index_t cols(Var v) const { return vals_[v.id].cols(); }

	Var constant(M v)
	{
		return push(std::move(v), false);
	}

	Var param(Param<S>& p)
	{
		Var v = push(p.value, grad_enabled_);
		if (needs_[v.id]) { param_vars_.emplace_back(v.id, &p); }
		return v;
	}

	// ---- binary elementwise ----

	Var add(Var a, Var b)
	{
		check_same_shape(a, b, "add");
		Var out = push(vals_[a.id] + vals_[b.id], needs_[a.id] || needs_[b.id]);
		if (needs_[out.id])
		{
			record([this, a, b, out] {
				if (needs_[a.id]) { grads_[a.id] += grads_[out.id]; }
				if (needs_[b.id]) { grads_[b.id] += grads_[out.id]; }
			});
		}
		return out;
	}

	Var sub(Var a, Var b)
	{
		check_same_shape(a, b, "sub");
		Var out = push(vals_[a.id] - vals_[b.id], needs_[a.id] || needs_[b.id]);
		if (needs_[out.id])
		{
			record([this, a, b, out] {
				if (needs_[a.id]) { grads_[a.id] += grads_[out.id]; }
				if (needs_[b.id]) { grads_[b.id] -= grads_[out.id]; }
			});
		}
		return out;
	}

	Var mul(Var a, Var b)
	{
		check_same_shape(a, b, "mul");
		Var out = push(vals_[a.id].cwiseProduct(vals_[b.id]), needs_[a.id] || needs_[b.id]);
		if (needs_[out.id])
		{
			record([this, a, b, out] {
				if (needs_[a.id]) { grads_[a.id] += grads_[out.id].cwiseProduct(vals_[b.id]); }
				if (needs_[b.id]) { grads_[b.id] += grads_[out.id].cwiseProduct(vals_[a.id]); }
			});
		}
		return out;
	}

	// elementwise min; ties route the gradient to a
	Var min(Var a, Var b)
	{
		check_same_shape(a, b, "min");
		Var out = push(vals_[a.id].cwiseMin(vals_[b.id]), needs_[a.id] || needs_[b.id]);
		if (needs_[out.id])
		{
			record([this, a, b, out] {
				const M& av = vals_[a.id];
				const M& bv = vals_[b.id];
				const M& g = grads_[out.id];
				if (needs_[a.id])
				{
					grads_[a.id] += (av.array() <= bv.array()).template cast<S>().matrix().cwiseProduct(g);
				}
				if (needs_[b.id])
				{
					grads_[b.id] += (av.array() > bv.array()).template cast<S>().matrix().cwiseProduct(g);
				}
			});
		}
		return out;
	}

	Var matmul(Var a, Var b)
	{
		MARLAB_CHECK(cols(a) == rows(b), "matmul: inner dimensions differ");
		Var out = push(vals_[a.id] * vals_[b.id], needs_[a.id] || needs_[b.id]);
		if (needs_[out.id])
		{
			record([this, a, b, out] {
				if (needs_[a.id]) { grads_[a.id].noalias() += grads_[out.id] * vals_[b.id].transpose(); }
				if (needs_[b.id]) { grads_[b.id].noalias() += vals_[a.id].transpose() * grads_[out.id]; }
			});
		}
		return out;
	}

	// ---- constants mixed in ----

	Var affine(Var a, S scale, S shift)
	{
		Var out = push((vals_[a.id].array() * scale + shift).matrix(), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out, scale] { grads_[a.id] += scale * grads_[out.id]; });
		}
		return out;
	}

	Var cmul(Var a, M weights)
	{
		MARLAB_CHECK(rows(a) == weights.rows() && cols(a) == weights.cols(), "cmul: shape mismatch");
		Var out = push(vals_[a.id].cwiseProduct(weights), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out, w = std::move(weights)] { grads_[a.id] += grads_[out.id].cwiseProduct(w); });
		}
		return out;
	}

	// ---- broadcasts ----

	Var add_rowvec(Var a, Var b)
	{
		MARLAB_CHECK(rows(b) == 1 && cols(b) == cols(a), "add_rowvec: bias shape mismatch");
		Var out = push(vals_[a.id].rowwise() + vals_[b.id].row(0), needs_[a.id] || needs_[b.id]);
		if (needs_[out.id])
		{
			record([this, a, b, out] {
				if (needs_[a.id]) { grads_[a.id] += grads_[out.id]; }
				if (needs_[b.id]) { grads_[b.id].row(0) += grads_[out.id].colwise().sum(); }
			});
		}
		return out;
	}

	Var mul_rowvec(Var a, Var b)
	{
		MARLAB_CHECK(rows(b) == 1 && cols(b) == cols(a), "mul_rowvec: shape mismatch");
		Var out = push((vals_[a.id].array().rowwise() * vals_[b.id].row(0).array()).matrix(),
									 needs_[a.id] || needs_[b.id]);
		if (needs_[out.id])
		{
			record([this, a, b, out] {
				if (needs_[a.id])
				{
					grads_[a.id] += (grads_[out.id].array().rowwise() * vals_[b.id].row(0).array()).matrix();
				}
				if (needs_[b.id])
				{
					grads_[b.id].row(0) += grads_[out.id].cwiseProduct(vals_[a.id]).colwise().sum();
				}
			});
		}
		return out;
	}

	Var mul_colvec(Var a, Var b)
	{
		MARLAB_CHECK(cols(b) == 1 && rows(b) == rows(a), "mul_colvec: shape mismatch");
		Var out = push((vals_[a.id].array().colwise() * vals_[b.id].col(0).array()).matrix(),
									 needs_[a.id] || needs_[b.id]);
		if (needs_[out.id])
		{
			record([this, a, b, out] {
				if (needs_[a.id])
				{
					grads_[a.id] += (grads_[out.id].array().colwise() * vals_[b.id].col(0).array()).matrix();
				}
				if (needs_[b.id])
				{
					grads_[b.id].col(0) += grads_[out.id].cwiseProduct(vals_[a.id]).rowwise().sum();
				}
			});
		}
		return out;
	}

	// ---- structure ----

	Var concat_cols(std::span<const Var> parts)
	{
		MARLAB_CHECK(!parts.empty(), "concat_cols: empty");
		index_t r = rows(parts[0]);
		index_t c = 0;
		bool ng = false;
		for (Var p : parts)
		{
			MARLAB_CHECK(rows(p) == r, "concat_cols: row mismatch");
			c += cols(p);
			ng = ng || needs_[p.id];
		}
		M v(r, c);
		index_t off = 0;
		for (Var p : parts)
		{
			v.middleCols(off, cols(p)) = vals_[p.id];
			off += cols(p);
		}
		Var out = push(std::move(v), ng);
		if (needs_[out.id])
		{
			std::vector<Var> ps(parts.begin(), parts.end());
			record([this, ps = std::move(ps), out] {
				index_t o = 0;
				for (Var p : ps)
				{
					if (needs_[p.id]) { grads_[p.id] += grads_[out.id].middleCols(o, cols(p)); }
					o += cols(p);
				}
			});
		}
		return out;
	}

	Var concat_cols(Var a, Var b)
	{
		Var parts[2] = {a, b};
		return concat_cols(std::span<const Var>(parts, 2));
	}

	Var concat_cols(Var a, Var b, Var c)
	{
		Var parts[3] = {a, b, c};
		return concat_cols(std::span<const Var>(parts, 3));
	}

	Var slice_cols(Var a, index_t start, index_t n)
	{
		MARLAB_CHECK(start >= 0 && start + n <= cols(a), "slice_cols: out of range");
		Var out = push(vals_[a.id].middleCols(start, n), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out, start, n] { grads_[a.id].middleCols(start, n) += grads_[out.id]; });
		}
		return out;
	}

	Var concat_rows(std::span<const Var> parts)
	{
		MARLAB_CHECK(!parts.empty(), "concat_rows: empty");
		index_t c = cols(parts[0]);
		index_t r = 0;
		bool ng = false;
		for (Var p : parts)
		{
			MARLAB_CHECK(cols(p) == c, "concat_rows: column mismatch");
			r += rows(p);
			ng = ng || needs_[p.id];
		}
		M v(r, c);
		index_t off = 0;
		for (Var p : parts)
		{
			v.middleRows(off, rows(p)) = vals_[p.id];
			off += rows(p);
		}
		Var out = push(std::move(v), ng);
		if (needs_[out.id])
		{
			std::vector<Var> ps(parts.begin(), parts.end());
			record([this, ps = std::move(ps), out] {
				index_t o = 0;
				for (Var p : ps)
				{
					if (needs_[p.id]) { grads_[p.id] += grads_[out.id].middleRows(o, rows(p)); }
					o += rows(p);
				}
			});
		}
		return out;
	}

	Var gather_rows(Var a, std::vector<int> idx)
	{
		M v(static_cast<index_t>(idx.size()), cols(a));
		for (size_t r = 0; r < idx.size(); ++r)
		{
			MARLAB_CHECK(idx[r] >= 0 && idx[r] < rows(a), "gather_rows: index out of range");
			v.row(static_cast<index_t>(r)) = vals_[a.id].row(idx[r]);
		}
		Var out = push(std::move(v), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out, ix = std::move(idx)] {
				for (size_t r = 0; r < ix.size(); ++r)
				{
					grads_[a.id].row(ix[r]) += grads_[out.id].row(static_cast<index_t>(r));
				}
			});
		}
		return out;
	}

	Var segment_sum(Var a, std::vector<int> seg, index_t n_segments)
	{
		MARLAB_CHECK(static_cast<index_t>(seg.size()) == rows(a), "segment_sum: segment list size");
		M v = M::Zero(n_segments, cols(a));
		for (size_t r = 0; r < seg.size(); ++r)
		{
			MARLAB_CHECK(seg[r] >= 0 && seg[r] < n_segments, "segment_sum: segment out of range");
			v.row(seg[r]) += vals_[a.id].row(static_cast<index_t>(r));
		}
		Var out = push(std::move(v), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out, sg = std::move(seg)] {
				for (size_t r = 0; r < sg.size(); ++r)
				{
					grads_[a.id].row(static_cast<index_t>(r)) += grads_[out.id].row(sg[r]);
				}
			});
		}
		return out;
	}

	// Softmax over a single-column score vector within contiguous groups given
	// by segment ids (not necessarily contiguous ids; grouping is by value).
	Var segment_softmax(Var a, std::vector<int> seg, index_t n_segments)
	{
		MARLAB_CHECK(cols(a) == 1, "segment_softmax: expects a column");
		MARLAB_CHECK(static_cast<index_t>(seg.size()) == rows(a), "segment_softmax: segment list size");
		const M& x = vals_[a.id];
		Vec<S> mx = Vec<S>::Constant(n_segments, std::numeric_limits<S>::lowest());
		for (size_t r = 0; r < seg.size(); ++r) { mx[seg[r]] = std::max(mx[seg[r]], x(static_cast<index_t>(r), 0)); }
		M v(x.rows(), 1);
		Vec<S> denom = Vec<S>::Zero(n_segments);
		for (size_t r = 0; r < seg.size(); ++r)
		{
			S e = std::exp(x(static_cast<index_t>(r), 0) - mx[seg[r]]);
			v(static_cast<index_t>(r), 0) = e;
			denom[seg[r]] += e;
		}
		for (size_t r = 0; r < seg.size(); ++r) { v(static_cast<index_t>(r), 0) /= denom[seg[r]]; }
		Var out = push(std::move(v), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out, sg = std::move(seg), n_segments] {
				const M& p = vals_[out.id];
				const M& g = grads_[out.id];
				Vec<S> dot = Vec<S>::Zero(n_segments);
				for (size_t r = 0; r < sg.size(); ++r)
				{
					dot[sg[r]] += p(static_cast<index_t>(r), 0) * g(static_cast<index_t>(r), 0);
				}
				for (size_t r = 0; r < sg.size(); ++r)
				{
					auto ri = static_cast<index_t>(r);
					grads_[a.id](ri, 0) += p(ri, 0) * (g(ri, 0) - dot[sg[r]]);
				}
			});
		}
		return out;
	}

	// ---- elementwise nonlinearities ----

	Var silu(Var a)
	{
		Var out = push(vals_[a.id].unaryExpr([](S x) { return x * sigmoid_scalar(x); }), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out] {
				grads_[a.id] += grads_[out.id].cwiseProduct(vals_[a.id].unaryExpr([](S x) {
					S s = sigmoid_scalar(x);
					return s * (S(1) + x * (S(1) - s));
				}));
			});
		}
		return out;
	}

	Var relu(Var a)
	{
		Var out = push(vals_[a.id].cwiseMax(S(0)), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out] {
				grads_[a.id] += grads_[out.id].cwiseProduct(
					(vals_[a.id].array() > S(0)).template cast<S>().matrix());
			});
		}
		return out;
	}

	Var leaky_relu(Var a, S slope)
	{
		Var out = push(vals_[a.id].unaryExpr([slope](S x) { return x > S(0) ? x : slope * x; }), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out, slope] {
				grads_[a.id] += grads_[out.id].cwiseProduct(
					vals_[a.id].unaryExpr([slope](S x) { return x > S(0) ? S(1) : slope; }));
			});
		}
		return out;
	}

	Var tanh(Var a)
	{
		Var out = push(vals_[a.id].unaryExpr([](S x) { return static_cast<S>(std::tanh(double(x))); }), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out] {
				grads_[a.id] += grads_[out.id].cwiseProduct(
					vals_[out.id].unaryExpr([](S y) { return S(1) - y * y; }));
			});
		}
		return out;
	}

	Var sigmoid(Var a)
	{
		Var out = push(vals_[a.id].unaryExpr([](S x) { return sigmoid_scalar(x); }), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out] {
				grads_[a.id] += grads_[out.id].cwiseProduct(
					vals_[out.id].unaryExpr([](S y) { return y * (S(1) - y); }));
			});
		}
		return out;
	}

	Var softplus(Var a)
	{
		Var out = push(vals_[a.id].unaryExpr([](S x) { return softplus_scalar(x); }), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out] {
				grads_[a.id] += grads_[out.id].cwiseProduct(
					vals_[a.id].unaryExpr([](S x) { return sigmoid_scalar(x); }));
			});
		}
		return out;
	}

	Var square(Var a)
	{
		Var out = push(vals_[a.id].cwiseProduct(vals_[a.id]), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out] {
				grads_[a.id] += S(2) * grads_[out.id].cwiseProduct(vals_[a.id]);
			});
		}
		return out;
	}

	Var exp(Var a)
	{
		Var out = push(vals_[a.id].unaryExpr([](S x) { return static_cast<S>(std::exp(double(x))); }), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out] { grads_[a.id] += grads_[out.id].cwiseProduct(vals_[out.id]); });
		}
		return out;
	}

	// natural log; caller guarantees strictly positive inputs
	Var log(Var a)
	{
		Var out = push(vals_[a.id].unaryExpr([](S x) { return static_cast<S>(std::log(double(x))); }), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out] { grads_[a.id] += grads_[out.id].cwiseQuotient(vals_[a.id]); });
		}
		return out;
	}

	Var clamp_min(Var a, S floor_value)
	{
		Var out = push(vals_[a.id].cwiseMax(floor_value), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out, floor_value] {
				grads_[a.id] += grads_[out.id].cwiseProduct(
					(vals_[a.id].array() > floor_value).template cast<S>().matrix());
			});
		}
		return out;
	}

	Var clamp(Var a, S lo, S hi)
	{
		Var out = push(vals_[a.id].cwiseMax(lo).cwiseMin(hi), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out, lo, hi] {
				grads_[a.id] += grads_[out.id].cwiseProduct(
					((vals_[a.id].array() > lo) && (vals_[a.id].array() < hi)).template cast<S>().matrix());
			});
		}
		return out;
	}

	// ---- row-structured ops ----

	// Per-row standardisation (no affine part; pair with mul_rowvec/add_rowvec).
	Var layernorm_rows(Var a, S eps = S(1e-3))
	{
		const M& x = vals_[a.id];
		const index_t c = x.cols();
		Vec<S> mean = x.rowwise().mean();
		M centred = x.colwise() - mean;
		Vec<S> inv_std(x.rows());
		for (index_t r = 0; r < x.rows(); ++r)
		{
			S var = centred.row(r).squaredNorm() / S(c);
			inv_std[r] = S(1) / std::sqrt(var + eps);
		}
		M v = (centred.array().colwise() * inv_std.array()).matrix();
		Var out = push(std::move(v), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out, inv_std = std::move(inv_std)] {
				const M& y = vals_[out.id];
				const M& g = grads_[out.id];
				const index_t c = y.cols();
				for (index_t r = 0; r < y.rows(); ++r)
				{
					S gmean = g.row(r).mean();
					S gymean = g.row(r).cwiseProduct(y.row(r)).mean();
					grads_[a.id].row(r) +=
						inv_std[r] * (g.row(r).array() - gmean - y.row(r).array() * gymean).matrix();
					(void)c;
				}
			});
		}
		return out;
	}

	// Softmax within consecutive column groups of width group_size (grouped
	// categorical latents: L groups of K classes in one row).
	Var softmax_groups(Var a, index_t group_size)
	{
		MARLAB_CHECK(group_size >= 1 && cols(a) % group_size == 0, "softmax_groups: width not divisible");
		M v = grouped_softmax(vals_[a.id], group_size);
		Var out = push(std::move(v), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out, group_size] {
				const M& p = vals_[out.id];
				const M& g = grads_[out.id];
				const index_t ngroups = p.cols() / group_size;
				for (index_t r = 0; r < p.rows(); ++r)
				{
					for (index_t q = 0; q < ngroups; ++q)
					{
						auto pq = p.row(r).segment(q * group_size, group_size);
						auto gq = g.row(r).segment(q * group_size, group_size);
						S dot = pq.dot(gq);
						grads_[a.id].row(r).segment(q * group_size, group_size) +=
							pq.cwiseProduct(gq.array().matrix() - Mat<S>::Constant(1, group_size, dot));
					}
				}
			});
		}
		return out;
	}

	Var log_softmax_groups(Var a, index_t group_size)
	{
		MARLAB_CHECK(group_size >= 1 && cols(a) % group_size == 0, "log_softmax_groups: width not divisible");
		const M& x = vals_[a.id];
		M v(x.rows(), x.cols());
		const index_t ngroups = x.cols() / group_size;
		for (index_t r = 0; r < x.rows(); ++r)
		{
			for (index_t q = 0; q < ngroups; ++q)
			{
				auto xq = x.row(r).segment(q * group_size, group_size);
				S mx = xq.maxCoeff();
				S lse = mx + static_cast<S>(std::log((xq.array() - mx).exp().sum()));
				v.row(r).segment(q * group_size, group_size) = xq.array() - lse;
			}
		}
		Var out = push(std::move(v), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out, group_size] {
				const M& y = vals_[out.id];
				const M& g = grads_[out.id];
				const index_t ngroups = y.cols() / group_size;
				for (index_t r = 0; r < y.rows(); ++r)
				{
					for (index_t q = 0; q < ngroups; ++q)
					{
						auto yq = y.row(r).segment(q * group_size, group_size);
						auto gq = g.row(r).segment(q * group_size, group_size);
						S gsum = gq.sum();
						grads_[a.id].row(r).segment(q * group_size, group_size) +=
							(gq.array() - yq.array().exp() * gsum).matrix();
					}
				}
			});
		}
		return out;
	}

	// ---- reductions ----

	Var rowsum(Var a)
	{
		Var out = push(vals_[a.id].rowwise().sum(), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out] {
				grads_[a.id] += grads_[out.id].col(0).replicate(1, cols(a));
			});
		}
		return out;
	}

	Var sum(Var a)
	{
		M v(1, 1);
		v(0, 0) = vals_[a.id].sum();
		Var out = push(std::move(v), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out] { grads_[a.id].array() += grads_[out.id](0, 0); });
		}
		return out;
	}

	Var mean(Var a)
	{
		M v(1, 1);
		S n = static_cast<S>(vals_[a.id].size());
		v(0, 0) = vals_[a.id].sum() / n;
		Var out = push(std::move(v), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out, n] { grads_[a.id].array() += grads_[out.id](0, 0) / n; });
		}
		return out;
	}

	// ---- gradient flow control ----

	Var stop_grad(Var a) { return push(vals_[a.id], false); }

	// Forward value becomes `hard` exactly; gradient passes through to a
	// unchanged (straight-through estimator).
	Var straight_through(Var a, M hard)
	{
		MARLAB_CHECK(rows(a) == hard.rows() && cols(a) == hard.cols(), "straight_through: shape mismatch");
		Var out = push(std::move(hard), needs_[a.id]);
		if (needs_[out.id])
		{
			record([this, a, out] { grads_[a.id] += grads_[out.id]; });
		}
		return out;
	}

	// ---- driver ----

	void backward(Var loss)
	{
		MARLAB_CHECK(rows(loss) == 1 && cols(loss) == 1, "backward: loss must be scalar");
		MARLAB_CHECK(grad_enabled_, "backward: gradients disabled");
		if (needs_[loss.id]) { grads_[loss.id](0, 0) = S(1); }
		for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) { (*it)(); }
		for (auto& [id, p] : param_vars_) { p->grad += grads_[id]; }
	}

	static S sigmoid_scalar(S x)
	{
		if (x >= S(0)) { return S(1) / (S(1) + static_cast<S>(std::exp(double(-x)))); }
		S e = static_cast<S>(std::exp(double(x)));
		return e / (S(1) + e);
	}

	static S softplus_scalar(S x)
	{
		if (x > S(30)) { return x; }
		if (x < S(-30)) { return static_cast<S>(std::exp(double(x))); }
		return static_cast<S>(std::log1p(std::exp(double(x))));
	}

	static M grouped_softmax(const M& x, index_t group_size)
	{
		M v(x.rows(), x.cols());
		const index_t ngroups = x.cols() / group_size;
		for (index_t r = 0; r < x.rows(); ++r)
		{
			for (index_t q = 0; q < ngroups; ++q)
			{
				auto xq = x.row(r).segment(q * group_size, group_size);
				S mx = xq.maxCoeff();
				Eigen::Array<S, 1, Eigen::Dynamic> e = (xq.array() - mx).exp();
				v.row(r).segment(q * group_size, group_size) = e / e.sum();
			}
		}
		return v;
	}

private:
	Var push(M v, bool needs)
	{
		needs = needs && grad_enabled_;
		Var out{static_cast<int32_t>(vals_.size())};
		if (needs) { grads_.emplace_back(M::Zero(v.rows(), v.cols())); }
		else { grads_.emplace_back(); }
		vals_.emplace_back(std::move(v));
		needs_.push_back(needs ? 1 : 0);
		return out;
	}

	void record(std::function<void()> fn) { ops_.emplace_back(std::move(fn)); }

	void check_same_shape(Var a, Var b, const char* op) const
	{
		MARLAB_CHECK(rows(a) == rows(b) && cols(a) == cols(b), std::string(op) + ": shape mismatch");
	}

	std::vector<M> vals_;
	std::vector<M> grads_;
	std::vector<uint8_t> needs_;
	std::vector<std::function<void()>> ops_;
	std::vector<std::pair<int32_t, Param<S>*>> param_vars_;
	bool grad_enabled_ = true;
};

} // namespace marlab
