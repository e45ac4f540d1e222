#pragma once

#include "marlab/core/nn.hpp"
#include "marlab/core/rng.hpp"
#include "marlab/core/tape.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace marlab
{

// Communication topology shared by every graph layer call: symmetric
// adjacency without self-edges plus nonnegative pairwise distances where
// edges exist. Node features live separately because different layers read
// different feature sets over the same topology.
template <class S>
struct CommGraph
{
	Mat<S> node_features;
	Mat<uint8_t> adjacency;
	Mat<S> edge_dist;

	index_t n_nodes() const { return adjacency.rows(); }

	bool has_edge(index_t i, index_t j) const { return adjacency(i, j) != 0; }
};

template <class S>
CommGraph<S> build_adjacency(const std::vector<std::array<S, 2>>& positions, S range)
{
	MARLAB_CHECK(!positions.empty(), "build_adjacency: need at least one node");
	MARLAB_CHECK(range >= S(0), "build_adjacency: negative range");
	const auto n = static_cast<index_t>(positions.size());
	for (const auto& p : positions)
	{
		MARLAB_CHECK(std::isfinite(double(p[0])) && std::isfinite(double(p[1])),
								 "build_adjacency: non-finite position");
	}
	CommGraph<S> g;
	g.adjacency = Mat<uint8_t>::Zero(n, n);
	g.edge_dist = Mat<S>::Zero(n, n);
	for (index_t i = 0; i < n; ++i)
	{
		for (index_t j = i + 1; j < n; ++j)
		{
			S dx = positions[i][0] - positions[j][0];
			S dy = positions[i][1] - positions[j][1];
			S d = static_cast<S>(std::sqrt(double(dx * dx + dy * dy)));
			if (d <= range)
			{
				g.adjacency(i, j) = 1;
				g.adjacency(j, i) = 1;
				g.edge_dist(i, j) = d;
				g.edge_dist(j, i) = d;
			}
		}
	}
	return g;
}

// Undirected Erdos-Renyi adjacency: each unordered pair carries an edge with
// probability `density`, deterministically per seed. Edge distance for the
// abstract (position-free) case is 1 on every edge.
template <class S>
CommGraph<S> random_adjacency(index_t n, double density, uint64_t seed)
{
	MARLAB_CHECK(n >= 1, "random_adjacency: need at least one node");
	MARLAB_CHECK(density >= 0.0 && density <= 1.0, "random_adjacency: density outside [0,1]");
	Rng rng(seed);
	CommGraph<S> g;
	g.adjacency = Mat<uint8_t>::Zero(n, n);
	g.edge_dist = Mat<S>::Zero(n, n);
	for (index_t i = 0; i < n; ++i)
	{
		for (index_t j = i + 1; j < n; ++j)
		{
			if (rng.bernoulli(density))
			{
				g.adjacency(i, j) = 1;
				g.adjacency(j, i) = 1;
				g.edge_dist(i, j) = S(1);
				g.edge_dist(j, i) = S(1);
			}
		}
	}
	return g;
}

// GAT V2 attention layer with a scalar edge feature. Scores are
// a^T LeakyReLU(W [x_own || x_neighbor || dist]); values are W_out x_neighbor.
// Every node attends over its neighborhood plus itself (self distance 0), so
// an isolated node reduces to a plain linear transform of its own features.
template <class S>
struct GatLayer
{
	Param<S> transform; // (2 d_in + 1) x d_hidden
	Param<S> attention; // d_hidden x 1
	Param<S> output;    // d_in x d_out
	S negative_slope = S(0.2);
	index_t d_in = 0;
	index_t d_out = 0;

	GatLayer() = default;
	GatLayer(const std::string& name, index_t in, index_t hidden, index_t out, Rng& rng)
		: transform(name + ".w", glorot_uniform<S>(2 * in + 1, hidden, rng)),
			attention(name + ".a", glorot_uniform<S>(hidden, 1, rng)),
			output(name + ".o", glorot_uniform<S>(in, out, rng)),
			d_in(in),
			d_out(out)
	{
	}

	void params(ParamSet<S>& out)
	{
		out.push_back(&transform);
		out.push_back(&attention);
		out.push_back(&output);
	}

	// Output width is d_out + d_in: aggregated messages concatenated with the
	// untouched input features.
	Var operator()(Tape<S>& t, Var features, const CommGraph<S>& graph) const
	{
		const index_t n = graph.n_nodes();
		MARLAB_CHECK(t.rows(features) == n, "gat_layer: feature rows != node count");
		MARLAB_CHECK(t.cols(features) == d_in, "gat_layer: feature width mismatch");

		std::vector<int> dst;
		std::vector<int> src;
		for (index_t i = 0; i < n; ++i)
		{
			dst.push_back(static_cast<int>(i));
			src.push_back(static_cast<int>(i));
			for (index_t j = 0; j < n; ++j)
			{
				if (j != i && graph.has_edge(i, j))
				{
					dst.push_back(static_cast<int>(i));
					src.push_back(static_cast<int>(j));
				}
			}
		}
		const auto n_edges = static_cast<index_t>(dst.size());
		Mat<S> dist(n_edges, 1);
		for (index_t e = 0; e < n_edges; ++e)
		{
			dist(e, 0) = dst[e] == src[e] ? S(0) : graph.edge_dist(dst[e], src[e]);
		}

		Var x_dst = t.gather_rows(features, dst);
		Var x_src = t.gather_rows(features, src);
		Var cat = t.concat_cols(x_dst, x_src, t.constant(dist));
		Var hidden = t.leaky_relu(t.matmul(cat, t.param(const_cast<Param<S>&>(transform))), negative_slope);
		Var scores = t.matmul(hidden, t.param(const_cast<Param<S>&>(attention)));
		Var alpha = t.segment_softmax(scores, dst, n);
		Var values = t.matmul(x_src, t.param(const_cast<Param<S>&>(output)));
		Var agg = t.segment_sum(t.mul_colvec(values, alpha), dst, n);
		return t.concat_cols(agg, features);
	}

	// Attention weights alone, for inspection in tests: row e of the result is
	// (dst, src, alpha).
	Mat<S> attention_weights(const CommGraph<S>& graph, const Mat<S>& features) const
	{
		Tape<S> t(false);
		const index_t n = graph.n_nodes();
		std::vector<int> dst;
		std::vector<int> src;
		for (index_t i = 0; i < n; ++i)
		{
			dst.push_back(static_cast<int>(i));
			src.push_back(static_cast<int>(i));
			for (index_t j = 0; j < n; ++j)
			{
				if (j != i && graph.has_edge(i, j))
				{
					dst.push_back(static_cast<int>(i));
					src.push_back(static_cast<int>(j));
				}
			}
		}
		const auto n_edges = static_cast<index_t>(dst.size());
		Mat<S> dist(n_edges, 1);
		for (index_t e = 0; e < n_edges; ++e)
		{
			dist(e, 0) = dst[e] == src[e] ? S(0) : graph.edge_dist(dst[e], src[e]);
		}
		Var f = t.constant(features);
		Var cat = t.concat_cols(t.gather_rows(f, dst), t.gather_rows(f, src), t.constant(dist));
		Var hidden = t.leaky_relu(t.matmul(cat, t.constant(transform.value)), negative_slope);
		Var scores = t.matmul(hidden, t.constant(attention.value));
		Var alpha = t.segment_softmax(scores, dst, n);
		Mat<S> out(n_edges, 3);
		for (index_t e = 0; e < n_edges; ++e)
		{
			out(e, 0) = S(dst[e]);
			out(e, 1) = S(src[e]);
			out(e, 2) = t.val(alpha)(e, 0);
		}
		return out;
	}
};

// k rounds of message passing; layer l must accept the widened output of
// layer l-1 (d_out + d_in growth per round).
template <class S>
Var khop_stack(Tape<S>& t, Var features, const CommGraph<S>& graph,
							 const std::vector<const GatLayer<S>*>& layers)
{
	MARLAB_CHECK(!layers.empty(), "khop_stack: need at least one layer");
	for (const auto* layer : layers) { features = (*layer)(t, features, graph); }
	return features;
}

} // namespace marlab
