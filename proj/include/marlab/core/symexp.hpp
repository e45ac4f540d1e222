#pragma once

#include "marlab/core/mat.hpp"

#include <cmath>

namespace marlab
{

// Sign-preserving log squashing used for observations and scalar regression.
template <class S>
S symlog(S x)
{
	return static_cast<S>(x >= S(0) ? std::log1p(double(x)) : -std::log1p(double(-x)));
}

template <class S>
S symexp(S x)
{
	return static_cast<S>(x >= S(0) ? std::expm1(double(x)) : -std::expm1(double(-x)));
}

template <class S>
Mat<S> symlog(const Mat<S>& x)
{
	return x.unaryExpr([](S v) { return symlog(v); });
}

template <class S>
Mat<S> symexp(const Mat<S>& x)
{
	return x.unaryExpr([](S v) { return symexp(v); });
}

// Fixed discrete support for two-hot regression heads. Bin edges are uniform
// in symlog space, so the raw-space centres are symexp spaced.
template <class S>
struct TwoHotBins
{
	Vec<S> centres; // in symlog space
	S lo;
	S hi;
	S gap;

	explicit TwoHotBins(int count = 255, S bound = S(20))
	{
		MARLAB_CHECK(count >= 2, "twohot: need at least two bins");
		centres.resize(count);
		lo = -bound;
		hi = bound;
		gap = (hi - lo) / S(count - 1);
		for (int i = 0; i < count; ++i) { centres[i] = lo + gap * S(i); }
	}

	int count() const { return static_cast<int>(centres.size()); }

	// Weights over the support for a raw-space target value. Linear
	// interpolation between the two neighbouring bins in symlog space.
	void encode_row(S raw_value, S* out) const
	{
		const int n = count();
		for (int i = 0; i < n; ++i) { out[i] = S(0); }
		S v = symlog(raw_value);
		if (v <= lo)
		{
			out[0] = S(1);
			return;
		}
		if (v >= hi)
		{
			out[n - 1] = S(1);
			return;
		}
		S pos = (v - lo) / gap;
		int k = static_cast<int>(pos);
		if (k >= n - 1) { k = n - 2; }
		S frac = pos - S(k);
		out[k] = S(1) - frac;
		out[k + 1] = frac;
	}

	Mat<S> encode(const Mat<S>& raw) const
	{
		Mat<S> out(raw.rows() * raw.cols(), count());
		index_t r = 0;
		for (index_t i = 0; i < raw.rows(); ++i)
		{
			for (index_t j = 0; j < raw.cols(); ++j) { encode_row(raw(i, j), out.row(r++).data()); }
		}
		return out;
	}

	// Expected raw-space value of a distribution over the support.
	S decode_row(const S* probs) const
	{
		S acc = S(0);
		for (int i = 0; i < count(); ++i) { acc += probs[i] * centres[i]; }
		return symexp(acc);
	}

	// Expectation per row of a probability matrix [rows x count].
	Vec<S> decode(const Mat<S>& probs) const
	{
		MARLAB_CHECK(probs.cols() == count(), "twohot: probability width mismatch");
		Vec<S> out(probs.rows());
		for (index_t i = 0; i < probs.rows(); ++i) { out[i] = decode_row(probs.row(i).data()); }
		return out;
	}
};

} // namespace marlab
