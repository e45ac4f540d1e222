#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace marlab
{

// splitmix64; used to derive independent child seeds from one master seed.
inline uint64_t split_seed(uint64_t seed, uint64_t stream)
{
	uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
	z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
	z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
	return z ^ (z >> 31);
}

// Deterministic RNG wrapper. Distributions are hand-rolled on top of the raw
// mt19937_64 output so sampled values are pinned across standard libraries.
class Rng
{
public:
	explicit Rng(uint64_t seed = 0) : gen_(seed) {}

	uint64_t next_u64() { return gen_(); }

	// uniform in [0, 1)
	double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

	double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

	// integer in [0, n)
	int64_t uniform_int(int64_t n)
	{
		return static_cast<int64_t>(static_cast<double>(n) * uniform());
	}

	bool bernoulli(double p) { return uniform() < p; }

	// Box-Muller; one value per call, cache unused.
	double normal()
	{
		if (has_spare_)
		{
			has_spare_ = false;
			return spare_;
		}
		double u1 = 0.0;
		while (u1 <= 0.0) { u1 = uniform(); }
		double u2 = uniform();
		double r = std::sqrt(-2.0 * std::log(u1));
		double theta = 6.283185307179586476925286766559 * u2;
		spare_ = r * std::sin(theta);
		has_spare_ = true;
		return r * std::cos(theta);
	}

	double normal(double mean, double stddev) { return mean + stddev * normal(); }

	// index sampled from unnormalised nonnegative weights
	template <class Iter>
	int categorical(Iter begin, Iter end)
	{
		double total = 0.0;
		for (Iter it = begin; it != end; ++it) { total += static_cast<double>(*it); }
		double u = uniform() * total;
		int k = 0;
		double acc = 0.0;
		int last = 0;
		for (Iter it = begin; it != end; ++it, ++k)
		{
			acc += static_cast<double>(*it);
			last = k;
			if (u < acc) { return k; }
		}
		return last;
	}

private:
	std::mt19937_64 gen_;
	double spare_ = 0.0;
	bool has_spare_ = false;
};

} // namespace marlab
