#pragma once

#include "marlab/core/mat.hpp"
#include "marlab/core/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace marlab
{

// Normalized scores grouped by task: runs[m] holds the per-run scores of
// task m. Run counts may differ across tasks.
struct ScoreSet
{
	std::vector<std::string> tasks;
	std::vector<std::vector<double>> runs;

	void validate() const
	{
		MARLAB_CHECK(!tasks.empty(), "ScoreSet: no tasks");
		MARLAB_CHECK(tasks.size() == runs.size(), "ScoreSet: task/run mismatch");
		for (const auto& r : runs) { MARLAB_CHECK(!r.empty(), "ScoreSet: empty task"); }
	}

	std::vector<double> flattened() const
	{
		std::vector<double> out;
		for (const auto& r : runs) { out.insert(out.end(), r.begin(), r.end()); }
		return out;
	}
};

inline double normalize_score(double raw, double min_bound, double max_bound)
{
	MARLAB_CHECK(max_bound > min_bound, "normalize: max must exceed min");
	return (raw - min_bound) / (max_bound - min_bound);
}

inline double percentile_sorted(const std::vector<double>& sorted, double q)
{
	MARLAB_CHECK(!sorted.empty(), "percentile: empty");
	double pos = q * double(sorted.size() - 1);
	size_t lo = size_t(pos);
	size_t hi = std::min(lo + 1, sorted.size() - 1);
	double frac = pos - double(lo);
	return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

// Interquartile mean: drop the lowest and highest quarter (floor(n/4) values
// per side) of the pooled scores and average the rest.
inline double iqm(const ScoreSet& set)
{
	set.validate();
	std::vector<double> flat = set.flattened();
	std::sort(flat.begin(), flat.end());
	size_t cut = flat.size() / 4;
	double acc = 0.0;
	size_t n = 0;
	for (size_t i = cut; i < flat.size() - cut; ++i)
	{
		acc += flat[i];
		++n;
	}
	return acc / double(n);
}

inline double mean_score(const ScoreSet& set)
{
	set.validate();
	std::vector<double> flat = set.flattened();
	double acc = 0.0;
	for (double x : flat) { acc += x; }
	return acc / double(flat.size());
}

inline double median_score(const ScoreSet& set)
{
	set.validate();
	std::vector<double> flat = set.flattened();
	std::sort(flat.begin(), flat.end());
	return percentile_sorted(flat, 0.5);
}

// Mean shortfall below the normalized optimum of one.
inline double optimality_gap(const ScoreSet& set)
{
	set.validate();
	std::vector<double> flat = set.flattened();
	double acc = 0.0;
	for (double x : flat) { acc += std::max(0.0, 1.0 - x); }
	return acc / double(flat.size());
}

// Mann-Whitney probability that a run of X beats a run of Y, averaged over
// tasks; ties count one half.
inline double probability_of_improvement(const ScoreSet& x, const ScoreSet& y)
{
	x.validate();
	y.validate();
	MARLAB_CHECK(x.tasks == y.tasks, "probability_of_improvement: task lists differ");
	double task_acc = 0.0;
	for (size_t m = 0; m < x.runs.size(); ++m)
	{
		double pair_acc = 0.0;
		for (double xi : x.runs[m])
		{
			for (double yj : y.runs[m])
			{
				if (xi > yj) { pair_acc += 1.0; }
				else if (xi == yj) { pair_acc += 0.5; }
			}
		}
		task_acc += pair_acc / double(x.runs[m].size() * y.runs[m].size());
	}
	return task_acc / double(x.runs.size());
}

// Fraction of pooled runs scoring above each threshold. Thresholds must be
// sorted ascending; comparison is strict by default.
inline std::vector<double> performance_profile(const ScoreSet& set,
																							 const std::vector<double>& thresholds,
																							 bool strictly_greater = true)
{
	set.validate();
	for (size_t i = 1; i < thresholds.size(); ++i)
	{
		MARLAB_CHECK(thresholds[i - 1] <= thresholds[i], "performance_profile: unsorted thresholds");
	}
	std::vector<double> flat = set.flattened();
	std::vector<double> out;
	out.reserve(thresholds.size());
	for (double tau : thresholds)
	{
		size_t count = 0;
		for (double s : flat)
		{
			if (strictly_greater ? s > tau : s >= tau) { ++count; }
		}
		out.push_back(double(count) / double(flat.size()));
	}
	return out;
}

struct ConfidenceInterval
{
	double lo = 0.0;
	double hi = 0.0;
	double point = 0.0;
};

// Percentile bootstrap over run resamples drawn independently within each
// task. Deterministic for a fixed seed.
inline ConfidenceInterval
stratified_bootstrap_ci(const std::function<double(const ScoreSet&)>& statistic,
												const ScoreSet& set, int replications, uint64_t seed, double level = 0.95)
{
	set.validate();
	MARLAB_CHECK(replications >= 1, "bootstrap: need at least one replication");
	MARLAB_CHECK(level > 0.0 && level < 1.0, "bootstrap: bad level");
	Rng rng(seed);
	ScoreSet resampled = set;
	std::vector<double> stats;
	stats.reserve(size_t(replications));
	for (int rep = 0; rep < replications; ++rep)
	{
		for (size_t m = 0; m < set.runs.size(); ++m)
		{
			const auto& src = set.runs[m];
			auto& dst = resampled.runs[m];
			for (size_t i = 0; i < src.size(); ++i)
			{
				dst[i] = src[size_t(rng.uniform_int(int64_t(src.size())))];
			}
		}
		stats.push_back(statistic(resampled));
	}
	std::sort(stats.begin(), stats.end());
	ConfidenceInterval ci;
	double tail = (1.0 - level) / 2.0;
	ci.lo = percentile_sorted(stats, tail);
	ci.hi = percentile_sorted(stats, 1.0 - tail);
	ci.point = statistic(set);
	return ci;
}

// Bootstrap for a two-sample statistic such as probability of improvement:
// both sets are resampled independently, stratified by task.
inline ConfidenceInterval stratified_bootstrap_ci2(
	const std::function<double(const ScoreSet&, const ScoreSet&)>& statistic, const ScoreSet& x,
	const ScoreSet& y, int replications, uint64_t seed, double level = 0.95)
{
	x.validate();
	y.validate();
	MARLAB_CHECK(replications >= 1, "bootstrap: need at least one replication");
	Rng rng(seed);
	ScoreSet rx = x, ry = y;
	std::vector<double> stats;
	stats.reserve(size_t(replications));
	for (int rep = 0; rep < replications; ++rep)
	{
		for (size_t m = 0; m < x.runs.size(); ++m)
		{
			for (size_t i = 0; i < x.runs[m].size(); ++i)
			{
				rx.runs[m][i] = x.runs[m][size_t(rng.uniform_int(int64_t(x.runs[m].size())))];
			}
		}
		for (size_t m = 0; m < y.runs.size(); ++m)
		{
			for (size_t i = 0; i < y.runs[m].size(); ++i)
			{
				ry.runs[m][i] = y.runs[m][size_t(rng.uniform_int(int64_t(y.runs[m].size())))];
			}
		}
		stats.push_back(statistic(rx, ry));
	}
	std::sort(stats.begin(), stats.end());
	ConfidenceInterval ci;
	double tail = (1.0 - level) / 2.0;
	ci.lo = percentile_sorted(stats, tail);
	ci.hi = percentile_sorted(stats, 1.0 - tail);
	ci.point = statistic(x, y);
	return ci;
}

// Index of the interval with the best mean return; ties go to the earliest.
inline size_t select_best_checkpoint(const std::vector<double>& interval_means)
{
	MARLAB_CHECK(!interval_means.empty(), "select_best_checkpoint: no intervals");
	size_t best = 0;
	for (size_t i = 1; i < interval_means.size(); ++i)
	{
		if (interval_means[i] > interval_means[best]) { best = i; }
	}
	return best;
}

} // namespace marlab
