#pragma once

#include "marlab/exp/runner.hpp"
#include "marlab/plot/svg.hpp"
#include "marlab/stats/stats.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace marlab
{

struct RunDir
{
	std::filesystem::path dir;
	nlohmann::json manifest;
	std::vector<ScoreRecord> scores;
};

inline bool is_run_dir(const std::filesystem::path& p)
{
	return std::filesystem::exists(p / "manifest.json");
}

// Accepts run directories or directories of run directories, in any mix.
inline std::vector<RunDir> discover_runs(const std::vector<std::string>& roots)
{
	std::vector<std::filesystem::path> dirs;
	for (const auto& root : roots)
	{
		std::filesystem::path p(root);
		MARLAB_CHECK(std::filesystem::exists(p), "report: no such directory: " + root);
		if (is_run_dir(p))
		{
			dirs.push_back(p);
			continue;
		}
		for (const auto& entry : std::filesystem::directory_iterator(p))
		{
			if (entry.is_directory() && is_run_dir(entry.path())) { dirs.push_back(entry.path()); }
		}
	}
	std::sort(dirs.begin(), dirs.end());
	MARLAB_CHECK(!dirs.empty(), "report: no run directories found");

	std::vector<RunDir> out;
	for (const auto& d : dirs)
	{
		RunDir run;
		run.dir = d;
		std::ifstream mf(d / "manifest.json");
		MARLAB_CHECK(mf.good(), "report: cannot open " + (d / "manifest.json").string());
		mf >> run.manifest;
		std::ifstream sf(d / "scores.jsonl");
		if (sf.good()) { run.scores = read_score_records(sf); }
		out.push_back(std::move(run));
	}
	return out;
}

struct ReportOptions
{
	int aggregate_reps = 50000;
	int poi_reps = 2000;
	int curve_reps = 5000;
	int profile_reps = 2000;
	uint64_t seed = 17;
	double level = 0.95;
};

namespace report_detail
{

// final scores per algorithm, re-normalized against the supplied bounds and
// re-indexed so run ids are dense
inline std::map<std::string, ScoreSet> collect_score_sets(const std::vector<RunDir>& runs,
																													const ScoreBoundsMap& bounds)
{
	std::map<std::string, std::vector<ScoreRecord>> by_algo;
	for (const auto& run : runs)
	{
		for (ScoreRecord rec : run.scores)
		{
			MARLAB_CHECK(bounds.count(rec.task) == 1, "report: no bounds for task " + rec.task);
			const TaskBounds& b = bounds.at(rec.task);
			rec.normalized_score = normalize_score(rec.raw_score, b.min, b.max);
			auto& list = by_algo[rec.algorithm];
			rec.run = int(list.size());
			list.push_back(rec);
		}
	}
	std::map<std::string, ScoreSet> out;
	for (auto& [algo, recs] : by_algo) { out.emplace(algo, build_score_set(recs, algo)); }
	return out;
}

inline std::string fmt3(double v)
{
	char buf[64];
	std::snprintf(buf, sizeof(buf), "%.3f", v);
	return buf;
}

inline std::string ci_str(const ConfidenceInterval& ci)
{
	return fmt3(ci.point) + " [" + fmt3(ci.lo) + ", " + fmt3(ci.hi) + "]";
}

} // namespace report_detail

// Aggregate tables, pairwise improvement probabilities, performance profiles
// and sample-efficiency curves, written as json + text tables + plots.
inline nlohmann::json aggregate_report(const std::vector<RunDir>& runs,
																			 const ScoreBoundsMap& bounds,
																			 const std::filesystem::path& out_dir,
																			 const ReportOptions& opts = {})
{
	namespace rd = report_detail;
	std::filesystem::create_directories(out_dir);
	auto sets = rd::collect_score_sets(runs, bounds);
	MARLAB_CHECK(!sets.empty(), "report: no score records in the given runs");

	nlohmann::json j;
	j["level"] = opts.level;
	j["replications"] = {{"aggregate", opts.aggregate_reps},
											 {"probability_of_improvement", opts.poi_reps},
											 {"sample_efficiency", opts.curve_reps},
											 {"performance_profile", opts.profile_reps}};

	struct AlgoRow
	{
		std::string algo;
		int n_runs = 0;
		ConfidenceInterval iqm, median, mean, gap;
	};
	std::vector<AlgoRow> rows;
	uint64_t boot_seed = opts.seed;
	for (const auto& [algo, set] : sets)
	{
		AlgoRow row;
		row.algo = algo;
		for (const auto& task_runs : set.runs) { row.n_runs += int(task_runs.size()); }
		row.iqm = stratified_bootstrap_ci(iqm, set, opts.aggregate_reps, boot_seed + 1, opts.level);
		row.median =
			stratified_bootstrap_ci(median_score, set, opts.aggregate_reps, boot_seed + 2, opts.level);
		row.mean =
			stratified_bootstrap_ci(mean_score, set, opts.aggregate_reps, boot_seed + 3, opts.level);
		row.gap =
			stratified_bootstrap_ci(optimality_gap, set, opts.aggregate_reps, boot_seed + 4, opts.level);
		boot_seed += 10;
		rows.push_back(std::move(row));
	}
	std::sort(rows.begin(), rows.end(),
						[](const AlgoRow& a, const AlgoRow& b) { return a.iqm.point > b.iqm.point; });

	auto ci_json = [](const ConfidenceInterval& ci) {
		return nlohmann::json{{"point", ci.point}, {"lo", ci.lo}, {"hi", ci.hi}};
	};
	for (const auto& row : rows)
	{
		j["aggregates"][row.algo] = {{"runs", row.n_runs},
																 {"iqm", ci_json(row.iqm)},
																 {"median", ci_json(row.median)},
																 {"mean", ci_json(row.mean)},
																 {"optimality_gap", ci_json(row.gap)}};
	}

	// pairwise probability of improvement, every ordered pair
	for (const auto& [ax, sx] : sets)
	{
		for (const auto& [ay, sy] : sets)
		{
			if (ax == ay) { continue; }
			auto ci = stratified_bootstrap_ci2(probability_of_improvement, sx, sy, opts.poi_reps,
																				 boot_seed, opts.level);
			boot_seed += 1;
			j["probability_of_improvement"][ax][ay] = ci_json(ci);
		}
	}

	// performance profiles over a fixed threshold grid
	std::vector<double> thresholds;
	for (int i = 0; i <= 50; ++i) { thresholds.push_back(double(i) / 50.0); }
	LinePlot profile_plot;
	profile_plot.title = "performance profiles";
	profile_plot.xlabel = "normalized score threshold";
	profile_plot.ylabel = "fraction of runs above";
	for (const auto& [algo, set] : sets)
	{
		std::vector<double> curve = performance_profile(set, thresholds);
		Series s;
		s.label = algo;
		s.x = thresholds;
		s.y = curve;
		for (size_t i = 0; i < thresholds.size(); ++i)
		{
			double tau = thresholds[i];
			auto stat = [tau](const ScoreSet& ss) {
				return performance_profile(ss, std::vector<double>{tau})[0];
			};
			auto ci = stratified_bootstrap_ci(stat, set, opts.profile_reps, boot_seed + i, opts.level);
			s.lo.push_back(ci.lo);
			s.hi.push_back(ci.hi);
		}
		boot_seed += thresholds.size();
		j["performance_profile"][algo] = {{"thresholds", thresholds}, {"fraction", curve}};
		profile_plot.series.push_back(std::move(s));
	}
	write_plot((out_dir / "performance_profiles").string(), profile_plot);

	// sample-efficiency curves from the interval evaluations
	LinePlot curve_plot;
	curve_plot.title = "sample efficiency (interval IQM)";
	curve_plot.xlabel = "environment steps";
	curve_plot.ylabel = "normalized score";
	for (const auto& [algo, set] : sets)
	{
		(void)set;
		std::vector<const RunDir*> algo_runs;
		for (const auto& run : runs)
		{
			if (run.manifest.value("algorithm", "") == algo) { algo_runs.push_back(&run); }
		}
		if (algo_runs.empty()) { continue; }
		size_t n_intervals = SIZE_MAX;
		for (const auto* run : algo_runs)
		{
			n_intervals = std::min(n_intervals, run->manifest["intervals"].size());
		}
		if (n_intervals == 0 || n_intervals == SIZE_MAX) { continue; }
		Series s;
		s.label = algo;
		nlohmann::json curve_json = nlohmann::json::array();
		for (size_t k = 0; k < n_intervals; ++k)
		{
			ScoreSet at_k;
			at_k.tasks.push_back("pooled");
			at_k.runs.emplace_back();
			int64_t env_step = 0;
			for (const auto* run : algo_runs)
			{
				const auto& iv = run->manifest["intervals"][k];
				env_step = iv["env_step"].get<int64_t>();
				std::string task = run->manifest["final"]["task"].get<std::string>();
				MARLAB_CHECK(bounds.count(task) == 1, "report: no bounds for task " + task);
				const TaskBounds& b = bounds.at(task);
				at_k.runs[0].push_back(
					normalize_score(iv["mean_return"].get<double>(), b.min, b.max));
			}
			auto ci = stratified_bootstrap_ci(iqm, at_k, opts.curve_reps, boot_seed + k, opts.level);
			s.x.push_back(double(env_step));
			s.y.push_back(ci.point);
			s.lo.push_back(ci.lo);
			s.hi.push_back(ci.hi);
			curve_json.push_back(
				{{"env_step", env_step}, {"iqm", ci.point}, {"lo", ci.lo}, {"hi", ci.hi}});
		}
		boot_seed += n_intervals;
		j["sample_efficiency"][algo] = curve_json;
		curve_plot.series.push_back(std::move(s));
	}
	write_plot((out_dir / "sample_efficiency").string(), curve_plot);

	// headline bar chart
	BarPlot bar;
	bar.title = "final IQM of normalized score";
	bar.ylabel = "IQM";
	for (const auto& row : rows)
	{
		bar.bars.push_back({row.algo, row.iqm.point, row.iqm.lo, row.iqm.hi});
	}
	write_plot((out_dir / "aggregate_iqm").string(), bar);

	// text tables
	std::ostringstream txt;
	txt << "aggregate metrics over normalized scores, "
			<< int(opts.level * 100) << "% stratified bootstrap CIs ("
			<< opts.aggregate_reps << " replications)\n\n";
	txt << "algorithm    runs  iqm                      median                   mean                "
				 "     optimality gap\n";
	for (const auto& row : rows)
	{
		char line[256];
		std::snprintf(line, sizeof(line), "%-12s %4d  %-24s %-24s %-24s %-24s\n", row.algo.c_str(),
									row.n_runs, rd::ci_str(row.iqm).c_str(), rd::ci_str(row.median).c_str(),
									rd::ci_str(row.mean).c_str(), rd::ci_str(row.gap).c_str());
		txt << line;
	}
	txt << "\nprobability of improvement P(row > column), point estimate\n\n";
	txt << "             ";
	for (const auto& [ay, sy] : sets)
	{
		(void)sy;
		char cell[32];
		std::snprintf(cell, sizeof(cell), "%-12s", ay.c_str());
		txt << cell;
	}
	txt << "\n";
	for (const auto& [ax, sx] : sets)
	{
		(void)sx;
		char head[32];
		std::snprintf(head, sizeof(head), "%-12s ", ax.c_str());
		txt << head;
		for (const auto& [ay, sy] : sets)
		{
			(void)sy;
			if (ax == ay)
			{
				txt << "-           ";
				continue;
			}
			double p = j["probability_of_improvement"][ax][ay]["point"].get<double>();
			char cell[32];
			std::snprintf(cell, sizeof(cell), "%-12s", rd::fmt3(p).c_str());
			txt << cell;
		}
		txt << "\n";
	}
	atomic_write_text(out_dir / "tables.txt", txt.str());
	atomic_write_text(out_dir / "report.json", j.dump(2) + "\n");
	return j;
}

// ---------------------------------------------------------------------------
// world-model loss curves from the per-run metrics logs
// ---------------------------------------------------------------------------

struct WmLossCurves
{
	std::vector<double> step;
	std::vector<double> recon, reward, cont, dyn_kl, rep_kl;
};

// binned means of the world-model loss components over training
inline WmLossCurves wm_curves_for_run(const std::filesystem::path& dir, int n_bins,
																			int64_t total_steps)
{
	std::ifstream is(dir / "metrics.jsonl");
	MARLAB_CHECK(is.good(), "report: cannot open " + (dir / "metrics.jsonl").string());
	const double width = double(total_steps) / n_bins;
	std::vector<double> sums[5];
	std::vector<int> counts(size_t(n_bins), 0);
	for (auto& s : sums) { s.assign(size_t(n_bins), 0.0); }
	std::string line;
	while (std::getline(is, line))
	{
		if (line.empty()) { continue; }
		nlohmann::json rec = nlohmann::json::parse(line);
		if (rec.value("kind", "") != "wm") { continue; }
		int64_t step = rec["env_step"].get<int64_t>();
		int bin = std::min(n_bins - 1, int(double(step) / width));
		sums[0][size_t(bin)] += rec["recon"].get<double>();
		sums[1][size_t(bin)] += rec["reward"].get<double>();
		sums[2][size_t(bin)] += rec["cont"].get<double>();
		sums[3][size_t(bin)] += rec["dyn_kl"].get<double>();
		sums[4][size_t(bin)] += rec["rep_kl"].get<double>();
		counts[size_t(bin)] += 1;
	}
	WmLossCurves out;
	for (int b = 0; b < n_bins; ++b)
	{
		if (counts[size_t(b)] == 0) { continue; }
		double c = double(counts[size_t(b)]);
		out.step.push_back((double(b) + 0.5) * width);
		out.recon.push_back(sums[0][size_t(b)] / c);
		out.reward.push_back(sums[1][size_t(b)] / c);
		out.cont.push_back(sums[2][size_t(b)] / c);
		out.dyn_kl.push_back(sums[3][size_t(b)] / c);
		out.rep_kl.push_back(sums[4][size_t(b)] / c);
	}
	return out;
}

// mean prediction losses over the final third of training, per run
struct WmFinalThird
{
	double recon = 0.0, reward = 0.0, cont = 0.0, dyn_kl = 0.0;
	int count = 0;
};

inline WmFinalThird wm_final_third_for_run(const std::filesystem::path& dir, int64_t total_steps)
{
	std::ifstream is(dir / "metrics.jsonl");
	MARLAB_CHECK(is.good(), "report: cannot open " + (dir / "metrics.jsonl").string());
	WmFinalThird out;
	const double cut = 2.0 * double(total_steps) / 3.0;
	std::string line;
	while (std::getline(is, line))
	{
		if (line.empty()) { continue; }
		nlohmann::json rec = nlohmann::json::parse(line);
		if (rec.value("kind", "") != "wm") { continue; }
		if (double(rec["env_step"].get<int64_t>()) < cut) { continue; }
		out.recon += rec["recon"].get<double>();
		out.reward += rec["reward"].get<double>();
		out.cont += rec["cont"].get<double>();
		out.dyn_kl += rec["dyn_kl"].get<double>();
		out.count += 1;
	}
	if (out.count > 0)
	{
		out.recon /= out.count;
		out.reward /= out.count;
		out.cont /= out.count;
		out.dyn_kl /= out.count;
	}
	return out;
}

inline nlohmann::json wm_loss_report(const std::vector<RunDir>& runs,
																		 const std::filesystem::path& out_dir, int n_bins = 30)
{
	std::filesystem::create_directories(out_dir);
	// algorithm -> averaged curves over that algorithm's runs
	std::map<std::string, std::vector<WmLossCurves>> curves;
	std::map<std::string, std::vector<WmFinalThird>> finals;
	for (const auto& run : runs)
	{
		std::string algo = run.manifest.value("algorithm", "");
		if (algo == "ippo" || algo.empty()) { continue; }
		int64_t steps = run.manifest["env_steps"].get<int64_t>();
		curves[algo].push_back(wm_curves_for_run(run.dir, n_bins, steps));
		finals[algo].push_back(wm_final_third_for_run(run.dir, steps));
	}
	nlohmann::json j;
	if (curves.empty())
	{
		atomic_write_text(out_dir / "wm_losses.json", j.dump(2) + "\n");
		return j;
	}

	auto average = [](const std::vector<WmLossCurves>& list, auto member) {
		// all runs of an algorithm share the binning; average pointwise
		std::vector<double> acc;
		std::vector<int> n;
		for (const auto& c : list)
		{
			const auto& v = c.*member;
			if (v.size() > acc.size())
			{
				acc.resize(v.size(), 0.0);
				n.resize(v.size(), 0);
			}
			for (size_t i = 0; i < v.size(); ++i)
			{
				acc[i] += v[i];
				n[i] += 1;
			}
		}
		for (size_t i = 0; i < acc.size(); ++i) { acc[i] /= std::max(1, n[i]); }
		return acc;
	};

	struct Component
	{
		const char* name;
		std::vector<double> WmLossCurves::* member;
	};
	const Component components[] = {{"obs", &WmLossCurves::recon},
																	{"reward", &WmLossCurves::reward},
																	{"cont", &WmLossCurves::cont},
																	{"dyn_kl", &WmLossCurves::dyn_kl},
																	{"rep_kl", &WmLossCurves::rep_kl}};
	for (const auto& comp : components)
	{
		LinePlot plot;
		plot.title = std::string("world-model loss: ") + comp.name;
		plot.xlabel = "environment steps";
		plot.ylabel = "loss";
		for (const auto& [algo, list] : curves)
		{
			Series s;
			s.label = algo;
			s.x = average(list, &WmLossCurves::step);
			s.y = average(list, comp.member);
			j["curves"][algo][comp.name] = s.y;
			j["curves"][algo]["step"] = s.x;
			plot.series.push_back(std::move(s));
		}
		write_plot((out_dir / (std::string("wm_loss_") + comp.name)).string(), plot);
	}

	for (const auto& [algo, list] : finals)
	{
		double recon = 0, reward = 0, cont = 0, dyn = 0;
		int n = 0;
		for (const auto& f : list)
		{
			if (f.count == 0) { continue; }
			recon += f.recon;
			reward += f.reward;
			cont += f.cont;
			dyn += f.dyn_kl;
			n += 1;
		}
		if (n > 0)
		{
			j["final_third"][algo] = {{"obs", recon / n},
																{"reward", reward / n},
																{"cont", cont / n},
																{"dyn_kl", dyn / n},
																{"runs", n}};
		}
	}
	atomic_write_text(out_dir / "wm_losses.json", j.dump(2) + "\n");
	return j;
}

} // namespace marlab
