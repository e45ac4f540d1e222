#pragma once

#include "marlab/stats/stats.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace marlab
{

struct ScoreRecord
{
	std::string task;
	std::string algorithm;
	int run = 0;
	double raw_score = 0.0;
	double normalized_score = 0.0;
};

struct TaskBounds
{
	double min = 0.0;
	double max = 1.0;
};

using ScoreBoundsMap = std::map<std::string, TaskBounds>;

// published min/max returns for the estimate game
inline ScoreBoundsMap default_bounds()
{
	return {{"estimate_game", TaskBounds{-3.13, 0.00}}};
}

inline void write_bounds(std::ostream& os, const ScoreBoundsMap& bounds)
{
	nlohmann::json j;
	for (const auto& [task, b] : bounds)
	{
		j[task] = {{"min", b.min}, {"max", b.max}};
	}
	os << j.dump(2) << "\n";
}

inline ScoreBoundsMap read_bounds(std::istream& is)
{
	nlohmann::json j = nlohmann::json::parse(is);
	ScoreBoundsMap out;
	for (auto it = j.begin(); it != j.end(); ++it)
	{
		TaskBounds b;
		b.min = it.value().at("min").get<double>();
		b.max = it.value().at("max").get<double>();
		MARLAB_CHECK(b.max > b.min, "bounds: max must exceed min");
		out[it.key()] = b;
	}
	return out;
}

inline void write_score_records(std::ostream& os, const std::vector<ScoreRecord>& records)
{
	for (const auto& r : records)
	{
		nlohmann::json j{{"task", r.task},
										 {"algorithm", r.algorithm},
										 {"run", r.run},
										 {"raw_score", r.raw_score},
										 {"normalized_score", r.normalized_score}};
		os << j.dump() << "\n";
	}
}

inline std::vector<ScoreRecord> read_score_records(std::istream& is)
{
	std::vector<ScoreRecord> out;
	std::string line;
	while (std::getline(is, line))
	{
		if (line.empty()) { continue; }
		nlohmann::json j = nlohmann::json::parse(line);
		ScoreRecord r;
		r.task = j.at("task").get<std::string>();
		r.algorithm = j.at("algorithm").get<std::string>();
		r.run = j.at("run").get<int>();
		r.raw_score = j.at("raw_score").get<double>();
		r.normalized_score = j.at("normalized_score").get<double>();
		MARLAB_CHECK(std::isfinite(r.raw_score) && std::isfinite(r.normalized_score),
								 "score record: non-finite score");
		out.push_back(std::move(r));
	}
	return out;
}

// normalized scores of one algorithm grouped into a score set, tasks sorted,
// runs ordered by run index
inline ScoreSet build_score_set(const std::vector<ScoreRecord>& records,
																const std::string& algorithm)
{
	std::map<std::string, std::map<int, double>> by_task;
	for (const auto& r : records)
	{
		if (r.algorithm != algorithm) { continue; }
		MARLAB_CHECK(!by_task[r.task].count(r.run), "build_score_set: duplicate run");
		by_task[r.task][r.run] = r.normalized_score;
	}
	MARLAB_CHECK(!by_task.empty(), "build_score_set: no records for algorithm");
	ScoreSet set;
	for (const auto& [task, runs] : by_task)
	{
		set.tasks.push_back(task);
		std::vector<double> vals;
		for (const auto& [run, score] : runs) { vals.push_back(score); }
		set.runs.push_back(std::move(vals));
	}
	return set;
}

} // namespace marlab
