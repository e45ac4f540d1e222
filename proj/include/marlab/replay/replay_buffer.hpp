#pragma once

#include "marlab/core/mat.hpp"
#include "marlab/core/rng.hpp"

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

namespace marlab
{

// One environment transition as stored for training. `prev_action` is the
// action that led into `obs`; a reset record carries the initial observation
// with zeroed prev_action, reward 0, cont 1 and is_first set.
struct StepRecord
{
	Mat<float> obs; // n_agents x obs_dim
	std::vector<int> prev_action;
	Vec<float> reward; // per agent
	uint8_t cont = 1;  // 0 when this step ended the episode
	uint8_t is_first = 0;
	Mat<uint8_t> adjacency; // episode communication graph
	uint64_t seq = 0;       // global arrival stamp, set by the buffer
};

struct ReplaySequence
{
	std::vector<StepRecord> steps;
};

// FIFO over all workers with contiguous per-worker streams. Sampled windows
// never span two streams; they may span episode boundaries, which is what the
// is_first flags are for.
class ReplayBuffer
{
public:
	ReplayBuffer(size_t capacity, int n_workers) : capacity_(capacity), streams_(size_t(n_workers))
	{
		MARLAB_CHECK(capacity >= 1, "replay: capacity must be positive");
		MARLAB_CHECK(n_workers >= 1, "replay: need at least one worker");
	}

	void append(StepRecord record, int worker_id)
	{
		std::lock_guard<std::mutex> lock(mu_);
		MARLAB_CHECK(worker_id >= 0 && worker_id < static_cast<int>(streams_.size()),
								 "replay: worker id out of range");
		record.seq = next_seq_++;
		streams_[size_t(worker_id)].push_back(std::move(record));
		++size_;
		while (size_ > capacity_) { evict_oldest(); }
	}

	size_t size() const
	{
		std::lock_guard<std::mutex> lock(mu_);
		return size_;
	}

	uint64_t evicted() const
	{
		std::lock_guard<std::mutex> lock(mu_);
		return evicted_;
	}

	// Uniform over all valid windows across streams; empty when no stream has
	// grown to length T yet.
	std::optional<std::vector<ReplaySequence>> sample(int batch, int length, uint64_t seed) const
	{
		std::lock_guard<std::mutex> lock(mu_);
		MARLAB_CHECK(batch >= 1 && length >= 1, "replay: bad sample request");
		std::vector<size_t> window_counts(streams_.size(), 0);
		size_t total_windows = 0;
		for (size_t w = 0; w < streams_.size(); ++w)
		{
			size_t len = streams_[w].size();
			if (len >= size_t(length))
			{
				window_counts[w] = len - size_t(length) + 1;
				total_windows += window_counts[w];
			}
		}
		if (total_windows == 0) { return std::nullopt; }

		Rng rng(seed);
		std::vector<ReplaySequence> out;
		out.reserve(size_t(batch));
		for (int b = 0; b < batch; ++b)
		{
			auto pick = size_t(rng.uniform_int(int64_t(total_windows)));
			size_t w = 0;
			while (pick >= window_counts[w])
			{
				pick -= window_counts[w];
				++w;
			}
			ReplaySequence seq;
			seq.steps.reserve(size_t(length));
			for (int i = 0; i < length; ++i) { seq.steps.push_back(streams_[w][pick + size_t(i)]); }
			out.push_back(std::move(seq));
		}
		return out;
	}

private:
	void evict_oldest()
	{
		size_t oldest_worker = 0;
		uint64_t oldest_seq = UINT64_MAX;
		for (size_t w = 0; w < streams_.size(); ++w)
		{
			if (!streams_[w].empty() && streams_[w].front().seq < oldest_seq)
			{
				oldest_seq = streams_[w].front().seq;
				oldest_worker = w;
			}
		}
		streams_[oldest_worker].pop_front();
		--size_;
		++evicted_;
	}

	size_t capacity_;
	std::vector<std::deque<StepRecord>> streams_;
	size_t size_ = 0;
	uint64_t next_seq_ = 0;
	uint64_t evicted_ = 0;
	mutable std::mutex mu_;
};

} // namespace marlab
