#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace marlab
{

// Row-major so per-row (per node / per sample) slices are contiguous.
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using index_t = Eigen::Index;

#define MARLAB_CHECK(cond, msg)                                  \
	do                                                             \
	{                                                              \
		if (!(cond)) { throw std::invalid_argument(std::string(msg)); } \
	} while (0)

} // namespace marlab
