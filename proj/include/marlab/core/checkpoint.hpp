#pragma once

#include "marlab/core/nn.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace marlab
{

// Versioned binary container: magic, config echo, then named tensors.
// Layout (little endian):
//   8 bytes  magic "MRLB0001"
//   u64      config string length, followed by that many bytes
//   u64      tensor count
//   per tensor:
//     u32    name length, followed by name bytes
//     u8     dtype (0 = f32, 1 = f64)
//     u64    rows, u64 cols
//     raw row-major payload

namespace detail
{

inline constexpr char kCheckpointMagic[8] = {'M', 'R', 'L', 'B', '0', '0', '0', '1'};

template <class T>
void write_pod(std::ostream& os, const T& v)
{
	os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is)
{
	T v{};
	is.read(reinterpret_cast<char*>(&v), sizeof(T));
	if (!is) { throw std::runtime_error("checkpoint: truncated file"); }
	return v;
}

} // namespace detail

template <class S>
struct NamedTensors
{
	std::string config;
	std::map<std::string, Mat<S>> tensors;
};

template <class S>
inline void save_tensor(std::ostream& os, const std::string& name, const Mat<S>& m)
{
	detail::write_pod(os, static_cast<uint32_t>(name.size()));
	os.write(name.data(), static_cast<std::streamsize>(name.size()));
	uint8_t dtype = std::is_same_v<S, float> ? 0 : 1;
	detail::write_pod(os, dtype);
	detail::write_pod(os, static_cast<uint64_t>(m.rows()));
	detail::write_pod(os, static_cast<uint64_t>(m.cols()));
	os.write(reinterpret_cast<const char*>(m.data()),
					 static_cast<std::streamsize>(sizeof(S) * size_t(m.size())));
}

template <class S>
inline void save_checkpoint(const std::string& path, const std::string& config,
														const std::vector<std::pair<std::string, const Mat<S>*>>& tensors)
{
	std::string tmp = path + ".tmp";
	{
		std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
		if (!os) { throw std::runtime_error("checkpoint: cannot open " + tmp); }
		os.write(detail::kCheckpointMagic, 8);
		detail::write_pod(os, static_cast<uint64_t>(config.size()));
		os.write(config.data(), static_cast<std::streamsize>(config.size()));
		detail::write_pod(os, static_cast<uint64_t>(tensors.size()));
		for (const auto& [name, m] : tensors) { save_tensor(os, name, *m); }
		if (!os) { throw std::runtime_error("checkpoint: write failed for " + tmp); }
	}
	std::remove(path.c_str());
	if (std::rename(tmp.c_str(), path.c_str()) != 0)
	{
		throw std::runtime_error("checkpoint: rename failed for " + path);
	}
}

// Saves parameter values plus Adam moments (suffixed .adam_m / .adam_v) so a
// reloaded run continues bit-for-bit.
template <class S>
inline void save_params(const std::string& path, const std::string& config, const ParamSet<S>& ps,
												bool with_optimizer_state = true)
{
	std::vector<std::pair<std::string, const Mat<S>*>> tensors;
	for (const auto* p : ps)
	{
		tensors.emplace_back(p->name, &p->value);
		if (with_optimizer_state)
		{
			tensors.emplace_back(p->name + ".adam_m", &p->adam_m);
			tensors.emplace_back(p->name + ".adam_v", &p->adam_v);
		}
	}
	save_checkpoint<S>(path, config, tensors);
}

template <class S>
inline NamedTensors<S> load_checkpoint(const std::string& path)
{
	std::ifstream is(path, std::ios::binary);
	if (!is) { throw std::runtime_error("checkpoint: cannot open " + path); }
	char magic[8];
	is.read(magic, 8);
	if (!is || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
	{
		throw std::runtime_error("checkpoint: bad magic in " + path);
	}
	NamedTensors<S> out;
	auto cfg_len = detail::read_pod<uint64_t>(is);
	out.config.resize(cfg_len);
	is.read(out.config.data(), static_cast<std::streamsize>(cfg_len));
	auto count = detail::read_pod<uint64_t>(is);
	for (uint64_t i = 0; i < count; ++i)
	{
		auto name_len = detail::read_pod<uint32_t>(is);
		std::string name(name_len, '\0');
		is.read(name.data(), name_len);
		auto dtype = detail::read_pod<uint8_t>(is);
		uint8_t expected = std::is_same_v<S, float> ? 0 : 1;
		if (dtype != expected) { throw std::runtime_error("checkpoint: dtype mismatch for " + name); }
		auto r = detail::read_pod<uint64_t>(is);
		auto c = detail::read_pod<uint64_t>(is);
		Mat<S> m(static_cast<index_t>(r), static_cast<index_t>(c));
		is.read(reinterpret_cast<char*>(m.data()),
						static_cast<std::streamsize>(sizeof(S) * size_t(m.size())));
		if (!is) { throw std::runtime_error("checkpoint: truncated tensor " + name); }
		out.tensors.emplace(std::move(name), std::move(m));
	}
	return out;
}

template <class S>
inline void load_params(const std::string& path, ParamSet<S>& ps)
{
	NamedTensors<S> loaded = load_checkpoint<S>(path);
	for (auto* p : ps)
	{
		auto it = loaded.tensors.find(p->name);
		if (it == loaded.tensors.end())
		{
			throw std::runtime_error("checkpoint: missing tensor " + p->name);
		}
		MARLAB_CHECK(it->second.rows() == p->value.rows() && it->second.cols() == p->value.cols(),
								 "checkpoint: shape mismatch for " + p->name);
		p->value = it->second;
		auto im = loaded.tensors.find(p->name + ".adam_m");
		auto iv = loaded.tensors.find(p->name + ".adam_v");
		if (im != loaded.tensors.end()) { p->adam_m = im->second; }
		if (iv != loaded.tensors.end()) { p->adam_v = iv->second; }
	}
}

} // namespace marlab
