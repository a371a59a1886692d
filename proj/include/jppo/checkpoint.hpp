#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "jppo/error.hpp"
#include "jppo/qnetwork.hpp"

namespace jppo::agent {

// Layout (little-endian):
//   8 bytes  magic "JPPOQNET"
//   u32      format version (1)
//   u32      scalar width in bytes (4 or 8)
//   u32      number of layer widths n
//   n x u32  layer widths
//   per layer: weights row-major (out x in), then biases
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'J', 'P', 'P', 'O', 'Q', 'N', 'E', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail_ckpt {

template <typename T>
void put(std::ostream& os, T v)
{
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is)
{
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) {
        throw ConfigError("checkpoint truncated");
    }
    return v;
}

} // namespace detail_ckpt

template <typename Scalar>
void write_checkpoint(std::ostream& os, const QNetwork<Scalar>& net)
{
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail_ckpt::put<std::uint32_t>(os, kCheckpointVersion);
    detail_ckpt::put<std::uint32_t>(os, sizeof(Scalar));
    detail_ckpt::put<std::uint32_t>(os, static_cast<std::uint32_t>(net.dims().size()));
    for (int d : net.dims()) {
        detail_ckpt::put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    }
    net.for_each_parameter([&](const Scalar& v) { detail_ckpt::put<Scalar>(os, v); });
}

template <typename Scalar>
QNetwork<Scalar> read_checkpoint(std::istream& is)
{
    char magic[sizeof(kCheckpointMagic)] = {};
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw ConfigError("not a jppo network checkpoint");
    }
    if (detail_ckpt::get<std::uint32_t>(is) != kCheckpointVersion) {
        throw ConfigError("unsupported checkpoint version");
    }
    if (detail_ckpt::get<std::uint32_t>(is) != sizeof(Scalar)) {
        throw ConfigError("checkpoint scalar width does not match");
    }
    const auto n = detail_ckpt::get<std::uint32_t>(is);
    if (n < 2 || n > 64) {
        throw ConfigError("checkpoint has an implausible layer count");
    }
    std::vector<int> dims;
    for (std::uint32_t i = 0; i < n; ++i) {
        dims.push_back(static_cast<int>(detail_ckpt::get<std::uint32_t>(is)));
    }
    QNetwork<Scalar> net(dims);
    net.for_each_parameter([&](Scalar& v) { v = detail_ckpt::get<Scalar>(is); });
    return net;
}

template <typename Scalar>
void save_checkpoint(const std::string& path, const QNetwork<Scalar>& net)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw std::runtime_error("cannot open checkpoint for writing: " + path);
    }
    write_checkpoint(os, net);
    if (!os) {
        throw std::runtime_error("failed writing checkpoint: " + path);
    }
}

template <typename Scalar>
QNetwork<Scalar> load_checkpoint(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw ConfigError("cannot open checkpoint: " + path);
    }
    return read_checkpoint<Scalar>(is);
}

} // namespace jppo::agent
