#include "sdeis/rng.hpp"

#include <array>

namespace sdeis {

namespace {

std::seed_seq make_seq(std::uint64_t a, std::uint64_t b, std::uint32_t tag)
{
    return std::seed_seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                         static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32), tag};
}

}  // namespace

RngStream::RngStream(std::uint64_t global_seed, std::uint64_t index) : seed_(global_seed), index_(index)
{
    auto seq = make_seq(global_seed, index, 0x5de15u);
    engine_.seed(seq);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt)
{
    auto seq = make_seq(seed, salt, 0xc41du);
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

}  // namespace sdeis
