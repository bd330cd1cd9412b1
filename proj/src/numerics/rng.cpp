#include "bcl/numerics/rng.hpp"

#include <cmath>
#include <numbers>

namespace bcl {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_key(std::uint64_t seed, Stream label, std::uint64_t sub) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ (static_cast<std::uint64_t>(label) + 1) * 0xd1b54a32d192ed03ULL);
  h = splitmix64(h ^ sub);
  return h;
}

}  // namespace

std::string_view stream_name(Stream s) noexcept {
  switch (s) {
    case Stream::init: return "init";
    case Stream::negatives: return "negatives";
    case Stream::grouping: return "grouping";
    case Stream::augmentation: return "augmentation";
    case Stream::clustering: return "clustering";
    case Stream::datagen: return "datagen";
    case Stream::batching: return "batching";
    case Stream::dropout: return "dropout";
  }
  return "unknown";
}

RngStream::RngStream(std::uint64_t seed, Stream label, std::uint64_t substream)
    : seed_(seed), label_(label), substream_(substream),
      engine_(mix_key(seed, label, substream)) {}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_open() {
  // (k + 0.5) / 2^53 keeps both endpoints out.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) {
  // Rejection on the top of the range keeps the draw exactly uniform.
  const std::uint64_t limit = n * (~std::uint64_t{0} / n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal() {
  const double u1 = uniform_open();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::fork(std::uint64_t index) const {
  return RngStream(seed_, label_, splitmix64(substream_ * 0x9e3779b97f4a7c15ULL + index + 1));
}

}  // namespace bcl
