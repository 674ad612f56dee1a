/*
 * Copyright 2026 The CARD Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace card {

inline std::uint64_t Fnv1a64(std::string_view text,
                             std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

// Deterministic random stream identified by (seed, label). Handles are cheap
// values; a worker that needs its own stream derives one by label instead of
// sharing an engine.
class Rng {
 public:
  using Engine = std::mt19937_64;

  Rng(std::uint64_t seed, std::string_view label)
      : seed_(seed), label_(label) {
    const std::uint64_t h = Fnv1a64(label);
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h),
                      static_cast<std::uint32_t>(h >> 32)};
    engine_.seed(seq);
  }

  Rng Derive(std::string_view sublabel) const {
    return Rng(seed_, label_ + "/" + std::string(sublabel));
  }
  Rng Derive(std::uint64_t index) const { return Derive(std::to_string(index)); }

  Engine& engine() { return engine_; }
  std::uint64_t seed() const { return seed_; }
  const std::string& label() const { return label_; }

  std::uint64_t Next() { return engine_(); }
  double Uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double Normal() { return normal_(engine_); }
  // Inclusive bounds.
  std::int64_t UniformInt(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  bool Bernoulli(double p) { return Uniform() < p; }
  double Gamma(double shape) {
    return std::gamma_distribution<double>(shape, 1.0)(engine_);
  }
  double Beta(double a, double b) {
    const double x = Gamma(a);
    const double y = Gamma(b);
    return x / (x + y);
  }

 private:
  std::uint64_t seed_;
  std::string label_;
  Engine engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline Rng SeededRng(std::uint64_t seed, std::string_view stream_label) {
  return Rng(seed, stream_label);
}

}  // namespace card
