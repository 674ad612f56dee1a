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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "card/card.hpp"

namespace card::testing {

inline Eigen::MatrixXd RandomMatrix(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                                    double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.Normal();
  }
  return m;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("card_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string Slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small, fast model configuration for tests.
inline ModelConfig TinyConfig() {
  ModelConfig c;
  c.d = 8;
  c.encoder_layers = 1;
  c.encoder_heads = 2;
  c.denoiser_hidden = 16;
  c.tau_S = 10;
  c.batch_size = 16;
  c.epochs = 2;
  c.eval_every = 1;
  c.neg_samples = 10;
  c.K = 5;
  return c;
}

inline std::vector<InteractionSequence> SmallCorpus(int users, int items, std::uint64_t seed,
                                                    int min_len = 5, int max_len = 9) {
  Rng rng = SeededRng(seed, "test/corpus");
  std::vector<InteractionSequence> out;
  for (int u = 0; u < users; ++u) {
    InteractionSequence s;
    s.user_id = "u" + std::to_string(u);
    const auto len = rng.UniformInt(min_len, max_len);
    for (std::int64_t i = 0; i < len; ++i) {
      s.items.push_back(static_cast<ItemIndex>(rng.UniformInt(0, items - 1)));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace card::testing
