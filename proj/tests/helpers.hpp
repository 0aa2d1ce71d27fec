#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "tips/interaction_log.hpp"
#include "tips/params.hpp"
#include "tips/rng.hpp"
#include "tips/tape.hpp"

namespace tips::test {

inline Tensor2 random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0,
                             double hi = 1.0) {
  Tensor2 t(r, c);
  for (double& v : t.values()) v = uniform_real(rng, lo, hi);
  return t;
}

// Worst relative error between reverse-mode gradients and an independent
// central-difference estimate, over every entry of every trainable parameter.
inline double fd_max_rel_error(ParamRegistry& params, const std::function<Var(Tape&)>& loss,
                               double step = 1e-5, double floor = 1e-6) {
  params.zero_grad();
  {
    Tape tape;
    Var l = loss(tape);
    tape.backward(l);
  }
  double worst = 0.0;
  for (auto& [name, p] : params.items()) {
    if (!p.trainable) continue;
    const Tensor2 analytic = p.grad;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + step;
      double up;
      {
        Tape t;
        up = loss(t).scalar();
      }
      p.value[i] = saved - step;
      double down;
      {
        Tape t;
        down = loss(t).scalar();
      }
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
      worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
  }
  return worst;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("tips_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// "u::i::1::t" lines for users with the given item sequences, one day apart.
inline InteractionLog make_log(const std::vector<std::vector<int>>& sequences,
                               Timestamp start = 1'000'000, Timestamp step = 86400) {
  std::vector<RawInteraction> raw;
  for (std::size_t u = 0; u < sequences.size(); ++u) {
    Timestamp t = start + static_cast<Timestamp>(u) * 37;
    for (int item : sequences[u]) {
      raw.push_back({"u" + std::to_string(u), "i" + std::to_string(item), t, raw.size() + 1});
      t += step;
    }
  }
  return InteractionLog::build(raw);
}

}  // namespace tips::test
