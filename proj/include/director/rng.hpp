#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "director/tensor.hpp"

namespace director {

// Derives independent stream seeds from a master seed (splitmix64).
uint64_t derive_seed(uint64_t seed, uint64_t stream);

// Seeded random stream. Each consumer owns its own Rng so that sampling
// order stays reproducible regardless of what other components do.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t bits() { return gen_(); }
  int64_t uniform_int(int64_t n);  // [0, n)
  float uniform() { return std::uniform_real_distribution<float>(0.f, 1.f)(gen_); }
  float normal() { return std::normal_distribution<float>(0.f, 1.f)(gen_); }

  Tensor normal_tensor(Shape shape, float mean = 0.f, float std = 1.f);
  Tensor truncated_normal_tensor(Shape shape, float std);  // resample beyond 2 std

  // Index sampled from an unnormalized weight row.
  int categorical(const float* probs, int n);

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 gen_;
};

}  // namespace director
