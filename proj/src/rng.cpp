#include "director/rng.hpp"

#include <sstream>

namespace director {

uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

int64_t Rng::uniform_int(int64_t n) {
  return std::uniform_int_distribution<int64_t>(0, n - 1)(gen_);
}

Tensor Rng::normal_tensor(Shape shape, float mean, float std) {
  Tensor t(std::move(shape));
  std::normal_distribution<float> dist(mean, std);
  for (int64_t i = 0; i < t.numel(); ++i) t.data_mut()[i] = dist(gen_);
  return t;
}

Tensor Rng::truncated_normal_tensor(Shape shape, float std) {
  Tensor t(std::move(shape));
  std::normal_distribution<float> dist(0.f, std);
  for (int64_t i = 0; i < t.numel(); ++i) {
    float v = dist(gen_);
    while (std::abs(v) > 2.f * std) v = dist(gen_);
    t.data_mut()[i] = v;
  }
  return t;
}

int Rng::categorical(const float* probs, int n) {
  double total = 0;
  for (int i = 0; i < n; ++i) total += probs[i];
  double u = std::uniform_real_distribution<double>(0.0, total)(gen_);
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return n - 1;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << gen_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> gen_;
}

}  // namespace director
