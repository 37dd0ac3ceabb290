#include "nigrecon/rng.hpp"

#include <cmath>

namespace nigrecon {

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::substream(std::uint64_t master, std::uint64_t index) {
  return Rng(mix_seed(mix_seed(master) ^ mix_seed(index + 0x632be59bd9b4e019ULL)));
}

double Rng::uniform() {
  for (;;) {
    double u = std::generate_canonical<double, 53>(engine_);
    if (u > 0.0 && u < 1.0) return u;
  }
}

double Rng::normal() { return normal_(engine_); }

double Rng::gamma(double shape, double rate) {
  std::gamma_distribution<double> g(shape, 1.0);
  return g(engine_) / rate;
}

double Rng::exponential(double rate) { return -std::log(uniform()) / rate; }

std::uint64_t Rng::poisson(double rate) {
  if (rate <= 0.0) return 0;
  std::poisson_distribution<std::uint64_t> p(rate);
  return p(engine_);
}

std::uint64_t Rng::below(std::uint64_t n) {
  std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
  return d(engine_);
}

}  // namespace nigrecon
