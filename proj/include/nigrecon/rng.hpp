#ifndef NIGRECON_RNG_HPP_
#define NIGRECON_RNG_HPP_

#include <cstdint>
#include <random>

namespace nigrecon {

// Seeded random stream. Every sampler in the library takes one of these by
// reference; a stream must not be shared between threads.
class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for job `index` of a run seeded with `master`.
  static Rng substream(std::uint64_t master, std::uint64_t index);

  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  // Gamma with the given shape and rate (mean shape / rate).
  double gamma(double shape, double rate);
  double exponential(double rate);
  std::uint64_t poisson(double rate);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  engine_type& engine() { return engine_; }

 private:
  engine_type engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// splitmix64 finalizer; used to derive substream seeds.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace nigrecon

#endif  // NIGRECON_RNG_HPP_
