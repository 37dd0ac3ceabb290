#ifndef NIGRECON_CLI_HPP_
#define NIGRECON_CLI_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "nigrecon/engine.hpp"
#include "nigrecon/mixtures.hpp"
#include "nigrecon/posterior.hpp"
#include "nigrecon/validate.hpp"

namespace nigrecon::cli {

struct KeyInfo {
  const char* name;
  const char* fallback;
  const char* help;
};

// Every configuration key with its default and description.
const std::vector<KeyInfo>& config_keys();

// Flat key=value configuration.  Input paths are resolved against the
// directory of the config file, output paths against output_dir.
class RunConfig {
 public:
  RunConfig();

  // `#` starts a comment; blank lines are ignored.  Unknown keys and
  // malformed lines throw InputError naming the line.
  void load_file(const std::string& path);
  void load_text(const std::string& text, const std::string& source);
  // "key=value"
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  std::string str(const std::string& key) const;
  double real(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;

  std::string input_path(const std::string& key) const;
  std::string output_path(const std::string& key) const;

  // Throws std::invalid_argument if no seed has been given.
  std::uint64_t seed() const;
  unsigned threads() const;
  // FNV-1a over the sorted effective settings, excluding threads.
  // FNV-1a of the sorted key=value text, excluding threads and output_dir;
  // outputs must not depend on either.
  std::uint64_t hash() const;

  engine::EngineConfig engine() const;
  mixtures::EMConfig em() const;
  posterior::GridSpec grid() const;
  icecore::IceHyper hyper() const;
  validate::PipelineConfig pipeline() const;

 private:
  std::map<std::string, std::string> values_;
  std::string base_dir_ = ".";
};

// Each stage reads its inputs, writes its outputs through `.partial` files
// and logs progress to `log`.  Errors propagate as exceptions.
void cmd_fit_mix(const RunConfig& cfg, std::ostream& log);
void cmd_run(const RunConfig& cfg, std::ostream& log);
void cmd_interp(const RunConfig& cfg, std::ostream& log);
void cmd_icecore(const RunConfig& cfg, std::ostream& log);
void cmd_validate(const RunConfig& cfg, std::ostream& log);
// fit-mix, run, interp in sequence.
void cmd_all(const RunConfig& cfg, std::ostream& log);

struct FixtureSpec {
  std::size_t layers = 115;
  std::size_t dims = 3;
  std::size_t samples = 300;  // MDP samples per layer
  std::size_t rows = 500;     // chronology draws
  double span_ka = 14.0;
  double eta = 2.66;
  double phi = 15.33;
};

// Synthetic core: a latent random-walk path under IG2(eta, phi)
// volatility, two-mode MDP sample clouds around it, and jittered monotone
// chronologies.  Writes mdp_samples.csv, chronologies.csv and truth.csv.
void make_fixture(const std::string& dir, const FixtureSpec& spec, std::uint64_t seed);

}  // namespace nigrecon::cli

#endif  // NIGRECON_CLI_HPP_
