#ifndef NIGRECON_IO_HPP_
#define NIGRECON_IO_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nigrecon {

inline constexpr std::string_view kVersion = "0.1.0";

// Malformed input file; the message names the source and line.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based source line of each row

  std::size_t column(std::string_view name) const;  // throws InputError
  [[noreturn]] void fail(std::size_t row, const std::string& what) const;
  double number(std::size_t row, std::size_t col) const;
  long long integer(std::size_t row, std::size_t col) const;
};

// RFC-4180 reader: quoted fields, doubled quotes, CRLF.  Lines starting
// with '#' before the header are provenance comments and are skipped, as
// are blank lines.  Every row must have as many fields as the header.
CsvTable read_csv(std::istream& in, const std::string& source);
CsvTable read_csv_file(const std::string& path);

// Shortest text that reads back to the same double.
std::string format_double(double x);

// Joins fields with commas, quoting any that need it.
std::string csv_line(const std::vector<std::string>& fields);

std::uint64_t fnv1a64(std::string_view bytes);

// "# nigrecon <version> config=<hash> seed=<seed>"
std::string provenance_comment(std::uint64_t config_hash, std::uint64_t seed);

// Writes to `path + ".partial"` and renames onto `path` once `body`
// returns.  If `body` throws the partial file is left in place, flushed,
// and the exception propagates.
void write_file_atomically(const std::string& path,
                           const std::function<void(std::ostream&)>& body);

}  // namespace nigrecon

#endif  // NIGRECON_IO_HPP_
