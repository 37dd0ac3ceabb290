#include "nigrecon/io.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace nigrecon {

namespace {

// Splits one logical record; quoted fields may span physical lines.
bool next_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
  fields.clear();
  std::string field;
  bool quoted = false;
  bool any = false;
  char ch = 0;
  while (in.get(ch)) {
    any = true;
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field += ch;
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\r') {
      if (in.peek() == '\n') continue;
      break;
    } else if (ch == '\n') {
      break;
    } else {
      field += ch;
    }
  }
  if (!any) return false;
  if (quoted) throw InputError("unterminated quoted field at line " + std::to_string(line));
  fields.push_back(std::move(field));
  return true;
}

bool blank(const std::vector<std::string>& fields) {
  return fields.size() == 1 && fields[0].find_first_not_of(" \t") == std::string::npos;
}

}  // namespace

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == name) return c;
  }
  throw InputError(source + ": missing column '" + std::string(name) + "'");
}

void CsvTable::fail(std::size_t row, const std::string& what) const {
  throw InputError(source + ":" + std::to_string(lines.at(row)) + ": " + what);
}

double CsvTable::number(std::size_t row, std::size_t col) const {
  const std::string& s = rows[row][col];
  double x = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  if (first < last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, x);
  if (res.ec != std::errc() || res.ptr != last) {
    fail(row, "column '" + header[col] + "': not a number: '" + s + "'");
  }
  return x;
}

long long CsvTable::integer(std::size_t row, std::size_t col) const {
  const std::string& s = rows[row][col];
  long long x = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(row, "column '" + header[col] + "': not an integer: '" + s + "'");
  }
  return x;
}

CsvTable read_csv(std::istream& in, const std::string& source) {
  CsvTable t;
  t.source = source;
  std::vector<std::string> fields;
  std::size_t line = 0;
  bool have_header = false;
  for (;;) {
    ++line;
    const std::size_t start = line;
    if (!next_record(in, fields, line)) break;
    if (blank(fields)) continue;
    if (!have_header) {
      if (!fields[0].empty() && fields[0][0] == '#') continue;
      t.header = fields;
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw InputError(source + ":" + std::to_string(start) + ": expected " +
                       std::to_string(t.header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    }
    t.rows.push_back(fields);
    t.lines.push_back(start);
  }
  if (!have_header) throw InputError(source + ": empty file (no header)");
  return t;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return read_csv(in, path);
}

std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string csv_line(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (k) out += ',';
    const std::string& f = fields[k];
    if (f.find_first_of(",\"\r\n") == std::string::npos) {
      out += f;
      continue;
    }
    out += '"';
    for (char ch : f) {
      if (ch == '"') out += '"';
      out += ch;
    }
    out += '"';
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string provenance_comment(std::uint64_t config_hash, std::uint64_t seed) {
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash));
  return "# nigrecon " + std::string(kVersion) + " config=" + hash +
         " seed=" + std::to_string(seed);
}

void write_file_atomically(const std::string& path,
                           const std::function<void(std::ostream&)>& body) {
  const std::string partial = path + ".partial";
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + partial);
    body(out);
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + partial);
  }
  std::filesystem::rename(partial, path);
}

}  // namespace nigrecon
