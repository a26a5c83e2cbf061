#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace apeg::csv {

// Quotes a field when it holds a comma, quote, CR or LF; quotes are doubled.
std::string escape(std::string_view field);

// Shortest round-trip decimal form, so equal values give equal bytes.
std::string number(double v);

// RFC 4180 writer: CRLF line ends, header row first, fixed column count.
class Writer {
 public:
  Writer(const std::filesystem::path& path, std::vector<std::string> header);

  void row(const std::vector<std::string>& fields);
  std::size_t rows() const { return rows_; }
  void close();

 private:
  void write_line(const std::vector<std::string>& fields);

  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
  std::size_t rows_ = 0;
};

// Parses RFC 4180 text (used by tests and the stream reader).
std::vector<std::vector<std::string>> parse(std::string_view text);
std::vector<std::vector<std::string>> read_file(const std::filesystem::path& path);

}  // namespace apeg::csv
