#pragma once

#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <variant>
#include <vector>

#include "mflab/errors.hpp"

namespace mflab {

using CsvCell = std::variant<double, long long, int, bool, std::string>;

/// Deterministic CSV emitter: doubles are printed with %.17g so identical
/// runs produce identical bytes. Output is buffered and written on close;
/// .gz output goes through zlib's gzip writer (mtime fixed at zero).
class CsvWriter {
 public:
  CsvWriter(std::string path, bool gzip) : path_(std::move(path)), gzip_(gzip) {}

  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  CsvWriter(CsvWriter&& other) noexcept
      : path_(std::move(other.path_)),
        gzip_(other.gzip_),
        closed_(other.closed_),
        buffer_(std::move(other.buffer_)) {
    other.closed_ = true;
  }

  ~CsvWriter() {
    try {
      close();
    } catch (...) {
    }
  }

  void comment(const std::string& line) {
    buffer_ += "# ";
    buffer_ += line;
    buffer_ += '\n';
  }

  void header(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (i > 0) buffer_ += ',';
      buffer_ += cols[i];
    }
    buffer_ += '\n';
  }

  void row(std::initializer_list<CsvCell> cells) {
    bool first = true;
    for (const auto& cell : cells) {
      if (!first) buffer_ += ',';
      first = false;
      buffer_ += format(cell);
    }
    buffer_ += '\n';
  }

  static std::string format(const CsvCell& cell) {
    char tmp[64];
    if (std::holds_alternative<double>(cell)) {
      std::snprintf(tmp, sizeof tmp, "%.17g", std::get<double>(cell));
      return tmp;
    }
    if (std::holds_alternative<long long>(cell)) {
      std::snprintf(tmp, sizeof tmp, "%lld", std::get<long long>(cell));
      return tmp;
    }
    if (std::holds_alternative<int>(cell)) {
      std::snprintf(tmp, sizeof tmp, "%d", std::get<int>(cell));
      return tmp;
    }
    if (std::holds_alternative<bool>(cell)) return std::get<bool>(cell) ? "true" : "false";
    return std::get<std::string>(cell);
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    const auto parent = std::filesystem::path(path_).parent_path();
    if (!parent.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(parent, ec);
    }
    if (gzip_) {
      gzFile gz = gzopen(path_.c_str(), "wb");
      if (gz == nullptr) throw ConfigError("cannot open output file " + path_);
      if (!buffer_.empty() &&
          gzwrite(gz, buffer_.data(), static_cast<unsigned>(buffer_.size())) <= 0) {
        gzclose(gz);
        throw ConfigError("failed to write " + path_);
      }
      gzclose(gz);
    } else {
      std::ofstream out(path_, std::ios::binary);
      if (!out) throw ConfigError("cannot open output file " + path_);
      out.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
      if (!out) throw ConfigError("failed to write " + path_);
    }
  }

 private:
  std::string path_;
  bool gzip_;
  bool closed_ = false;
  std::string buffer_;
};

}  // namespace mflab
