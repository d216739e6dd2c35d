#pragma once

#include <stdexcept>
#include <string>

namespace sctkg {

// Malformed input file. `line` is 1-based; 0 means "not line-addressable".
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string file, int line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const { return file_; }
  int line() const { return line_; }

 private:
  std::string file_;
  int line_;
};

// Dimension mismatch between tensors or against a parameter shape.
class ShapeError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss; names the first offending
// parameter group found (or "loss" when parameters are still finite).
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& group)
      : std::runtime_error("non-finite values in parameter group '" + group + "'"),
        group_(group) {}

  const std::string& group() const { return group_; }

 private:
  std::string group_;
};

}  // namespace sctkg
