#ifndef EXREF_ERROR_HPP_
#define EXREF_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace exref {

// Malformed or inconsistent user data (exit code 1 at the CLI).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A record-level problem in a line-oriented file.
class FormatError : public DataError {
 public:
  FormatError(std::string path, std::size_t line, const std::string& message)
      : DataError(path + ":" + std::to_string(line) + ": " + message),
        path_(std::move(path)),
        line_(line) {}

  const std::string& path() const { return path_; }
  std::size_t line() const { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

// Explanation text that the controlled grammar rejects. `offset` is a
// character offset into the explanation document.
class ParseError : public DataError {
 public:
  ParseError(std::size_t offset, const std::string& message)
      : DataError(message), offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Numerical failure during optimisation.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace exref

#endif  // EXREF_ERROR_HPP_
