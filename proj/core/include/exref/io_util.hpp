#ifndef EXREF_IO_UTIL_HPP_
#define EXREF_IO_UTIL_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace exref {

std::string read_file(const std::string& path);
// Writes atomically enough for our purposes: truncate + write + check.
void write_file(const std::string& path, std::string_view contents);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// Shortest text that round-trips a 32-bit float ("%.9g").
std::string format_float(float v);
// Round-trippable 64-bit rendering ("%.17g").
std::string format_double(double v);

std::uint64_t fnv1a(std::string_view s);

}  // namespace exref

#endif  // EXREF_IO_UTIL_HPP_
