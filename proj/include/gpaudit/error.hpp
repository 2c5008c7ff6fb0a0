#pragma once

#include <stdexcept>
#include <string>

namespace gpaudit {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void check(bool ok, const std::string& msg) {
  if (!ok) throw Error(msg);
}

}  // namespace gpaudit
