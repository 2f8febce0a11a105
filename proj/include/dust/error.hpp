#pragma once

#include <stdexcept>
#include <string>

namespace dust {

// All recoverable failures (bad shapes, corrupt files, infeasible targets)
// are reported through this type.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

} // namespace dust
