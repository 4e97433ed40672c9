#pragma once

#include <stdexcept>
#include <string>

namespace ave {

/// A contract of the library was broken at run time (stepping a finished
/// episode, a reward that does not telescope, a corrupted replay sample).
/// The CLI maps it to a distinct nonzero exit code.
class InvariantViolation : public std::logic_error {
public:
    explicit InvariantViolation(const std::string& what) : std::logic_error(what) {}
};

inline void ensure(bool condition, const std::string& what)
{
    if (!condition) throw InvariantViolation(what);
}

} // namespace ave
