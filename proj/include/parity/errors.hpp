#pragma once

#include <stdexcept>
#include <string>

namespace parity {

//! Input problems: malformed files, bad schemas, inconsistent labels.
//! The CLI maps these to exit code 2.
class data_error : public std::runtime_error {
public:
    explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

//! Statistical procedure failures: zero kernel mass, degenerate fits,
//! unsolvable systems. The CLI maps these to exit code 3.
class stat_error : public std::runtime_error {
public:
    explicit stat_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace parity
