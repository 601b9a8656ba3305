#pragma once

#include <stdexcept>
#include <string>

namespace dpdlab {

// Malformed or inconsistent configuration / checkpoint content.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite loss, singular least-squares system and similar.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dpdlab
