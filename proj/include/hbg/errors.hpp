#pragma once

#include <stdexcept>
#include <string>

namespace hbg {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParameterError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct UnsupportedFormatError : Error { using Error::Error; };
struct ConsistencyError : Error { using Error::Error; };
struct IndexError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct InfeasibleError : Error { using Error::Error; };
struct UnsupportedModeError : Error { using Error::Error; };
struct InvariantError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct CapacityError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };

}  // namespace hbg
