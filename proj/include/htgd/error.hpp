#ifndef HTGD_ERROR_HPP
#define HTGD_ERROR_HPP

#include <stdexcept>
#include <string>

namespace htgd {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error
{
public:
    using Error::Error;
};

/// A computation produced a non-finite or otherwise unusable value.
class NumericalError : public Error
{
public:
    using Error::Error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public Error
{
public:
    using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message)
{
    if (!condition)
        throw InvalidArgument(message);
}

} // namespace detail

} // namespace htgd

#endif // HTGD_ERROR_HPP
