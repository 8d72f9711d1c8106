#pragma once

#include <stdexcept>
#include <string>

namespace nastl {

enum class ErrorKind {
    invalid_argument,
    format,
    validation,
    completeness,
    not_found,
    io,
    numeric,
    config_mismatch,
    checksum,
    contract,
    domain,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the core carries a kind so the C boundary can map
// it to a status code without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) {
        throw Error(kind, what);
    }
}

}  // namespace nastl
