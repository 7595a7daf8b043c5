#ifndef VLOGDESK_ERRORS_HPP
#define VLOGDESK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace vlogdesk {

// Error kinds map 1:1 to CLI exit codes.
enum class ErrKind : int {
    Usage = 1,    // bad flags, bad config keys
    Data = 2,     // malformed files, missing inputs, shape/format problems
    Numeric = 3,  // non-finite values, divergence
};

class Error : public std::runtime_error {
public:
    Error(ErrKind kind, std::string msg)
        : std::runtime_error(std::move(msg)), kind_(kind) {}

    ErrKind kind() const { return kind_; }
    int exit_code() const { return static_cast<int>(kind_); }

private:
    ErrKind kind_;
};

[[noreturn]] inline void fail_usage(const std::string& msg) { throw Error(ErrKind::Usage, msg); }
[[noreturn]] inline void fail_data(const std::string& msg) { throw Error(ErrKind::Data, msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { throw Error(ErrKind::Numeric, msg); }

}  // namespace vlogdesk

#endif
