#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace aum {

// Invalid arguments are reported with std::invalid_argument throughout; the
// types below cover the failure kinds that callers may want to tell apart.

/// Malformed input file. `line()` is 1-based; 0 when no line applies.
class parse_error : public std::runtime_error {
public:
    parse_error(const std::string& what, std::size_t line)
        : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

    /// Same error with `where` (usually a path) prefixed to the message.
    parse_error located(const std::string& where) const { return parse_error(where + ": " + what(), line_, 0); }

private:
    parse_error(const std::string& message, std::size_t line, int) : std::runtime_error(message), line_(line) {}

    std::size_t line_;
};

/// A logit log violates the one-record-per-(epoch, sample) contract.
class corrupt_log_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rank correlation requested on an input with zero rank variance.
class undefined_correlation : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Training produced a non-finite loss.
class diverged_error : public std::runtime_error {
public:
    diverged_error(int epoch, double learning_rate)
        : std::runtime_error("training diverged (non-finite loss) at epoch " + std::to_string(epoch) +
                             " with learning rate " + std::to_string(learning_rate)),
          epoch_(epoch),
          learning_rate_(learning_rate) {}

    int epoch() const noexcept { return epoch_; }
    double learning_rate() const noexcept { return learning_rate_; }

private:
    int epoch_;
    double learning_rate_;
};

}  // namespace aum
