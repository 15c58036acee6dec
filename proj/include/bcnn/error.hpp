#pragma once

#include <stdexcept>
#include <string>

namespace bcnn {

/// Bad user input: shapes, sizes, unknown tags, malformed arguments.
class validation_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Argument outside the supported numerical envelope.
class domain_error : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed or truncated file contents.
class format_error : public std::runtime_error {
public:
    format_error(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// A broken internal invariant; signals a bug rather than bad input.
class internal_error : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Root bracketing ran past the search limit.
class search_exhausted_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class nonfinite_loss_error : public std::runtime_error {
public:
    nonfinite_loss_error(const std::string& what, int epoch, int batch)
        : std::runtime_error(what), epoch_(epoch), batch_(batch) {}

    int epoch() const noexcept { return epoch_; }
    int batch() const noexcept { return batch_; }

private:
    int epoch_;
    int batch_;
};

} // namespace bcnn
