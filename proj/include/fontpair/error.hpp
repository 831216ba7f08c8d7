#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace fontpair {

// Domain error carrying a stable machine-parseable code such as
// "raster.MissingGlyph" or "pairgen.InsufficientFonts". The CLI prints
// "error <code>: <message>" on one line and exits 1.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const { return code_; }

private:
    std::string code_;
};

[[noreturn]] inline void fail(std::string code, const std::string& message) {
    throw Error(std::move(code), message);
}

} // namespace fontpair
