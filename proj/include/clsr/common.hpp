#pragma once

#include <stdexcept>
#include <string>

namespace clsr {

// Error taxonomy. The CLI maps categories to process exit codes; library code
// throws and never exits.
enum class errc {
    config,       // bad config value, unknown key, missing file referenced by config
    format,       // malformed on-disk payload (bad magic, truncation, duplicate id)
    unsupported,  // well-formed input the implementation does not handle (codec, channels)
    empty,        // structurally valid but zero-length payload
    dimension,    // shape mismatch between tensors or banks
    contract,     // API precondition or internal invariant violated
    numeric,      // non-finite value where finiteness is required
};

class error : public std::runtime_error {
  public:
    error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    errc code() const { return code_; }

  private:
    errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

} // namespace clsr
