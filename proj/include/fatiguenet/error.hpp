#pragma once
#include <stdexcept>
#include <string>

namespace fatiguenet {

enum class ErrorKind {
  InvalidSpec,
  EmptyInput,
  InsufficientData,
  DegenerateChannel,
  DegenerateBatch,
  Alignment,
  InvalidLabel,
  Shape,
  InvalidConfig,
  InvalidFold,
  Divergence,
  NonFinite,
  Io,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace fatiguenet
