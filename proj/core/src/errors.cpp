#include "sardist/errors.hpp"

namespace sardist {

Error::Error(Kind kind, const std::string& what)
    : std::runtime_error(what), kind_(kind) {}

const char* to_string(Error::Kind kind) {
  switch (kind) {
    case Error::Kind::validation: return "validation error";
    case Error::Kind::format: return "format error";
    case Error::Kind::storage: return "storage error";
    case Error::Kind::bounds: return "bounds error";
    case Error::Kind::domain: return "domain error";
    case Error::Kind::shape: return "shape error";
    case Error::Kind::contract: return "contract error";
    case Error::Kind::numeric: return "numeric error";
  }
  return "error";
}

}  // namespace sardist
