#pragma once

#include <stdexcept>
#include <string>

namespace sardist {

/// Root of the library's exception hierarchy. Every error carries a kind so
/// the command-line front end can map it to an exit status.
class Error : public std::runtime_error {
 public:
  enum class Kind { validation, format, storage, bounds, domain, shape, contract, numeric };

  Error(Kind kind, const std::string& what);
  Kind kind() const noexcept { return kind_; }

  /// True for failures caused by the filesystem rather than by the data.
  bool is_io() const noexcept { return kind_ == Kind::storage; }

 private:
  Kind kind_;
};

#define SARDIST_DECLARE_ERROR(Name, K)                      \
  class Name : public Error {                               \
   public:                                                  \
    explicit Name(const std::string& what) : Error(K, what) {} \
  };

SARDIST_DECLARE_ERROR(ValidationError, Kind::validation)
SARDIST_DECLARE_ERROR(FormatError, Kind::format)
SARDIST_DECLARE_ERROR(StorageError, Kind::storage)
SARDIST_DECLARE_ERROR(BoundsError, Kind::bounds)
SARDIST_DECLARE_ERROR(DomainError, Kind::domain)
SARDIST_DECLARE_ERROR(ShapeError, Kind::shape)
SARDIST_DECLARE_ERROR(ContractError, Kind::contract)
SARDIST_DECLARE_ERROR(NumericError, Kind::numeric)

#undef SARDIST_DECLARE_ERROR

const char* to_string(Error::Kind kind);

}  // namespace sardist
