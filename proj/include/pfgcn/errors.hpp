#pragma once

#include <stdexcept>
#include <string>

namespace pfgcn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class DomainError : public Error { public: using Error::Error; };
class IndexError : public Error { public: using Error::Error; };
class ContractError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class DataError : public Error { public: using Error::Error; };
class ParseError : public DataError { public: using DataError::DataError; };
class SchemaError : public DataError { public: using DataError::DataError; };

/// A non-finite value appeared during a computation.
class NumericError : public Error { public: using Error::Error; };

}  // namespace pfgcn
