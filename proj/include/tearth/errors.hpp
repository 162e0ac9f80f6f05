#pragma once

#include <stdexcept>
#include <string>

namespace tearth {

// Base of every library error. Subclasses name the failure category so the
// CLI can map them onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class DomainError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class SchemaError : public Error { public: using Error::Error; };
class RegistryError : public Error { public: using Error::Error; };
class ContractError : public Error { public: using Error::Error; };
class LoadError : public Error { public: using Error::Error; };
class ProtocolError : public Error { public: using Error::Error; };
class NumericError : public Error { public: using Error::Error; };

} // namespace tearth
