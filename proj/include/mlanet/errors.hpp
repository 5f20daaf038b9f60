#pragma once

#include <stdexcept>
#include <string>

namespace mlanet {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : Error {
  using Error::Error;
};
struct IndexError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct GeometryError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct TrainingError : Error {
  using Error::Error;
};
struct MdError : Error {
  using Error::Error;
};
struct OracleError : Error {
  using Error::Error;
};

}  // namespace mlanet
