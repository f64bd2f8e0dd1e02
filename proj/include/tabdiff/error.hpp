#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tabdiff {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TraceError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values found during optimization or training.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t layer = 0) : Error(what), layer_(layer) {}
  std::size_t layer() const { return layer_; }

 private:
  std::size_t layer_;
};

class SamplingError : public Error {
 public:
  SamplingError(const std::string& what, std::size_t step) : Error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class DataError : public Error {
 public:
  using Error::Error;
};

/// Ingestion failure; `row` is the 1-based line number in the source file (0 if not applicable).
class IngestError : public Error {
 public:
  IngestError(const std::string& what, std::size_t row = 0) : Error(what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class SpecError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class DesignError : public Error {
 public:
  using Error::Error;
};

}  // namespace tabdiff
