/*
 * Copyright 2026 The DNC Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DNC_ERRORS_HPP
#define DNC_ERRORS_HPP

#include <sstream>
#include <stdexcept>
#include <string>

namespace dnc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Array or matrix dimensions disagree with the contract of an operation.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Non-finite parameter, input or intermediate value.
class NumericError : public Error {
public:
  using Error::Error;
};

/// A cache or mask set does not belong to the network it is used with.
class ConsistencyError : public Error {
public:
  using Error::Error;
};

/// Argument outside its admissible range (probabilities, counts, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Gram matrix could not be factorized even after jitter escalation.
class NotPsdError : public Error {
public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergedError : public Error {
public:
  DivergedError(int epoch, double learning_rate)
      : Error("training diverged at epoch " + std::to_string(epoch) +
              " (learning rate " + compact(learning_rate) + ")"),
        epoch_(epoch), learning_rate_(learning_rate) {}

  int epoch() const { return epoch_; }
  double learning_rate() const { return learning_rate_; }

private:
  static std::string compact(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  }

  int epoch_;
  double learning_rate_;
};

/// Malformed input file. Carries the file and 1-based line when known.
class DataError : public Error {
public:
  DataError(const std::string& msg, std::string file = {}, long line = 0)
      : Error(format(msg, file, line)), file_(std::move(file)), line_(line) {}

  const std::string& file() const { return file_; }
  long line() const { return line_; }

private:
  static std::string format(const std::string& msg, const std::string& file, long line) {
    std::string out;
    if (!file.empty()) out += file;
    if (line > 0) out += (out.empty() ? "line " : ":") + std::to_string(line);
    if (!out.empty()) out += ": ";
    return out + msg;
  }

  std::string file_;
  long line_;
};

/// Invalid run configuration (unknown keys, out-of-range settings).
class ConfigError : public Error {
public:
  using Error::Error;
};

}  // namespace dnc

#endif  // DNC_ERRORS_HPP
