// Copyright 2026 The Shapscan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <stdexcept>
#include <string>

namespace shapscan {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A scalar parameter is outside its allowed range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// The requested computation exceeds a configured size or evaluation budget.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// The model failed to produce predictions.
class PredictorError : public Error {
 public:
  using Error::Error;
};

/// The external model process violated the JSON-lines protocol.
class ProtocolError : public PredictorError {
 public:
  using PredictorError::PredictorError;
};

/// An image could not be decoded.
class ImageError : public Error {
 public:
  using Error::Error;
};

}  // namespace shapscan
