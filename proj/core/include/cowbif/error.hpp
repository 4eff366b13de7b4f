/*
 * Copyright 2026 The cowbif Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace cowbif {

// Base of every error raised by the library. Callers that only need a message
// catch this; tests match on the concrete type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed or unsupported file content (NIfTI, checkpoint, manifest).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Tensor or layer shape disagreement.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A phantom tree that does not fit the requested grid.
class GeometryError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Configuration file violations; the message carries the key path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage failed; the message starts with the stage name.
class StageError : public Error {
 public:
  using Error::Error;
};

}  // namespace cowbif
