// Copyright (c) 2026 the gaitformer authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gaitformer {

/// Tensor shapes disagree (e.g. inner dimensions of a product).
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// An operation or model was configured with invalid settings.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// An API contract was violated (non-scalar loss, label out of range, ...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Malformed external data: CSV rows, archives, checkpoints.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An attention mask left a query row with no visible key.
struct DegenerateMaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gaitformer
