// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace lmslice {

// Base class for every error raised by the library. Modules derive their own
// typed errors from it so callers can catch either broadly or precisely.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lmslice
