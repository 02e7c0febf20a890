// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace trident {

/// Bad configuration values or invalid argument combinations. Exit code 1.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed manifests, pair files or records that violate split invariants. Exit code 1.
struct schema_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Missing, truncated or otherwise unreadable files. Exit code 1.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Transcript could not be parsed into the requested number of items.
/// Carries the raw transcript for diagnostics.
struct parse_error : std::runtime_error {
    std::string transcript;
    parse_error(const std::string& msg, std::string raw)
        : std::runtime_error(msg), transcript(std::move(raw)) {}
};

/// Provider failed after exhausting retries.
struct provider_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A required cache entry is absent and the provider is disabled.
struct cache_miss_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical domain violations: zero-norm vectors, non-finite values.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Violation of a documented data-structure invariant.
struct invariant_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Training aborted (non-finite loss, checkpoint mismatch).
struct training_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace trident
