// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>

namespace matforge {

/// Worker count: min(hardware threads, MATFORGE_THREADS when set). Always >= 1.
int thread_count();

/// Runs body(begin, end) over fixed-size blocks of [0, n). Block boundaries
/// depend only on n, never on the worker count, so any per-block partial
/// results are identical across thread configurations. Blocks may touch only
/// their own output range.
void parallel_for_blocks(int64_t n, int64_t block_size,
                         const std::function<void(int64_t, int64_t)>& body);

/// Convenience wrapper: one block per row index chunk of 1.
void parallel_for_rows(int64_t rows, const std::function<void(int64_t)>& body);

}  // namespace matforge
