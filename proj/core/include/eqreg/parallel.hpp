// Copyright 2026 The eqreg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace eqreg {

/// Number of worker threads used to split batch-axis work. 1 (the default) is the
/// deterministic single-thread mode. Results never depend on this value: per-sample
/// partials are always combined in batch order.
void set_num_threads(int threads);
int num_threads();

/// Reads EQREG_THREADS; absent or unparsable leaves the single-thread default.
void configure_threads_from_env();

/// Calls fn(b) for every b in [0, count), possibly concurrently across samples.
void for_each_sample(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace eqreg
