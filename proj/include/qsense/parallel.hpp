// Copyright 2026 The qsense Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at

//     https://www.apache.org/licenses/LICENSE-2.0

// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>

namespace qsense {

/// Worker count: QSENSE_THREADS when set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
int worker_count();

/// Calls fn(i) for i in [0, n) on up to worker_count() threads. Each index
/// runs exactly once; the first exception thrown is rethrown after all
/// workers join. Calls made from inside a worker run serially.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace qsense
