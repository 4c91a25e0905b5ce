/*
 * Copyright 2026 The mdsp Authors
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
#pragma once

#include <cstddef>
#include <functional>

namespace mdsp {

/// Worker count used by parallel_for. 0 restores the default (hardware
/// concurrency).
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs body(0..n-1) on the worker pool. Calls made from inside a worker run
/// inline, so nesting never oversubscribes. Every index writes only its own
/// output slot, which keeps results independent of the thread count. The
/// first exception thrown by a body is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace mdsp
