/*
 * Copyright 2026 The csetbench Authors
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

#include <memory>
#include <span>
#include <string_view>

#include "csetbench/cset.hpp"
#include "csetbench/lockfree_bst.hpp"

namespace csetbench {

/// Names accepted by make_set(), in listing order.
std::span<const std::string_view> registered_sets() noexcept;

/// Throws std::invalid_argument for an unknown name.
std::unique_ptr<ConcurrentSet> make_set(std::string_view name, const SetOptions& options = {});

}  // namespace csetbench
