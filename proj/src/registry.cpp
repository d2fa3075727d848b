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

#include "csetbench/registry.hpp"

#include <array>
#include <stdexcept>
#include <string>

#include "csetbench/ticket_bst.hpp"

namespace csetbench {
namespace {
constexpr std::array<std::string_view, 2> kNames = {"lf-bst", "bst-tk"};
}  // namespace

std::span<const std::string_view> registered_sets() noexcept { return kNames; }

std::unique_ptr<ConcurrentSet> make_set(std::string_view name, const SetOptions& options) {
  if (name == "lf-bst") return std::make_unique<LockFreeBst>(options);
  if (name == "bst-tk") return std::make_unique<TicketBst>(options);
  throw std::invalid_argument("unknown data structure '" + std::string(name) + "'");
}

}  // namespace csetbench
