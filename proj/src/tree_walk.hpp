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

// Quiescent walk shared by the external trees.

#include <string>
#include <vector>

#include "csetbench/cset.hpp"

namespace csetbench::detail {

struct NodeView {
  Key key;
  const void* left;
  const void* right;
  const char* defect;  // non-null when the node itself is in a bad state
};

/// Pre-order walk, right child pushed first, so leaves come out in key order.
/// Checks external shape, BST bounds (left < router <= right) and strictly
/// increasing leaves. Optionally collects user keys.
template <class ViewFn>
StructureAudit walk_external_tree(const void* root, ViewFn&& view, std::vector<Key>* keys_out) {
  using Bound = unsigned __int128;
  struct Frame {
    const void* node;
    Bound lo;  // inclusive
    Bound hi;  // exclusive
  };
  StructureAudit a;
  auto fail = [&a](std::string msg) {
    if (a.ok) {
      a.ok = false;
      a.problem = std::move(msg);
    }
  };

  std::vector<Frame> stack{{root, 0, static_cast<Bound>(~Key{0}) + 1}};
  bool have_prev = false;
  Key prev = 0;
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    const NodeView v = view(f.node);
    if (v.defect != nullptr) fail(std::string(v.defect) + " at key " + std::to_string(v.key));
    if (v.key < f.lo || v.key >= f.hi) fail("BST order violated at key " + std::to_string(v.key));

    if (v.left == nullptr && v.right == nullptr) {
      ++a.leaf_nodes;
      if (have_prev && v.key <= prev) fail("leaf keys not strictly increasing at " + std::to_string(v.key));
      have_prev = true;
      prev = v.key;
      if (v.key <= kMaxUserKey) {
        ++a.key_count;
        a.key_sum += v.key;
        if (keys_out != nullptr) keys_out->push_back(v.key);
      }
      continue;
    }
    ++a.internal_nodes;
    if (v.left == nullptr || v.right == nullptr) {
      fail("internal node with a single child at key " + std::to_string(v.key));
      continue;
    }
    stack.push_back({v.right, v.key, f.hi});
    stack.push_back({v.left, f.lo, v.key});
  }
  if (a.ok && a.leaf_nodes != a.internal_nodes + 1) fail("leaf count != internal count + 1");
  return a;
}

}  // namespace csetbench::detail
