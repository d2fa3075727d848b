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

#include <atomic>
#include <cstdint>
#include <functional>

#include "csetbench/cset.hpp"
#include "csetbench/reclamation.hpp"

namespace csetbench {

struct SetOptions {
  ReclaimMode reclaim = ReclaimMode::kEpoch;
  /// Fault injection: remove() reports success without unlinking the leaf.
  bool skip_unlink = false;
};

/// Leaf-oriented lock-free BST after Natarajan and Mittal.
///
/// Keys live in leaves; internal nodes route. A delete first FLAGs the edge
/// to its leaf (the linearization point), then TAGs the sibling edge and
/// swings the nearest untagged ancestor edge past the parent. Any thread that
/// trips over a marked edge helps finish the splice before retrying.
///
/// Mark bits sit in the two low bits of each child word so an edge and its
/// marks change with a single CAS.
class LockFreeBst final : public ConcurrentSet {
 public:
  static constexpr Key kInf0 = ~Key{0} - 2;
  static constexpr Key kInf1 = ~Key{0} - 1;
  static constexpr Key kInf2 = ~Key{0};

  /// Keys of the nodes a seek lands on. Copies, so safe to inspect after the
  /// seek's critical section ends.
  struct SeekView {
    Key ancestor;
    Key successor;
    Key parent;
    Key leaf;
  };

  explicit LockFreeBst(SetOptions options = {});
  ~LockFreeBst() override;

  LockFreeBst(const LockFreeBst&) = delete;
  LockFreeBst& operator=(const LockFreeBst&) = delete;

  bool contains(Key k) override;
  bool insert(Key k) override;
  bool remove(Key k) override;

  std::string_view name() const noexcept override { return "lf-bst"; }
  StructureAudit audit() const override;
  std::vector<Key> keys() const override;
  EpochManager& reclaimer() noexcept override { return reclaimer_; }

  SeekView seek(Key k);

  /// Test hook, runs between a successful FLAG and the splice attempt.
  void set_after_flag_hook(std::function<void(Key)> hook) { after_flag_ = std::move(hook); }

 private:
  struct Node;
  struct SeekRecord {
    Node* ancestor;
    Node* successor;
    Node* parent;
    Node* leaf;
  };

  void seek_into(Key k, SeekRecord& rec) const noexcept;
  bool cleanup(Key k, const SeekRecord& rec);
  void retire_spliced(Key k, Node* successor, Node* parent, Node* removed_leaf);

  EpochManager reclaimer_;
  Node* root_;  // R (kInf2)
  Node* s_;     // S (kInf1), left child of R
  std::function<void(Key)> after_flag_;
};

}  // namespace csetbench
