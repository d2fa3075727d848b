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

#include "csetbench/lockfree_bst.hpp"

#include <algorithm>
#include <cassert>
#include <vector>

#include "tree_walk.hpp"

namespace csetbench {
namespace {

constexpr std::uintptr_t kFlag = 1;  // edge's leaf is being deleted
constexpr std::uintptr_t kTag = 2;   // edge frozen for a splice
constexpr std::uintptr_t kMarks = kFlag | kTag;

}  // namespace

struct LockFreeBst::Node {
  explicit Node(Key k) : key(k) {}
  Node(Key k, Node* l, Node* r)
      : key(k), left(reinterpret_cast<std::uintptr_t>(l)), right(reinterpret_cast<std::uintptr_t>(r)) {}

  Key key;  // written only before publication
  std::atomic<std::uintptr_t> left{0};
  std::atomic<std::uintptr_t> right{0};

  bool is_leaf() const noexcept { return left.load(std::memory_order_acquire) == 0; }
  std::atomic<std::uintptr_t>& child_toward(Key k) noexcept { return k < key ? left : right; }
};

namespace {

template <class N>
N* addr(std::uintptr_t edge) noexcept {
  return reinterpret_cast<N*>(edge & ~kMarks);
}

template <class N>
std::uintptr_t word(N* n) noexcept {
  return reinterpret_cast<std::uintptr_t>(n);
}

}  // namespace

LockFreeBst::LockFreeBst(SetOptions options) : reclaimer_(options.reclaim) {
  set_skip_unlink(options.skip_unlink);
  static_assert(alignof(Node) >= 4, "mark bits need two free low bits");
  s_ = new Node(kInf1, new Node(kInf0), new Node(kInf1));
  root_ = new Node(kInf2, s_, new Node(kInf2));
  reclaimer_.note_alloc(5);
}

LockFreeBst::~LockFreeBst() {
  std::vector<Node*> stack{root_};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (Node* l = addr<Node>(n->left.load(std::memory_order_relaxed))) stack.push_back(l);
    if (Node* r = addr<Node>(n->right.load(std::memory_order_relaxed))) stack.push_back(r);
    delete n;
  }
}

void LockFreeBst::seek_into(Key k, SeekRecord& rec) const noexcept {
  rec.ancestor = root_;
  rec.successor = s_;
  rec.parent = s_;
  std::uintptr_t parent_field = s_->left.load(std::memory_order_acquire);
  rec.leaf = addr<Node>(parent_field);

  std::uintptr_t current_field = rec.leaf->left.load(std::memory_order_acquire);
  Node* current = addr<Node>(current_field);
  while (current != nullptr) {
    if (!(parent_field & kTag)) {
      rec.ancestor = rec.parent;
      rec.successor = rec.leaf;
    }
    rec.parent = rec.leaf;
    rec.leaf = current;
    parent_field = current_field;
    current_field = current->child_toward(k).load(std::memory_order_acquire);
    current = addr<Node>(current_field);
  }
}

LockFreeBst::SeekView LockFreeBst::seek(Key k) {
  EpochManager::Guard g(reclaimer_);
  SeekRecord rec;
  seek_into(k, rec);
  return {rec.ancestor->key, rec.successor->key, rec.parent->key, rec.leaf->key};
}

bool LockFreeBst::contains(Key k) {
  assert(k >= 1 && k <= kMaxUserKey);
  EpochManager::Guard g(reclaimer_);
  SeekRecord rec;
  seek_into(k, rec);
  return rec.leaf->key == k;
}

bool LockFreeBst::insert(Key k) {
  assert(k >= 1 && k <= kMaxUserKey);
  EpochManager::Guard g(reclaimer_);
  Node* new_leaf = nullptr;
  Node* new_internal = nullptr;
  SeekRecord rec;
  while (true) {
    seek_into(k, rec);
    Node* leaf = rec.leaf;
    if (leaf->key == k) {
      delete new_leaf;  // never published
      delete new_internal;
      return false;
    }
    if (new_leaf == nullptr) {
      new_leaf = new Node(k);
      new_internal = new Node(0);
    }
    new_internal->key = std::max(k, leaf->key);
    const bool new_on_left = k < leaf->key;
    new_internal->left.store(word(new_on_left ? new_leaf : leaf), std::memory_order_relaxed);
    new_internal->right.store(word(new_on_left ? leaf : new_leaf), std::memory_order_relaxed);

    auto& edge = rec.parent->child_toward(k);
    std::uintptr_t expected = word(leaf);
    if (edge.compare_exchange_strong(expected, word(new_internal), std::memory_order_acq_rel)) {
      reclaimer_.note_alloc(2);
      return true;
    }
    // the edge still leads to our leaf but is marked: finish that delete first
    if (addr<Node>(expected) == leaf && (expected & kMarks)) cleanup(k, rec);
  }
}

bool LockFreeBst::remove(Key k) {
  assert(k >= 1 && k <= kMaxUserKey);
  EpochManager::Guard g(reclaimer_);
  SeekRecord rec;
  if (skip_unlink()) {
    seek_into(k, rec);
    return rec.leaf->key == k;
  }

  bool injecting = true;
  Node* target = nullptr;
  while (true) {
    seek_into(k, rec);
    if (injecting) {
      Node* leaf = rec.leaf;
      if (leaf->key != k) return false;
      auto& edge = rec.parent->child_toward(k);
      std::uintptr_t expected = word(leaf);
      if (edge.compare_exchange_strong(expected, word(leaf) | kFlag, std::memory_order_acq_rel)) {
        injecting = false;
        target = leaf;
        if (after_flag_) after_flag_(k);
        if (cleanup(k, rec)) return true;
      } else if (addr<Node>(expected) == leaf && (expected & kMarks)) {
        cleanup(k, rec);
      }
    } else {
      // someone else spliced our flagged leaf out
      if (rec.leaf != target) return true;
      if (cleanup(k, rec)) return true;
    }
  }
}

bool LockFreeBst::cleanup(Key k, const SeekRecord& rec) {
  Node* ancestor = rec.ancestor;
  Node* successor = rec.successor;
  Node* parent = rec.parent;

  auto& successor_edge = ancestor->child_toward(k);
  std::atomic<std::uintptr_t>* child_edge = &parent->left;
  std::atomic<std::uintptr_t>* sibling_edge = &parent->right;
  if (!(k < parent->key)) std::swap(child_edge, sibling_edge);

  std::uintptr_t removed = child_edge->load(std::memory_order_acquire);
  if (!(removed & kFlag)) {
    // our side is only tagged; the flagged leaf is on the other side
    removed = sibling_edge->load(std::memory_order_acquire);
    sibling_edge = child_edge;
  }

  sibling_edge->fetch_or(kTag, std::memory_order_acq_rel);
  const std::uintptr_t sibling = sibling_edge->load(std::memory_order_acquire);

  std::uintptr_t expected = word(successor);
  if (!successor_edge.compare_exchange_strong(expected, sibling & ~kTag,
                                              std::memory_order_acq_rel)) {
    return false;
  }
  retire_spliced(k, successor, parent, addr<Node>(removed));
  return true;
}

// The splice unlinks every internal node from `successor` down to `parent`
// along k's path. Each of those edges was tagged, so the chain is frozen;
// every intermediate node's off-path child is a flagged leaf whose own delete
// will find it gone and return without retiring anything.
void LockFreeBst::retire_spliced(Key k, Node* successor, Node* parent, Node* removed_leaf) {
  for (Node* n = successor; n != parent;) {
    const bool go_left = k < n->key;
    Node* next = addr<Node>((go_left ? n->left : n->right).load(std::memory_order_acquire));
    Node* off = addr<Node>((go_left ? n->right : n->left).load(std::memory_order_acquire));
    assert(off->is_leaf());
    reclaimer_.retire(off);
    reclaimer_.retire(n);
    n = next;
  }
  reclaimer_.retire(removed_leaf);
  reclaimer_.retire(parent);
}

StructureAudit LockFreeBst::audit() const {
  return detail::walk_external_tree(
      root_,
      [](const void* p) {
        const auto* n = static_cast<const Node*>(p);
        const std::uintptr_t l = n->left.load(std::memory_order_acquire);
        const std::uintptr_t r = n->right.load(std::memory_order_acquire);
        return detail::NodeView{n->key, addr<Node>(l), addr<Node>(r),
                                ((l | r) & kMarks) ? "marked edge left behind" : nullptr};
      },
      nullptr);
}

std::vector<Key> LockFreeBst::keys() const {
  std::vector<Key> out;
  detail::walk_external_tree(
      root_,
      [](const void* p) {
        const auto* n = static_cast<const Node*>(p);
        return detail::NodeView{n->key, addr<Node>(n->left.load(std::memory_order_acquire)),
                                addr<Node>(n->right.load(std::memory_order_acquire)), nullptr};
      },
      &out);
  return out;
}

}  // namespace csetbench
