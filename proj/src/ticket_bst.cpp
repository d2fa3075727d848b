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

#include "csetbench/ticket_bst.hpp"

#include <algorithm>
#include <cassert>
#include <thread>
#include <vector>

#include "tree_walk.hpp"

namespace csetbench {
namespace {

inline void cpu_relax() noexcept {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_ia32_pause();
#endif
}

// Spin briefly, then give the core away; lock holders may be descheduled
// when threads outnumber cores.
inline void backoff(unsigned& attempts) noexcept {
  if (++attempts % 16 == 0) {
    std::this_thread::yield();
  } else {
    cpu_relax();
  }
}

std::atomic<bool> g_check_order{false};
std::atomic<std::uint64_t> g_order_violations{0};
thread_local std::vector<unsigned> t_held_depths;

}  // namespace

void TicketLock::lock() noexcept {
  const std::uint64_t w = word_.fetch_add(std::uint64_t{1} << 32, std::memory_order_acq_rel);
  const auto ticket = static_cast<std::uint32_t>(w >> 32);
  unsigned attempts = 0;
  while (static_cast<std::uint32_t>(word_.load(std::memory_order_acquire)) != ticket)
    backoff(attempts);
}

void TicketLock::unlock() noexcept {
  std::uint64_t w = word_.load(std::memory_order_relaxed);
  while (true) {
    const auto serving = static_cast<std::uint32_t>(w);
    const std::uint64_t next = (w & 0xffffffff00000000ULL) | static_cast<std::uint32_t>(serving + 1);
    if (word_.compare_exchange_weak(w, next, std::memory_order_release, std::memory_order_relaxed))
      return;
  }
}

void LockOrderChecker::enable(bool on) noexcept { g_check_order.store(on, std::memory_order_relaxed); }
bool LockOrderChecker::enabled() noexcept { return g_check_order.load(std::memory_order_relaxed); }

void LockOrderChecker::on_acquire(unsigned depth) noexcept {
  if (!enabled()) return;
  if (!t_held_depths.empty() && depth <= t_held_depths.back())
    g_order_violations.fetch_add(1, std::memory_order_relaxed);
  t_held_depths.push_back(depth);
}

void LockOrderChecker::on_release(unsigned depth) noexcept {
  if (!enabled()) return;
  auto it = std::find(t_held_depths.rbegin(), t_held_depths.rend(), depth);
  if (it != t_held_depths.rend()) t_held_depths.erase(std::next(it).base());
}

std::uint64_t LockOrderChecker::violations() noexcept {
  return g_order_violations.load(std::memory_order_relaxed);
}

void LockOrderChecker::reset() noexcept {
  g_order_violations.store(0, std::memory_order_relaxed);
  t_held_depths.clear();
}

struct TicketBst::Node {
  explicit Node(Key k) : key(k) {}
  Node(Key k, Node* l, Node* r) : key(k), left(l), right(r) {}

  Key key;
  std::atomic<Node*> left{nullptr};
  std::atomic<Node*> right{nullptr};
  TicketLock lock;

  bool is_leaf() const noexcept { return left.load(std::memory_order_acquire) == nullptr; }
  std::atomic<Node*>& child_toward(Key k) noexcept { return k < key ? left : right; }
};

namespace {

// Nodes met on the way to k's leaf, with each lock word read before the
// node's child edge was followed.
template <class Node>
struct Path {
  Node* grandparent = nullptr;
  TicketLock::Snapshot grandparent_lock{};
  Node* parent = nullptr;
  TicketLock::Snapshot parent_lock{};
  Node* leaf = nullptr;
  unsigned parent_depth = 0;
};

template <class Node>
Path<Node> traverse(Node* root, Key k) noexcept {
  Path<Node> p;
  p.parent = root;
  p.parent_lock = root->lock.snapshot();
  Node* cur = root->child_toward(k).load(std::memory_order_acquire);
  while (!cur->is_leaf()) {
    p.grandparent = p.parent;
    p.grandparent_lock = p.parent_lock;
    p.parent = cur;
    p.parent_lock = cur->lock.snapshot();
    ++p.parent_depth;
    cur = cur->child_toward(k).load(std::memory_order_acquire);
  }
  p.leaf = cur;
  return p;
}

}  // namespace

TicketBst::TicketBst(SetOptions options) : reclaimer_(options.reclaim) {
  set_skip_unlink(options.skip_unlink);
  // same sentinel frame as the lock-free tree: user leaves always have a
  // grandparent, and R and S are never removed
  Node* s = new Node(kInf1, new Node(kInf0), new Node(kInf1));
  root_ = new Node(kInf2, s, new Node(kInf2));
  reclaimer_.note_alloc(5);
}

TicketBst::~TicketBst() {
  std::vector<Node*> stack{root_};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (Node* l = n->left.load(std::memory_order_relaxed)) stack.push_back(l);
    if (Node* r = n->right.load(std::memory_order_relaxed)) stack.push_back(r);
    delete n;
  }
}

bool TicketBst::contains(Key k) {
  assert(k >= 1 && k <= kMaxUserKey);
  EpochManager::Guard g(reclaimer_);
  Node* cur = root_;
  while (!cur->is_leaf()) cur = cur->child_toward(k).load(std::memory_order_acquire);
  return cur->key == k;
}

bool TicketBst::insert(Key k) {
  assert(k >= 1 && k <= kMaxUserKey);
  EpochManager::Guard g(reclaimer_);
  Node* new_leaf = nullptr;
  Node* new_internal = nullptr;
  unsigned attempts = 0;
  while (true) {
    const Path<Node> path = traverse(root_, k);
    Node* leaf = path.leaf;
    if (leaf->key == k) {
      delete new_leaf;
      delete new_internal;
      return false;
    }
    Node* parent = path.parent;
    if (path.parent_lock.locked() || !parent->lock.try_lock_at(path.parent_lock.version())) {
      restarts_.fetch_add(1, std::memory_order_relaxed);
      backoff(attempts);
      continue;
    }
    LockOrderChecker::on_acquire(path.parent_depth);

    if (new_leaf == nullptr) {
      new_leaf = new Node(k);
      new_internal = new Node(0);
    }
    new_internal->key = std::max(k, leaf->key);
    const bool new_on_left = k < leaf->key;
    new_internal->left.store(new_on_left ? new_leaf : leaf, std::memory_order_relaxed);
    new_internal->right.store(new_on_left ? leaf : new_leaf, std::memory_order_relaxed);
    parent->child_toward(k).store(new_internal, std::memory_order_release);

    parent->lock.unlock();
    LockOrderChecker::on_release(path.parent_depth);
    reclaimer_.note_alloc(2);
    return true;
  }
}

bool TicketBst::remove(Key k) {
  assert(k >= 1 && k <= kMaxUserKey);
  EpochManager::Guard g(reclaimer_);
  unsigned attempts = 0;
  while (true) {
    const Path<Node> path = traverse(root_, k);
    if (path.leaf->key != k) return false;
    if (skip_unlink()) return true;

    Node* gp = path.grandparent;
    Node* parent = path.parent;
    assert(gp != nullptr);
    const unsigned gp_depth = path.parent_depth - 1;

    if (path.grandparent_lock.locked() || path.parent_lock.locked() ||
        !gp->lock.try_lock_at(path.grandparent_lock.version())) {
      restarts_.fetch_add(1, std::memory_order_relaxed);
      backoff(attempts);
      continue;
    }
    LockOrderChecker::on_acquire(gp_depth);
    if (!parent->lock.try_lock_at(path.parent_lock.version())) {
      gp->lock.unlock();
      LockOrderChecker::on_release(gp_depth);
      restarts_.fetch_add(1, std::memory_order_relaxed);
      backoff(attempts);
      continue;
    }
    LockOrderChecker::on_acquire(path.parent_depth);

    Node* sibling = (k < parent->key ? parent->right : parent->left).load(std::memory_order_acquire);
    gp->child_toward(k).store(sibling, std::memory_order_release);
    gp->lock.unlock();
    // parent stays locked: it is unreachable and must fail every validation
    LockOrderChecker::on_release(gp_depth);
    LockOrderChecker::on_release(path.parent_depth);

    reclaimer_.retire(path.leaf);
    reclaimer_.retire(parent);
    return true;
  }
}

StructureAudit TicketBst::audit() const {
  return detail::walk_external_tree(
      root_,
      [](const void* p) {
        const auto* n = static_cast<const Node*>(p);
        return detail::NodeView{n->key, n->left.load(std::memory_order_acquire),
                                n->right.load(std::memory_order_acquire),
                                n->lock.snapshot().locked() ? "reachable node left locked" : nullptr};
      },
      nullptr);
}

std::vector<Key> TicketBst::keys() const {
  std::vector<Key> out;
  detail::walk_external_tree(
      root_,
      [](const void* p) {
        const auto* n = static_cast<const Node*>(p);
        return detail::NodeView{n->key, n->left.load(std::memory_order_acquire),
                                n->right.load(std::memory_order_acquire), nullptr};
      },
      &out);
  return out;
}

}  // namespace csetbench
