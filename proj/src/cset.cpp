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

#include "csetbench/cset.hpp"

#include <algorithm>
#include <stdexcept>

namespace csetbench {

std::string to_string(WideSum v) {
  if (v == 0) return "0";
  const bool neg = v < 0;
  unsigned __int128 u = neg ? -static_cast<unsigned __int128>(v) : static_cast<unsigned __int128>(v);
  std::string out;
  while (u != 0) {
    out.push_back(static_cast<char>('0' + static_cast<int>(u % 10)));
    u /= 10;
  }
  if (neg) out.push_back('-');
  std::reverse(out.begin(), out.end());
  return out;
}

WideSum parse_wide(std::string_view text) {
  if (text.empty()) throw std::invalid_argument("empty integer");
  const bool neg = text.front() == '-';
  if (neg) text.remove_prefix(1);
  if (text.empty()) throw std::invalid_argument("bare sign");
  unsigned __int128 u = 0;
  for (char c : text) {
    if (c < '0' || c > '9') throw std::invalid_argument("not an integer: " + std::string(text));
    u = u * 10 + static_cast<unsigned>(c - '0');
  }
  return neg ? -static_cast<WideSum>(u) : static_cast<WideSum>(u);
}

WideSum SequentialReferenceSet::key_sum() const {
  WideSum s = 0;
  for (Key k : keys_) s += k;
  return s;
}

ValidationReport validate_checksum(std::span<const ChecksumLedger> ledgers,
                                   const PrefillBaseline& prefill, const ConcurrentSet& set) {
  ChecksumLedger total;
  for (const auto& l : ledgers) total += l;

  const StructureAudit audit = set.audit();
  ValidationReport r;
  r.final_sum = audit.key_sum;
  r.final_count = audit.key_count;
  r.expected_sum = prefill.key_sum + total.inserted_sum - total.deleted_sum;
  r.expected_count = static_cast<WideSum>(prefill.count) + total.inserted_count -
                     static_cast<WideSum>(total.deleted_count);
  r.structure_ok = audit.ok;
  r.structure_problem = audit.problem;
  return r;
}

}  // namespace csetbench
