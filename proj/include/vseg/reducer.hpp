// Copyright 2026 The vseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <barrier>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace vseg {

/// Sums partial statistics across the execution contexts that share one
/// mini-batch. Every context passes its local partials and receives the total.
class Reducer {
 public:
  virtual ~Reducer() = default;
  virtual void allreduce(std::span<double> values) = 0;
};

/// Single execution context: local partials already are the totals.
class LocalReducer final : public Reducer {
 public:
  void allreduce(std::span<double>) override {}
};

/// Collective for W worker threads. The reduction is 0 + p_0 + p_1 + ... in
/// worker order, so every worker sees a bit-identical total and a single
/// worker holding the whole batch gets the same value as W workers holding
/// one sample each.
class WorkerGroup {
 public:
  explicit WorkerGroup(std::size_t workers)
      : slots_(workers), sync_(static_cast<std::ptrdiff_t>(workers)) {
    for (std::size_t i = 0; i < workers; ++i) members_.push_back(std::make_unique<Member>(*this, i));
  }

  WorkerGroup(const WorkerGroup&) = delete;
  WorkerGroup& operator=(const WorkerGroup&) = delete;

  std::size_t size() const noexcept { return slots_.size(); }
  Reducer& reducer(std::size_t worker) { return *members_.at(worker); }

  /// A failing worker leaves the group so the others do not block forever.
  void leave() { sync_.arrive_and_drop(); }

 private:
  class Member final : public Reducer {
   public:
    Member(WorkerGroup& group, std::size_t id) : group_(group), id_(id) {}
    void allreduce(std::span<double> values) override { group_.reduce(id_, values); }

   private:
    WorkerGroup& group_;
    std::size_t id_;
  };

  void reduce(std::size_t id, std::span<double> values) {
    slots_[id].assign(values.begin(), values.end());
    sync_.arrive_and_wait();
    for (std::size_t i = 0; i < values.size(); ++i) {
      double total = 0.0;
      for (const auto& slot : slots_) total += slot.size() > i ? slot[i] : 0.0;
      values[i] = total;
    }
    sync_.arrive_and_wait();
  }

  std::vector<std::vector<double>> slots_;
  std::barrier<> sync_;
  std::vector<std::unique_ptr<Member>> members_;
};

}  // namespace vseg
