/*
 * Copyright 2026 The cellkit Authors
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

#include "cellkit/deploy/instance_manager.hpp"

#include <chrono>

#include "cellkit/core/error.hpp"

namespace cellkit::deploy {

engine::EngineBinding make_binding(const DeployRequest& r) {
  engine::EngineBinding b;
  b.engine_kind = r.model.engine_kind;
  b.input = r.task.input;
  b.output = r.task.output;
  b.executor_id = r.model.effective_entry_point();
  if (r.model.checkpoint_ref) b.params["checkpoint_ref"] = *r.model.checkpoint_ref;
  if (r.gpu_id) b.params["CELL_GPU_ID"] = *r.gpu_id;
  return b;
}

InstanceManager::InstanceManager(NodeId node, ExecutionBackend& backend, ImageCache& cache, ManagerOptions options)
    : node_(std::move(node)), backend_(backend), cache_(cache), options_(std::move(options)) {
  if (!options_.now_ms) {
    options_.now_ms = [] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(
                 std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
}

InstanceManager::~InstanceManager() { stop_all(); }

void InstanceManager::refresh(Entry& e) const {
  if (!e.handle || !is_active(e.record.status)) return;
  const auto s = e.handle->status();
  if (s != e.record.status) {
    e.record.status = s;
    if (!is_active(s)) e.ended_at_ms = options_.now_ms();
  }
}

InstanceRecord InstanceManager::deploy(const DeployRequest& r) {
  if (r.instance_id.empty()) fail(ErrorCode::kInvalidArgument, "instance id is empty");
  {
    std::lock_guard lk(mu_);
    if (auto it = entries_.find(r.instance_id); it != entries_.end()) {
      refresh(it->second);
      if (is_active(it->second.record.status)) return it->second.record;
      entries_.erase(it);
    }
  }

  const auto binding = make_binding(r);
  InstanceRecord rec;
  rec.task_id = r.task.task_id;
  rec.instance_id = r.instance_id;
  rec.node = node_;
  rec.params = engine::binding_env(binding, r.task.task_id, r.instance_id);
  rec.status = InstanceStatus::kBuilding;
  rec.deployment_id = r.deployment.deployment_id;
  rec.request = r.deployment.request;
  rec.gpu_id = r.gpu_id;

  auto record_failure = [&] {
    rec.status = InstanceStatus::kFailed;
    std::lock_guard lk(mu_);
    entries_[rec.instance_id] = Entry{rec, nullptr, options_.now_ms()};
  };

  const auto spec = image_spec(r.model, r.deployment);
  try {
    const auto image = cache_.resolve(
        spec, [this](const ImageSpec& s, const std::string& key) { return backend_.build_image(s, key); });
    rec.image_id = image.image_id;
  } catch (...) {
    record_failure();
    throw;
  }

  std::unique_ptr<RunningInstance> handle;
  try {
    handle = backend_.launch(LaunchRequest{rec.instance_id, rec.task_id, rec.image_id, spec, rec.params});
  } catch (...) {
    record_failure();
    throw;
  }
  rec.status = handle->status();
  std::lock_guard lk(mu_);
  Entry& e = entries_[rec.instance_id];
  e = Entry{rec, std::move(handle), 0};
  if (!is_active(rec.status)) e.ended_at_ms = options_.now_ms();
  return rec;
}

std::vector<InstanceRecord> InstanceManager::stop_task(const std::string& task_id) {
  std::vector<RunningInstance*> handles;
  std::vector<std::string> ids;
  {
    std::lock_guard lk(mu_);
    for (auto& [id, e] : entries_) {
      if (e.record.task_id != task_id) continue;
      refresh(e);
      if (!is_active(e.record.status)) continue;
      ids.push_back(id);
      handles.push_back(e.handle.get());
    }
  }
  // Stopping may block on process exit; do it without the lock.
  for (auto* h : handles) {
    if (h) h->stop();
  }
  std::vector<InstanceRecord> out;
  std::lock_guard lk(mu_);
  for (const auto& id : ids) {
    auto& e = entries_.at(id);
    e.record.status = InstanceStatus::kStopped;
    e.ended_at_ms = options_.now_ms();
    out.push_back(e.record);
  }
  return out;
}

std::vector<InstanceRecord> InstanceManager::list() const {
  std::lock_guard lk(mu_);
  std::vector<InstanceRecord> out;
  for (auto& [_, e] : entries_) {
    refresh(e);
    out.push_back(e.record);
  }
  return out;
}

std::optional<InstanceRecord> InstanceManager::find(const std::string& instance_id) const {
  std::lock_guard lk(mu_);
  auto it = entries_.find(instance_id);
  if (it == entries_.end()) return std::nullopt;
  refresh(it->second);
  return it->second.record;
}

std::size_t InstanceManager::collect_garbage() {
  const auto now = options_.now_ms();
  std::lock_guard lk(mu_);
  return std::erase_if(entries_, [&](auto& kv) {
    refresh(kv.second);
    return !is_active(kv.second.record.status) && now - kv.second.ended_at_ms >= options_.retention_ms;
  });
}

void InstanceManager::stop_all() {
  std::vector<std::string> tasks;
  {
    std::lock_guard lk(mu_);
    for (const auto& [_, e] : entries_) tasks.push_back(e.record.task_id);
  }
  for (const auto& t : tasks) stop_task(t);
}

}  // namespace cellkit::deploy
