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

#include "cellkit/deploy/backend.hpp"

#include <fstream>

#include "cellkit/core/error.hpp"

namespace cellkit::deploy {
namespace fs = std::filesystem;
namespace {

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) fail(ErrorCode::kBuildFailed, "cannot write " + p.string());
}

std::string json_string(const std::string& s) { return nlohmann::json(s).dump(); }

class ProcessInstance final : public RunningInstance {
 public:
  ProcessInstance(std::unique_ptr<engine::ChildProcess> child, std::chrono::milliseconds stop_timeout)
      : child_(std::move(child)), stop_timeout_(stop_timeout) {}

  InstanceStatus status() const override {
    auto code = child_->exit_status();
    if (!code) return InstanceStatus::kRunning;
    if (stopped_ || *code == 0) return InstanceStatus::kStopped;
    return InstanceStatus::kFailed;
  }

  void stop() override {
    if (!child_->running()) return;
    stopped_ = true;
    child_->terminate(stop_timeout_);
  }

 private:
  std::unique_ptr<engine::ChildProcess> child_;
  std::chrono::milliseconds stop_timeout_;
  std::atomic<bool> stopped_{false};
};

// Waits out the grace period; a nonzero exit inside it is EarlyExit.
void check_early_exit(engine::ChildProcess& child, std::chrono::milliseconds grace, const std::string& what) {
  if (child.wait_for_exit(grace)) {
    const int code = *child.exit_status();
    if (code != 0) {
      fail(ErrorCode::kEarlyExit, what + " exited with status " + std::to_string(code), {{"exit_code", code}});
    }
  }
}

class FakeInstance final : public RunningInstance {
 public:
  explicit FakeInstance(std::shared_ptr<std::atomic<std::size_t>> running) : running_(std::move(running)) {
    ++*running_;
  }
  ~FakeInstance() override { stop(); }
  InstanceStatus status() const override { return stopped_ ? InstanceStatus::kStopped : InstanceStatus::kRunning; }
  void stop() override {
    if (!stopped_) {
      stopped_ = true;
      --*running_;
    }
  }

 private:
  std::shared_ptr<std::atomic<std::size_t>> running_;
  bool stopped_ = false;
};

class ContainerInstance final : public RunningInstance {
 public:
  ContainerInstance(std::string runtime, std::string name, fs::path dir)
      : runtime_(std::move(runtime)), name_(std::move(name)), dir_(std::move(dir)) {}

  InstanceStatus status() const override { return stopped_ ? InstanceStatus::kStopped : InstanceStatus::kRunning; }

  void stop() override {
    if (stopped_) return;
    engine::ChildProcess rm(engine::SpawnOptions{{"/usr/bin/env", runtime_, "rm", "-f", name_}, {}, dir_,
                                                 dir_ / "instance.log"});
    rm.wait_for_exit(std::chrono::seconds(30));
    stopped_ = true;
  }

 private:
  std::string runtime_;
  std::string name_;
  fs::path dir_;
  bool stopped_ = false;
};

}  // namespace

std::string render_imagefile(const ImageSpec& spec) {
  std::string out = "FROM " + spec.base_image + "\n";
  if (spec.engine_kind == EngineKind::kPrimitive) {
    out += "COPY cellkit-engine /usr/local/bin/cellkit-engine\n";
    out += "LABEL cellkit.executor=" + json_string(spec.entry_point) + "\n";
    out += "ENTRYPOINT [\"/usr/local/bin/cellkit-engine\"]\n";
  } else {
    out += "ENTRYPOINT [\"/bin/sh\", \"-c\", " + json_string(spec.entry_point) + "]\n";
  }
  return out;
}

std::string render_env_file(const engine::Params& env) {
  std::string out;
  for (const auto& [k, v] : env) out += k + "=" + v + "\n";
  return out;
}

// --- process backend -------------------------------------------------------

ProcessBackend::ProcessBackend(ProcessBackendOptions options) : options_(std::move(options)) {
  fs::create_directories(options_.root / "images");
  fs::create_directories(options_.root / "instances");
}

fs::path ProcessBackend::instance_dir(const std::string& instance_id) const {
  return options_.root / "instances" / instance_id;
}

std::string ProcessBackend::build_image(const ImageSpec& spec, const std::string& key) {
  if (spec.engine_kind == EngineKind::kPrimitive && !fs::exists(options_.engine_binary)) {
    fail(ErrorCode::kBuildFailed, "engine binary " + options_.engine_binary.string() + " not found");
  }
  const auto dir = options_.root / "images" / key;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kBuildFailed, "cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "Imagefile", render_imagefile(spec));
  write_file(dir / "spec.json", nlohmann::json{{"base_image", spec.base_image},
                                               {"engine_kind", std::string(to_string(spec.engine_kind))},
                                               {"entry_point", spec.entry_point}}
                                    .dump(2));
  return "img-" + key.substr(0, 16);
}

std::unique_ptr<RunningInstance> ProcessBackend::launch(const LaunchRequest& r) {
  const auto dir = instance_dir(r.instance_id);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kLaunchFailed, "cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "params.env", render_env_file(r.env));

  std::vector<std::string> argv;
  if (r.image.engine_kind == EngineKind::kPrimitive) {
    argv = {options_.engine_binary.string()};
  } else {
    argv = {"/bin/sh", "-c", r.image.entry_point};
  }
  auto child = std::make_unique<engine::ChildProcess>(engine::SpawnOptions{argv, r.env, dir, dir / "instance.log"});
  check_early_exit(*child, options_.grace, "instance " + r.instance_id);
  return std::make_unique<ProcessInstance>(std::move(child), options_.stop_timeout);
}

// --- container backend -----------------------------------------------------

ContainerBackend::ContainerBackend(fs::path root, std::string runtime)
    : root_(std::move(root)), runtime_(std::move(runtime)) {}

std::string ContainerBackend::build_image(const ImageSpec& spec, const std::string& key) {
  const auto dir = root_ / "images" / key;
  fs::create_directories(dir);
  write_file(dir / "Dockerfile", render_imagefile(spec));
  const std::string tag = "cellkit/" + key.substr(0, 16);
  engine::ChildProcess build(
      engine::SpawnOptions{{"/usr/bin/env", runtime_, "build", "-t", tag, "."}, {}, dir, dir / "build.log"});
  build.wait_for_exit(std::chrono::minutes(30));
  if (build.exit_status().value_or(1) != 0) fail(ErrorCode::kBuildFailed, runtime_ + " build failed for " + tag);
  return tag;
}

std::unique_ptr<RunningInstance> ContainerBackend::launch(const LaunchRequest& r) {
  const auto dir = root_ / "instances" / r.instance_id;
  fs::create_directories(dir);
  write_file(dir / "params.env", render_env_file(r.env));
  const std::string name = "cellkit-" + r.instance_id;
  engine::ChildProcess run(engine::SpawnOptions{
      {"/usr/bin/env", runtime_, "run", "-d", "--network", "host", "--name", name, "--env-file", "params.env",
       r.image_id},
      {},
      dir,
      dir / "instance.log"});
  run.wait_for_exit(std::chrono::minutes(5));
  if (run.exit_status().value_or(1) != 0) fail(ErrorCode::kLaunchFailed, runtime_ + " run failed for " + name);
  return std::make_unique<ContainerInstance>(runtime_, name, dir);
}

// --- fake backend ----------------------------------------------------------

std::string FakeBackend::build_image(const ImageSpec& spec, const std::string& key) {
  if (fail_images.contains(spec.base_image)) fail(ErrorCode::kBuildFailed, "build of " + spec.base_image + " failed");
  return "img-" + key.substr(0, 16);
}

std::unique_ptr<RunningInstance> FakeBackend::launch(const LaunchRequest& r) {
  if (fail_tasks.contains(r.task_id)) fail(ErrorCode::kLaunchFailed, "launch of " + r.instance_id + " failed");
  {
    std::lock_guard lk(mu_);
    launched_[r.instance_id] = r.env;
  }
  return std::make_unique<FakeInstance>(running_);
}

std::map<std::string, engine::Params> FakeBackend::launched() const {
  std::lock_guard lk(mu_);
  return launched_;
}

}  // namespace cellkit::deploy
