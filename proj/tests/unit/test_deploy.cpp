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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "cellkit/core/descriptor.hpp"
#include "cellkit/core/error.hpp"
#include "cellkit/deploy/backend.hpp"
#include "cellkit/deploy/image_cache.hpp"
#include "cellkit/deploy/instance_manager.hpp"

using namespace cellkit;
using namespace cellkit::deploy;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("cellkit-deploy-" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const SkillDescriptor& relay() {
  static const SkillDescriptor d = [] {
    auto lib = load_skill_library(CELLKIT_SOURCE_DIR "/skills");
    return *find_operation(lib, "relay");
  }();
  return d;
}

DeployRequest relay_request(const std::string& model, const std::string& instance_id, const std::string& in_addr,
                            const std::string& out_addr) {
  const auto* m = relay().find_model(model);
  REQUIRE(m != nullptr);
  TaskSpec t;
  t.task_id = "task-" + instance_id;
  t.operation_name = "relay";
  t.model_name = model;
  t.input = {"file", in_addr};
  t.output = {"file", out_addr};
  return DeployRequest{t, *m, m->deployments.front(), std::nullopt, instance_id};
}

}  // namespace

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("image key depends on exactly base image, engine kind and entry point") {
  std::mt19937 rng(5);
  const std::vector<std::string> images = {"debian:bookworm", "ubuntu:22.04", "alpine:3", "nvcr.io/l4t:r35"};
  const std::vector<std::string> entries = {"identity", "echo-transform", "sleep 1", "python3 run.py"};
  for (int i = 0; i < 300; ++i) {
    ImageSpec a{images[rng() % images.size()], (rng() & 1) ? EngineKind::kPrimitive : EngineKind::kStandalone,
                entries[rng() % entries.size()]};
    ImageSpec b{images[rng() % images.size()], (rng() & 1) ? EngineKind::kPrimitive : EngineKind::kStandalone,
                entries[rng() % entries.size()]};
    CHECK(image_key(a) == image_key(ImageSpec(a)));
    CHECK((image_key(a) == image_key(b)) == (a == b));
  }

  // Deployment fields that are not part of the image leave the key alone.
  ImplementationModel m{"yolo", EngineKind::kPrimitive, std::nullopt, "ckpt-a", {}};
  DeploymentOption o{"cpu", "debian:bookworm", false, {"amd64"}, {100, 1, 1, 0}};
  const auto k0 = image_key(image_spec(m, o));
  auto o2 = o;
  o2.request = {900, 9, 9, 0};
  o2.supported_archs = {"arm64"};
  o2.deployment_id = "other";
  auto m2 = m;
  m2.checkpoint_ref = "ckpt-b";
  CHECK(image_key(image_spec(m2, o2)) == k0);
  m2.entry_point = "yolo";  // same as the default
  CHECK(image_key(image_spec(m2, o2)) == k0);
  m2.entry_point = "yolo-v2";
  CHECK(image_key(image_spec(m2, o2)) != k0);
}

TEST_CASE("image cache counts builds and reuses") {
  ImageCache cache([] { return 1234; });
  int builds = 0;
  auto builder = [&](const ImageSpec&, const std::string& key) {
    ++builds;
    return "img-" + key.substr(0, 4);
  };
  const ImageSpec s{"debian", EngineKind::kPrimitive, "identity"};
  const auto r1 = cache.resolve(s, builder);
  const auto r2 = cache.resolve(s, builder);
  CHECK_FALSE(r1.reused);
  CHECK(r2.reused);
  CHECK(r1.image_id == r2.image_id);
  CHECK(cache.build_counter() == 1);
  CHECK(cache.reuse_counter() == 1);
  CHECK(cache.entries().at(r1.key).built_at_ms == 1234);

  // A failing build moves neither counter.
  CHECK_THROWS(cache.resolve({"broken", EngineKind::kPrimitive, "x"},
                             [](const ImageSpec&, const std::string&) -> std::string { throw std::runtime_error("x"); }));
  CHECK(cache.build_counter() == 1);
  CHECK(cache.reuse_counter() == 1);
}

TEST_CASE("imagefile rendering") {
  CHECK(render_imagefile({"debian:bookworm-slim", EngineKind::kPrimitive, "identity"}) ==
        "FROM debian:bookworm-slim\n"
        "COPY cellkit-engine /usr/local/bin/cellkit-engine\n"
        "LABEL cellkit.executor=\"identity\"\n"
        "ENTRYPOINT [\"/usr/local/bin/cellkit-engine\"]\n");
  CHECK(render_imagefile({"alpine", EngineKind::kStandalone, "sleep \"3\""}) ==
        "FROM alpine\nENTRYPOINT [\"/bin/sh\", \"-c\", \"sleep \\\"3\\\"\"]\n");
  CHECK(render_env_file({{"B", "2"}, {"A", "1"}}) == "A=1\nB=2\n");
}

TEST_CASE("process backend: second deployment reuses the image, base image change rebuilds") {
  const auto root = scratch("reuse");
  const auto t0 = std::chrono::steady_clock::now();
  ProcessBackend backend({root, CELLKIT_ENGINE_BIN, std::chrono::milliseconds(50), std::chrono::milliseconds(2000)});
  ImageCache cache;
  InstanceManager mgr(NodeId("node-a"), backend, cache);

  const auto a = mgr.deploy(relay_request("identity", "i-1", (root / "a.in").string(), (root / "a.out").string()));
  CHECK(cache.build_counter() == 1);
  CHECK(cache.reuse_counter() == 0);
  CHECK(a.status == InstanceStatus::kRunning);

  const auto b = mgr.deploy(relay_request("identity", "i-2", (root / "b.in").string(), (root / "b.out").string()));
  CHECK(cache.build_counter() == 1);
  CHECK(cache.reuse_counter() == 1);
  CHECK(a.image_id == b.image_id);
  CHECK(a.params.at("CELL_INPUT_ADDR") != b.params.at("CELL_INPUT_ADDR"));

  auto changed = relay_request("identity", "i-3", (root / "c.in").string(), (root / "c.out").string());
  changed.deployment.base_image = "debian:trixie-slim";
  const auto c = mgr.deploy(changed);
  CHECK(cache.build_counter() == 2);
  CHECK(cache.reuse_counter() == 1);
  CHECK(c.image_id != a.image_id);

  // Working directory layout.
  const auto dir = backend.instance_dir("i-2");
  const auto env = slurp(dir / "params.env");
  CHECK(env.find("CELL_INPUT_ADDR=" + (root / "b.in").string() + "\n") != std::string::npos);
  CHECK(env.find("CELL_INSTANCE_ID=i-2\n") != std::string::npos);
  CHECK(env.find("CELL_TASK_ID=task-i-2\n") != std::string::npos);
  CHECK(fs::exists(dir / "instance.log"));
  CHECK(fs::exists(root / "images" / image_key(image_spec(*relay().find_model("identity"),
                                                            relay().find_model("identity")->deployments[0])) /
                   "Imagefile"));

  mgr.stop_all();
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(1));
}

TEST_CASE("process backend runs the primitive engine") {
  const auto root = scratch("e2e");
  ProcessBackend backend({root, CELLKIT_ENGINE_BIN, std::chrono::milliseconds(50), std::chrono::milliseconds(2000)});
  ImageCache cache;
  InstanceManager mgr(NodeId("node-a"), backend, cache);
  {
    std::ofstream in(root / "in.jsonl");
    for (int i = 0; i < 5; ++i) in << nlohmann::json{{"i", i}}.dump() << "\n";
  }
  mgr.deploy(relay_request("identity", "i-1", (root / "in.jsonl").string(), (root / "out.jsonl").string()));
  std::string out;
  for (int i = 0; i < 200; ++i) {
    out = slurp(root / "out.jsonl");
    if (std::count(out.begin(), out.end(), '\n') == 5) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  CHECK(out == "{\"i\":0}\n{\"i\":1}\n{\"i\":2}\n{\"i\":3}\n{\"i\":4}\n");
  const auto stopped = mgr.stop_task("task-i-1");
  REQUIRE(stopped.size() == 1);
  CHECK(stopped[0].status == InstanceStatus::kStopped);
}

TEST_CASE("standalone deployments") {
  const auto root = scratch("standalone");
  ProcessBackend backend({root, CELLKIT_ENGINE_BIN, std::chrono::milliseconds(100), std::chrono::milliseconds(2000)});
  ImageCache cache;
  InstanceManager mgr(NodeId("node-a"), backend, cache);

  const auto r = mgr.deploy(relay_request("sleeper", "s-1", "x", "y"));
  CHECK(r.status == InstanceStatus::kRunning);
  CHECK(slurp(root / "images" / image_key({"debian:bookworm-slim", EngineKind::kStandalone, "sleep 3600"}) /
              "Imagefile")
            .find("sleep 3600") != std::string::npos);

  auto bad = relay_request("sleeper", "s-2", "x", "y");
  bad.model.entry_point = "exit 3";
  try {
    mgr.deploy(bad);
    FAIL("no EarlyExit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEarlyExit);
  }
  CHECK(mgr.find("s-2")->status == InstanceStatus::kFailed);
  mgr.stop_all();
  CHECK(mgr.find("s-1")->status == InstanceStatus::kStopped);
}

TEST_CASE("instance listing and garbage collection") {
  std::int64_t now = 0;
  FakeBackend backend;
  ImageCache cache([&] { return now; });
  InstanceManager mgr(NodeId("node-a"), backend, cache, {60'000, [&] { return now; }});

  CHECK(mgr.list().empty());
  mgr.deploy(relay_request("identity", "i-1", "in", "out"));
  auto l = mgr.list();
  REQUIRE(l.size() == 1);
  CHECK(l[0].status == InstanceStatus::kRunning);
  CHECK(l[0].node == NodeId("node-a"));
  CHECK(l[0].deployment_id == "cpu");
  CHECK(l[0].request.cpu == 250);
  CHECK(backend.running() == 1);

  // Repeated deploy of the same instance id is idempotent.
  mgr.deploy(relay_request("identity", "i-1", "in", "out"));
  CHECK(backend.running() == 1);
  CHECK(cache.build_counter() == 1);

  now = 1000;
  const auto stopped = mgr.stop_task("task-i-1");
  CHECK(stopped.size() == 1);
  CHECK(backend.running() == 0);
  l = mgr.list();
  REQUIRE(l.size() == 1);
  CHECK(l[0].status == InstanceStatus::kStopped);
  CHECK(mgr.stop_task("task-i-1").empty());

  now = 60'999;
  CHECK(mgr.collect_garbage() == 0);
  now = 61'000;
  CHECK(mgr.collect_garbage() == 1);
  CHECK(mgr.list().empty());
}

TEST_CASE("build and launch failures leave failed records") {
  FakeBackend backend;
  backend.fail_images = {"broken:1"};
  backend.fail_tasks = {"task-i-2"};
  ImageCache cache;
  InstanceManager mgr(NodeId("node-a"), backend, cache);

  auto r1 = relay_request("identity", "i-1", "in", "out");
  r1.deployment.base_image = "broken:1";
  try {
    mgr.deploy(r1);
    FAIL("build succeeded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBuildFailed);
  }
  try {
    mgr.deploy(relay_request("identity", "i-2", "in", "out"));
    FAIL("launch succeeded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kLaunchFailed);
  }
  CHECK(mgr.find("i-1")->status == InstanceStatus::kFailed);
  CHECK(mgr.find("i-2")->status == InstanceStatus::kFailed);
  CHECK(backend.running() == 0);
  // The failed build did not count; the launch failure did resolve an image.
  CHECK(cache.build_counter() == 1);
}
