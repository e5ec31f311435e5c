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

#include "cellkit/cli/cli.hpp"

#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "cellkit/bus/tcp.hpp"
#include "cellkit/bus/vocabulary.hpp"
#include "cellkit/net/net_node.hpp"
#include "cellkit/sched/scheduler.hpp"
#include "cellkit/sim/simnet.hpp"

namespace cellkit::cli {
namespace {

namespace msg = bus::msg;
using std::chrono::milliseconds;

struct ClientOptions {
  std::string coordinator;
  std::string format;
  int timeout_ms = 20000;

  bool json() const { return format == "json"; }
};

// ---- rendering ---------------------------------------------------------

std::string cpu_text(std::int64_t millicores) { return std::to_string(millicores) + "m"; }

std::string bytes_text(std::int64_t bytes) {
  static const char* units[] = {"", "Ki", "Mi", "Gi", "Ti"};
  double v = static_cast<double>(bytes);
  int u = 0;
  while (v >= 1024.0 && u < 4) {
    v /= 1024.0;
    ++u;
  }
  std::ostringstream s;
  if (u == 0 || v == static_cast<std::int64_t>(v)) {
    s << static_cast<std::int64_t>(v) << units[u];
  } else {
    s << std::fixed << std::setprecision(1) << v << units[u];
  }
  return s.str();
}

void print_table(std::ostream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out << cells[c];
      if (c + 1 < cells.size()) out << std::string(width[c] - cells[c].size() + 2, ' ');
    }
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

std::string str_or(const Json& j, const char* key, std::string fallback = "-") {
  if (!j.is_object() || !j.contains(key) || j[key].is_null()) return fallback;
  return j[key].is_string() ? j[key].get<std::string>() : j[key].dump();
}

void render_cell(std::ostream& out, const Json& info) {
  out << "cell " << info.value("coordinator", "?") << ": " << info.value("cell_size", 0) << " member(s)\n";
  std::map<std::string, int> running;
  const Json deployments = info.value("deployments", Json::object());
  for (const auto& [node, list] : deployments.items()) {
    for (const auto& r : list) {
      if (is_active(instance_status_from_string(r.value("status", "stopped")))) ++running[node];
    }
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& m : info.value("members", Json::array())) {
    const auto rec = m.at("record").get<NodeRecord>();
    rows.push_back({rec.id.value, std::string(to_string(rec.role)), m.value("active", true) ? "active" : "inactive",
                    rec.arch, rec.control_endpoint.str(), cpu_text(rec.usage.cpu) + "/" + cpu_text(rec.capacity.cpu),
                    bytes_text(rec.usage.mem) + "/" + bytes_text(rec.capacity.mem),
                    std::to_string(rec.gpu.gpus.size()), std::to_string(running[rec.id.value])});
  }
  if (!rows.empty()) print_table(out, {"NODE", "ROLE", "STATE", "ARCH", "CONTROL", "CPU", "MEM", "GPUS", "INSTANCES"}, rows);
}

void render_instances(std::ostream& out, const Json& instances) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : instances) {
    rows.push_back({str_or(r, "task_id"), str_or(r, "instance_id"), str_or(r, "node"), str_or(r, "deployment_id"),
                    str_or(r, "gpu_id"), str_or(r, "status")});
  }
  print_table(out, {"TASK", "INSTANCE", "NODE", "DEPLOYMENT", "GPU", "STATUS"}, rows);
}

// Prints a response; returns the exit code it deserves.
int finish(const ClientOptions& o, Streams& io, const bus::Message& response,
           const std::function<void(const Json&)>& table) {
  if (response.is_rejection()) {
    if (o.json()) {
      io.out << response.payload.dump() << '\n';
    } else {
      io.err << "rejected: " << response.payload.value("reason_code", "?") << ": " << response.payload.value("detail", "")
             << '\n';
      for (const auto& [k, v] : response.payload.items()) {
        if (k != "reason_code" && k != "detail") io.err << "  " << k << ": " << v.dump() << '\n';
      }
    }
    return kExitRejected;
  }
  if (o.json()) {
    io.out << response.payload.dump() << '\n';
  } else {
    table(response.payload);
  }
  return kExitOk;
}

bus::Message call(const ClientOptions& o, const std::string& type, Json payload) {
  Endpoint to;
  try {
    to = Endpoint::parse(o.coordinator);
  } catch (const Error& e) {
    fail(ErrorCode::kInvalidArgument, "coordinator address '" + o.coordinator + "': " + e.detail());
  }
  auto request = bus::make_request(type, std::move(payload));
  bus::Vocabulary::standard().validate(request);
  return bus::send_request(to, request, milliseconds(o.timeout_ms));
}

Json read_json_input(const std::string& path, std::istream& in) {
  std::string text;
  if (path == "-") {
    text.assign(std::istreambuf_iterator<char>(in), {});
  } else {
    std::ifstream f(path);
    if (!f) fail(ErrorCode::kInvalidArgument, "cannot read " + path);
    text.assign(std::istreambuf_iterator<char>(f), {});
  }
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::kInvalidArgument, (path == "-" ? std::string("stdin") : path) + ": " + e.what());
  }
}

// A pipeline file, a task.submit payload, or a task.submit envelope.
TaskPipeline pipeline_from_input(const Json& j) {
  if (j.is_array()) return TaskPipeline{j.get<std::vector<TaskSpec>>()};
  if (j.contains("msg_type")) {
    if (j["msg_type"] != msg::kTaskSubmit) fail(ErrorCode::kInvalidArgument, "envelope is not a task.submit");
    return pipeline_from_input(j.at("payload"));
  }
  if (j.contains("pipeline")) return j["pipeline"].get<TaskPipeline>();
  return j.get<TaskPipeline>();
}

// Task ids named by a terminate payload, a submit ack, or a status listing.
std::vector<std::string> task_ids_from_input(const Json& j) {
  std::vector<std::string> ids;
  auto add = [&](const std::string& id) {
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  };
  if (j.is_array()) {
    for (const auto& r : j) add(r.at("task_id").get<std::string>());
  } else if (j.contains("msg_type")) {
    return task_ids_from_input(j.at("payload"));
  } else if (j.contains("task_id")) {
    add(j["task_id"].get<std::string>());
  } else if (j.contains("instances")) {
    for (const auto& r : j["instances"]) add(r.at("task_id").get<std::string>());
  } else if (j.contains("scheme")) {
    for (const auto& a : j["scheme"].at("assignments")) add(a.at("task_id").get<std::string>());
  } else if (j.contains("pipeline")) {
    for (const auto& t : j["pipeline"].at("tasks")) add(t.at("task_id").get<std::string>());
  }
  if (ids.empty()) fail(ErrorCode::kInvalidArgument, "input names no task");
  return ids;
}

template <class T>
T parse_json_flag(const std::string& text, const char* what) {
  try {
    return Json::parse(text).get<T>();
  } catch (const std::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string(what) + ": " + e.what());
  }
}

std::filesystem::path default_engine_binary() {
  std::error_code ec;
  auto self = std::filesystem::read_symlink("/proc/self/exe", ec);
  if (ec) return "cellkit-engine";
  return self.parent_path() / "cellkit-engine";
}

// ---- node start ----------------------------------------------------------

struct StartFlags {
  bool coordinator = false;
  std::string coordinator_address;
  std::string interface = "127.0.0.1";
  std::string node_id;
  int control_port = 7000;
  int switch_port = 7001;
  std::string group = "239.255.42.99:7400";
  std::string skills;
  std::string runtime_root;
  std::string engine_binary;
  std::string arch = "amd64";
  std::string capacity;
  std::string background;
  std::string gpu;
  std::string pid_file;
  bool no_gateway = false;
  bool verbose = false;
  std::string format;
};

net::NetNodeOptions start_options(const StartFlags& f, std::ostream& err) {
  net::NetNodeOptions o;
  o.role = f.coordinator ? NodeRole::kCoordinator : NodeRole::kPrimary;
  if (!f.node_id.empty()) o.node_id = NodeId(f.node_id);
  o.interface = f.interface;
  o.control_port = static_cast<std::uint16_t>(f.control_port);
  o.switch_port = static_cast<std::uint16_t>(f.switch_port);
  if (!f.coordinator_address.empty()) {
    if (f.coordinator) fail(ErrorCode::kInvalidArgument, "--coordinator and --coordinator-address exclude each other");
    o.coordinator_endpoint = Endpoint::parse(f.coordinator_address);
  }
  const auto g = Endpoint::parse(f.group);
  o.group = {g.host, g.port};
  o.http_gateway = !f.no_gateway;
  o.arch = f.arch;
  if (!f.capacity.empty()) o.capacity = parse_json_flag<ResourceVector>(f.capacity, "--capacity");
  if (!f.background.empty()) o.background_usage = parse_json_flag<ResourceVector>(f.background, "--background");
  if (!f.gpu.empty()) {
    o.gpu = parse_json_flag<GpuInventory>(f.gpu, "--gpu");
    o.gpu.validate();
  }
  if (!f.skills.empty()) o.library = load_skill_library(f.skills);
  if (!f.runtime_root.empty()) {
    o.runtime_root = f.runtime_root;
    o.engine_binary = f.engine_binary.empty() ? default_engine_binary() : std::filesystem::path(f.engine_binary);
  }
  if (f.verbose) {
    o.log = [&err](std::string_view event, const Json& fields) {
      static std::mutex mu;
      std::lock_guard lk(mu);
      err << Json{{"event", event}, {"fields", fields}}.dump() << std::endl;
    };
  }
  return o;
}

int node_start(const StartFlags& f, Streams& io) {
  auto options = start_options(f, io.err);
  // Block the stop signals before any thread exists so that only sigwait
  // below sees them.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  sigset_t previous;
  pthread_sigmask(SIG_BLOCK, &stop_signals, &previous);
  struct Restore {
    sigset_t* mask;
    ~Restore() { pthread_sigmask(SIG_SETMASK, mask, nullptr); }
  } restore{&previous};

  net::NetNode node(std::move(options));
  if (!f.pid_file.empty()) std::ofstream(f.pid_file) << ::getpid() << '\n';
  const Json banner{{"node", node.id().value},
                    {"role", std::string(to_string(f.coordinator ? NodeRole::kCoordinator : NodeRole::kPrimary))},
                    {"control_endpoint", node.control_endpoint().str()},
                    {"registry_switch_endpoint", node.switch_endpoint().str()},
                    {"multicast", node.multicast_ok()}};
  if (f.format == "json") {
    io.out << banner.dump() << std::endl;
  } else {
    io.out << "node " << banner["node"].get<std::string>() << " (" << banner["role"].get<std::string>()
           << ") control " << banner["control_endpoint"].get<std::string>() << ", registry switch "
           << banner["registry_switch_endpoint"].get<std::string>() << (node.multicast_ok() ? "" : ", no multicast")
           << std::endl;
  }
  int sig = 0;
  sigwait(&stop_signals, &sig);
  node.stop();
  if (!f.pid_file.empty()) std::filesystem::remove(f.pid_file);
  return kExitOk;
}

int node_stop(const std::string& pid_file, int wait_ms, Streams& io) {
  std::ifstream in(pid_file);
  long pid = 0;
  if (!(in >> pid) || pid <= 0) fail(ErrorCode::kInvalidArgument, "no pid in " + pid_file);
  if (::kill(static_cast<pid_t>(pid), SIGTERM) != 0) fail(ErrorCode::kConnectionRefused, "no process " + std::to_string(pid));
  const auto deadline = std::chrono::steady_clock::now() + milliseconds(wait_ms);
  // A zombie has exited too; its parent just has not reaped it yet.
  auto running = [&] {
    if (::kill(static_cast<pid_t>(pid), 0) != 0) return false;
    std::ifstream stat("/proc/" + std::to_string(pid) + "/stat");
    std::string comm_and_rest;
    std::getline(stat, comm_and_rest);
    const auto close = comm_and_rest.rfind(')');
    return close == std::string::npos || close + 2 >= comm_and_rest.size() || comm_and_rest[close + 2] != 'Z';
  };
  while (running()) {
    if (std::chrono::steady_clock::now() > deadline) fail(ErrorCode::kTimeout, "node did not exit in time");
    std::this_thread::sleep_for(milliseconds(20));
  }
  io.out << "stopped " << pid << '\n';
  return kExitOk;
}

// ---- cell ---------------------------------------------------------------

int cell_list(const ClientOptions& o, const std::vector<std::string>& coordinators, const std::string& group,
              const std::string& interface, int listen_ms, Streams& io) {
  std::vector<std::string> targets = coordinators;
  if (targets.empty()) {
    const auto g = Endpoint::parse(group);
    for (const auto& a : net::listen_for_presence({g.host, g.port}, interface, milliseconds(listen_ms))) {
      if (a.role == NodeRole::kCoordinator) targets.push_back(a.control_endpoint.str());
    }
  }
  Json cells = Json::array();
  std::vector<std::vector<std::string>> rows;
  int code = kExitOk;
  for (const auto& t : targets) {
    ClientOptions one = o;
    one.coordinator = t;
    try {
      auto r = call(one, msg::kCellQuery, {{"summary", true}});
      cells.push_back(r.payload);
      rows.push_back({r.payload.value("coordinator", "?"), t, std::to_string(r.payload.value("cell_size", 0))});
    } catch (const Error& e) {
      io.err << t << ": " << error_code_name(e.code()) << ": " << e.detail() << '\n';
      code = kExitConnectivity;
    }
  }
  if (o.json()) {
    io.out << cells.dump() << '\n';
  } else {
    print_table(io.out, {"COORDINATOR", "CONTROL", "SIZE"}, rows);
  }
  return code;
}

// ---- sched score ----------------------------------------------------------

int sched_score(const std::string& path, const std::string& skills, bool all, Streams& io) {
  const Json input = read_json_input(path, io.in);
  const auto nodes = input.at("nodes").get<std::vector<NodeRecord>>();
  const auto pipeline = pipeline_from_input(input.at("pipeline"));
  SkillLibrary library;
  if (input.contains("library")) {
    library = skill_library_from_json(input["library"]);
  } else if (!skills.empty()) {
    library = load_skill_library(skills);
  } else {
    fail(ErrorCode::kInvalidArgument, "no skill library: give \"library\" in the input or --skills");
  }
  sched::SchedulerConfig config;
  if (input.contains("config")) {
    config.alpha = input["config"].value("alpha", config.alpha);
    config.beta_gpu = input["config"].value("beta_gpu", config.beta_gpu);
  }
  if (input.contains("scheme")) {
    io.out << sched::to_json(sched::score_scheme(input["scheme"].get<AllocationScheme>(), pipeline, nodes, library, config))
           << '\n';
    return kExitOk;
  }
  if (all) {
    Json out = Json::array();
    for (const auto& s : sched::enumerate_schemes(pipeline, nodes, library, config)) {
      out.push_back(sched::to_json(sched::score_scheme(s, pipeline, nodes, library, config)));
    }
    std::stable_sort(out.begin(), out.end(), [](const Json& a, const Json& b) { return a["total"] < b["total"]; });
    io.out << out.dump() << '\n';
    return kExitOk;
  }
  try {
    io.out << sched::to_json(sched::select_allocation(pipeline, nodes, library, config)) << '\n';
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNoFeasibleAllocation) throw;
    Json why{{"reason_code", error_code_name(e.code())}, {"detail", e.detail()}};
    if (e.context().is_object()) why.update(e.context());
    io.out << why.dump() << '\n';
    return kExitRejected;
  }
  return kExitOk;
}

}  // namespace

CliConfig CliConfig::from_environment() {
  CliConfig c;
  if (const char* v = std::getenv("CELLCTL_COORDINATOR"); v && *v) c.default_coordinator = v;
  if (const char* v = std::getenv("CELLCTL_FORMAT"); v && *v) c.output_format = v;
  return c;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kConnectionRefused:
    case ErrorCode::kTimeout:
    case ErrorCode::kMalformedResponse:
    case ErrorCode::kPortInUse:
      return kExitConnectivity;
    default:
      return kExitUsage;
  }
}

int run(const std::vector<std::string>& args, Streams io, const CliConfig& config) {
  CLI::App app{"cellctl: enable nodes, inspect cells, move members, run tasks"};
  app.require_subcommand(1);
  std::function<int()> action;

  ClientOptions client{config.default_coordinator, config.output_format, 20000};
  auto client_flags = [&](CLI::App* cmd) {
    cmd->add_option("--coordinator-address", client.coordinator, "coordinator control endpoint host:port")
        ->capture_default_str();
    cmd->add_option("--format", client.format, "table or json")
        ->check(CLI::IsMember({"table", "json"}))
        ->capture_default_str();
    cmd->add_option("--timeout-ms", client.timeout_ms, "request timeout")->capture_default_str();
  };

  // node
  auto* node = app.add_subcommand("node", "run and steer nodes")->require_subcommand(1);
  StartFlags start;
  start.format = config.output_format;
  auto* start_cmd = node->add_subcommand("start", "run a node in the foreground until SIGINT/SIGTERM");
  start_cmd->add_flag("--coordinator", start.coordinator, "run as the coordination node of a new cell");
  start_cmd->add_option("--coordinator-address", start.coordinator_address, "join this coordinator directly");
  start_cmd->add_option("--interface", start.interface, "local IPv4 address to bind and advertise")->capture_default_str();
  start_cmd->add_option("--node-id", start.node_id, "node id (default: from the interface's hardware address)");
  start_cmd->add_option("--control-port", start.control_port)->check(CLI::Range(0, 65535))->capture_default_str();
  start_cmd->add_option("--switch-port", start.switch_port)->check(CLI::Range(0, 65535))->capture_default_str();
  start_cmd->add_option("--group", start.group, "presence multicast group:port")->capture_default_str();
  start_cmd->add_option("--skills", start.skills, "directory of skill descriptors")->check(CLI::ExistingDirectory);
  start_cmd->add_option("--runtime-root", start.runtime_root, "run instances as processes under this directory");
  start_cmd->add_option("--engine-binary", start.engine_binary, "primitive engine host program");
  start_cmd->add_option("--arch", start.arch)->capture_default_str();
  start_cmd->add_option("--capacity", start.capacity, R"(JSON, e.g. {"cpu":4000,"mem":8589934592,"disk":0,"gmem":0})");
  start_cmd->add_option("--background", start.background, "JSON resource vector of unmanaged load");
  start_cmd->add_option("--gpu", start.gpu, R"(JSON, e.g. {"gpus":[{"gpu_id":"0","mem_capacity":8589934592}]})");
  start_cmd->add_option("--pid-file", start.pid_file);
  start_cmd->add_flag("--no-gateway", start.no_gateway, "coordinators: do not serve POST /rpc");
  start_cmd->add_flag("--verbose", start.verbose, "log node events to stderr as JSON lines");
  start_cmd->add_option("--format", start.format)->check(CLI::IsMember({"table", "json"}));
  start_cmd->callback([&] { action = [&] { return node_start(start, io); }; });

  std::string pid_file;
  int wait_ms = 10000;
  auto* stop_cmd = node->add_subcommand("stop", "stop a node started with --pid-file");
  stop_cmd->add_option("--pid-file", pid_file)->required();
  stop_cmd->add_option("--wait-ms", wait_ms)->capture_default_str();
  stop_cmd->callback([&] { action = [&] { return node_stop(pid_file, wait_ms, io); }; });

  std::string primary, dest;
  auto* transfer_cmd = node->add_subcommand("transfer", "move a primary into another cell");
  transfer_cmd->add_option("primary", primary)->required();
  transfer_cmd->add_option("dest", dest, "destination coordinator id")->required();
  client_flags(transfer_cmd);
  transfer_cmd->callback([&] {
    action = [&] {
      auto r = call(client, msg::kCellTransfer, {{"primary", primary}, {"dest_coordinator", dest}});
      return finish(client, io, r, [&](const Json& p) {
        io.out << primary << (p.value("moved", false) ? " moved to " : " already in ") << dest << '\n';
      });
    };
  });

  // cell
  auto* cell = app.add_subcommand("cell", "inspect cells")->require_subcommand(1);
  auto* show_cmd = cell->add_subcommand("show", "members and deployments of one cell");
  client_flags(show_cmd);
  show_cmd->callback([&] {
    action = [&] {
      auto r = call(client, msg::kCellQuery, Json::object());
      return finish(client, io, r, [&](const Json& p) { render_cell(io.out, p); });
    };
  });
  std::vector<std::string> list_targets;
  std::string list_group = "239.255.42.99:7400", list_interface = "127.0.0.1";
  int listen_ms = 2500;
  auto* list_cmd = cell->add_subcommand("list", "size of every cell (named, or heard on the presence group)");
  list_cmd->add_option("--coordinator-address", list_targets, "repeatable; default: listen for presence");
  list_cmd->add_option("--format", client.format)->check(CLI::IsMember({"table", "json"}));
  list_cmd->add_option("--timeout-ms", client.timeout_ms);
  list_cmd->add_option("--group", list_group)->capture_default_str();
  list_cmd->add_option("--interface", list_interface)->capture_default_str();
  list_cmd->add_option("--listen-ms", listen_ms)->capture_default_str();
  list_cmd->callback([&] {
    action = [&] { return cell_list(client, list_targets, list_group, list_interface, listen_ms, io); };
  });

  // task
  auto* task = app.add_subcommand("task", "submit, terminate and inspect tasks")->require_subcommand(1);
  std::string input = "-";
  bool dry_run = false;
  auto* submit_cmd = task->add_subcommand("submit", "place and deploy a pipeline");
  submit_cmd->add_option("pipeline", input, "pipeline JSON file, or - for stdin")->required();
  submit_cmd->add_flag("--dry-run", dry_run, "print the task.submit payload instead of sending it");
  client_flags(submit_cmd);
  submit_cmd->callback([&] {
    action = [&] {
      const Json payload{{"pipeline", pipeline_from_input(read_json_input(input, io.in))}};
      bus::Vocabulary::standard().validate_payload(msg::kTaskSubmit, payload);
      if (dry_run) {
        io.out << payload.dump() << '\n';
        return int(kExitOk);
      }
      auto r = call(client, msg::kTaskSubmit, payload);
      return finish(client, io, r, [&](const Json& p) {
        std::map<std::string, std::string> instance_of;
        for (const auto& i : p.value("instances", Json::array())) instance_of[i.value("task_id", "")] = i.value("instance_id", "");
        std::vector<std::vector<std::string>> rows;
        for (const auto& a : p.at("scheme").at("assignments")) {
          const auto id = a.value("task_id", "");
          rows.push_back({id, str_or(a, "node"), str_or(a, "deployment_id"), str_or(a, "gpu_id"), instance_of[id]});
        }
        print_table(io.out, {"TASK", "NODE", "DEPLOYMENT", "GPU", "INSTANCE"}, rows);
        io.out << "score " << p.value("score", 0.0) << '\n';
      });
    };
  });

  std::string task_arg;
  auto* terminate_cmd = task->add_subcommand("terminate", "stop every instance of a task");
  terminate_cmd->add_option("task", task_arg, "task id, or - to read submit/status output from stdin")->required();
  client_flags(terminate_cmd);
  terminate_cmd->callback([&] {
    action = [&] {
      std::vector<std::string> ids{task_arg};
      if (task_arg == "-" || std::filesystem::exists(task_arg)) ids = task_ids_from_input(read_json_input(task_arg, io.in));
      int code = kExitOk;
      for (const auto& id : ids) {
        auto r = call(client, msg::kTaskTerminate, {{"task_id", id}});
        code = std::max(code, finish(client, io, r, [&](const Json& p) {
                          io.out << id << ": stopped " << p.value("stopped", Json::array()).size() << " instance(s)\n";
                        }));
      }
      return code;
    };
  });

  std::string status_task;
  auto* status_cmd = task->add_subcommand("status", "instances known to the cell, optionally of one task");
  status_cmd->add_option("task", status_task);
  client_flags(status_cmd);
  status_cmd->callback([&] {
    action = [&] {
      auto r = call(client, msg::kCellQuery, Json::object());
      if (r.is_rejection()) return finish(client, io, r, {});
      Json instances = Json::array();
      const Json deployments = r.payload.value("deployments", Json::object());
      for (const auto& [_, list] : deployments.items()) {
        for (const auto& rec : list) {
          if (status_task.empty() || rec.value("task_id", "") == status_task) instances.push_back(rec);
        }
      }
      if (!status_task.empty() && instances.empty()) {
        io.err << "no instances of task " << status_task << '\n';
        if (client.json()) io.out << instances.dump() << '\n';
        return int(kExitRejected);
      }
      if (client.json()) {
        io.out << instances.dump() << '\n';
      } else {
        render_instances(io.out, instances);
      }
      return int(kExitOk);
    };
  });

  // sim
  auto* sim = app.add_subcommand("sim", "deterministic simulation")->require_subcommand(1);
  std::string scenario, registries_out, skills_dir;
  std::optional<std::uint64_t> seed;
  auto* run_cmd = sim->add_subcommand("run", "run a scenario script; the trace goes to stdout as JSON lines");
  run_cmd->add_option("scenario", scenario)->required();
  run_cmd->add_option("--seed", seed);
  run_cmd->add_option("--registries", registries_out, "write final registries and results to this file");
  run_cmd->add_option("--skills", skills_dir, "skill library when the script has none")->check(CLI::ExistingDirectory);
  run_cmd->callback([&] {
    action = [&] {
      Json script = read_json_input(scenario, io.in);
      if (!skills_dir.empty() && !script.contains("library")) script["library"] = Json::array();
      if (!skills_dir.empty() && script["library"].empty()) {
        for (const auto& d : load_skill_library(skills_dir)) script["library"].push_back(to_json(d));
      }
      auto result = sim::run_scenario(script, seed);
      for (const auto& line : result.trace) io.out << line << '\n';
      if (!registries_out.empty()) {
        std::ofstream(registries_out) << Json{{"registries", result.registries}, {"results", result.results}}.dump(2)
                                      << '\n';
      }
      return int(kExitOk);
    };
  });

  // sched
  auto* sched = app.add_subcommand("sched", "scheduler debugging")->require_subcommand(1);
  std::string problem;
  bool all = false;
  auto* score_cmd = sched->add_subcommand(
      "score", "select (or score the given \"scheme\") for {nodes, pipeline, library?, scheme?, config?}");
  score_cmd->add_option("problem", problem, "JSON file, or - for stdin")->required();
  score_cmd->add_option("--skills", skills_dir)->check(CLI::ExistingDirectory);
  score_cmd->add_flag("--all", all, "every feasible scheme, by ascending total");
  score_cmd->callback([&] { action = [&] { return sched_score(problem, skills_dir, all, io); }; });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, io.out, io.err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (!action) return kExitUsage;
  try {
    return action();
  } catch (const Error& e) {
    io.err << "error: " << error_code_name(e.code()) << ": " << e.detail() << '\n';
    return exit_code_for(e);
  } catch (const Json::exception& e) {
    io.err << "error: malformed input: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace cellkit::cli
