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

#include "cellkit/net/net_node.hpp"

#include <arpa/inet.h>
#include <ifaddrs.h>
#include <net/if.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/ioctl.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cstring>
#include <random>

#include <httplib.h>

#include "cellkit/bus/tcp.hpp"
#include "cellkit/deploy/backend.hpp"
#include "cellkit/node/presence.hpp"

namespace cellkit::net {
namespace {

using std::chrono::milliseconds;

in_addr parse_ipv4(const std::string& text) {
  in_addr a{};
  if (::inet_pton(AF_INET, text.c_str(), &a) != 1) fail(ErrorCode::kInvalidInterface, "'" + text + "' is not an IPv4 address");
  return a;
}

// Runs `fn` at most once; later calls are ignored.
template <class T>
class Once {
 public:
  std::future<T> future() { return promise_.get_future(); }
  void set(T value) {
    if (!done_.exchange(true)) promise_.set_value(std::move(value));
  }

 private:
  std::promise<T> promise_;
  std::atomic<bool> done_{false};
};

// A UDP socket bound to the group's port and joined on `interface`.
bus::Socket open_group_receiver(const MulticastGroup& group, const std::string& interface) {
  bus::Socket s(::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) fail(ErrorCode::kInternal, "socket");
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEPORT, &one, sizeof one);
  sockaddr_in any{};
  any.sin_family = AF_INET;
  any.sin_port = htons(group.port);
  any.sin_addr.s_addr = htonl(INADDR_ANY);
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&any), sizeof any) != 0) {
    fail(ErrorCode::kInternal, std::string("bind: ") + std::strerror(errno));
  }
  ip_mreq mreq{};
  mreq.imr_multiaddr = parse_ipv4(group.address);
  mreq.imr_interface = parse_ipv4(interface);
  if (::setsockopt(s.fd(), IPPROTO_IP, IP_ADD_MEMBERSHIP, &mreq, sizeof mreq) != 0) {
    fail(ErrorCode::kInternal, std::string("IP_ADD_MEMBERSHIP: ") + std::strerror(errno));
  }
  return s;
}

void json_response(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

std::vector<node::PresenceAnnouncement> listen_for_presence(const MulticastGroup& group, const std::string& interface,
                                                            std::chrono::milliseconds window) {
  if (!is_local_ipv4(interface)) fail(ErrorCode::kInvalidInterface, "'" + interface + "' is not an address of this host");
  auto sock = open_group_receiver(group, interface);
  std::map<NodeId, node::PresenceAnnouncement> heard;
  const auto deadline = std::chrono::steady_clock::now() + window;
  char buf[2048];
  for (;;) {
    const auto left = std::chrono::duration_cast<milliseconds>(deadline - std::chrono::steady_clock::now()).count();
    if (left <= 0) break;
    pollfd pfd{sock.fd(), POLLIN, 0};
    if (::poll(&pfd, 1, static_cast<int>(left)) <= 0) continue;
    const ssize_t n = ::recv(sock.fd(), buf, sizeof buf, 0);
    if (n <= 0) continue;
    try {
      auto a = node::presence_from_json(Json::parse(std::string_view(buf, static_cast<std::size_t>(n))));
      heard.insert_or_assign(a.node, a);
    } catch (const std::exception&) {
    }
  }
  std::vector<node::PresenceAnnouncement> out;
  for (auto& [_, a] : heard) out.push_back(std::move(a));
  return out;
}

bool is_local_ipv4(const std::string& address) {
  in_addr want{};
  if (::inet_pton(AF_INET, address.c_str(), &want) != 1 || want.s_addr == htonl(INADDR_ANY)) return false;
  ifaddrs* list = nullptr;
  if (::getifaddrs(&list) != 0) return false;
  bool found = false;
  for (auto* i = list; i && !found; i = i->ifa_next) {
    if (!i->ifa_addr || i->ifa_addr->sa_family != AF_INET) continue;
    found = reinterpret_cast<sockaddr_in*>(i->ifa_addr)->sin_addr.s_addr == want.s_addr;
  }
  ::freeifaddrs(list);
  return found;
}

std::optional<std::array<std::uint8_t, 6>> interface_mac(const std::string& address) {
  in_addr want{};
  if (::inet_pton(AF_INET, address.c_str(), &want) != 1) return std::nullopt;
  ifaddrs* list = nullptr;
  if (::getifaddrs(&list) != 0) return std::nullopt;
  std::string name;
  for (auto* i = list; i; i = i->ifa_next) {
    if (i->ifa_addr && i->ifa_addr->sa_family == AF_INET &&
        reinterpret_cast<sockaddr_in*>(i->ifa_addr)->sin_addr.s_addr == want.s_addr) {
      name = i->ifa_name;
      break;
    }
  }
  ::freeifaddrs(list);
  if (name.empty() || name.size() >= IFNAMSIZ) return std::nullopt;
  int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) return std::nullopt;
  ifreq req{};
  std::memcpy(req.ifr_name, name.c_str(), name.size());
  const bool ok = ::ioctl(fd, SIOCGIFHWADDR, &req) == 0;
  ::close(fd);
  if (!ok) return std::nullopt;
  std::array<std::uint8_t, 6> mac;
  std::memcpy(mac.data(), req.ifr_hwaddr.sa_data, 6);
  for (auto b : mac) {
    if (b != 0) return mac;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

struct NetNode::Transport {
  WorkerPool io{32};
  WorkerPool deploy{1};
  std::unique_ptr<bus::TcpServer> control;
  httplib::Server http;
  std::uint16_t http_port = 0;
  std::thread http_thread;

  bus::Socket mc_send;
  bus::Socket mc_recv;
  sockaddr_in mc_group{};
  std::atomic<bool> mc_ok{false};
  std::atomic<bool> stopping{false};
  std::thread mc_thread;

  void shutdown_inbound() {
    stopping = true;
    if (control) control->stop();
    http.stop();
    if (http_thread.joinable()) http_thread.join();
    if (mc_thread.joinable()) mc_thread.join();
  }
};

class NetNode::Env final : public node::NodeEnv {
 public:
  Env(NetNode& owner) : owner_(owner), rng_(std::random_device{}()) {}

  std::int64_t now_ms() const override { return owner_.loop_->now_ms(); }
  void post(std::function<void()> fn) override { owner_.loop_->post(std::move(fn)); }
  node::TimerId schedule(std::int64_t delay_ms, std::function<void()> fn) override {
    return owner_.loop_->schedule(delay_ms, std::move(fn));
  }
  void cancel(node::TimerId id) override { owner_.loop_->cancel(id); }

  void request(const Endpoint& to, bus::Message message, std::int64_t timeout_ms, node::RpcCallback cb) override {
    owner_.transport_->io.submit([loop = owner_.loop_.get(), to, message = std::move(message), timeout_ms,
                                  cb = std::move(cb)]() mutable {
      node::RpcResult r;
      try {
        r.response = bus::send_request(to, message, milliseconds(timeout_ms));
      } catch (const Error& e) {
        r.error = e;
      }
      loop->post([cb = std::move(cb), r = std::move(r)]() mutable { cb(std::move(r)); });
    });
  }

  void switch_registration(const Endpoint& to, const Endpoint& target, std::int64_t timeout_ms,
                           std::function<void(int)> cb) override {
    owner_.transport_->io.submit([loop = owner_.loop_.get(), to, target, timeout_ms, cb = std::move(cb)]() mutable {
      httplib::Client client(to.host, to.port);
      client.set_connection_timeout(milliseconds(timeout_ms));
      client.set_read_timeout(milliseconds(timeout_ms));
      client.set_write_timeout(milliseconds(timeout_ms));
      const Json body{{"target_coordinator_endpoint", target.str()}};
      auto res = client.Put("/registration", body.dump(), "application/json");
      const int status = res ? res->status : 0;
      loop->post([cb = std::move(cb), status] { cb(status); });
    });
  }

  void multicast(const Json& datagram) override {
    auto& t = *owner_.transport_;
    if (!t.mc_ok) return;
    const std::string bytes = datagram.dump();
    if (bytes.size() > node::kMaxPresenceBytes) {
      log("presence.oversize", {{"bytes", bytes.size()}});
      return;
    }
    ::sendto(t.mc_send.fd(), bytes.data(), bytes.size(), 0, reinterpret_cast<const sockaddr*>(&t.mc_group),
             sizeof(t.mc_group));
  }

  void run_blocking(std::function<void()> work, std::function<void()> done) override {
    owner_.transport_->deploy.submit(
        [loop = owner_.loop_.get(), work = std::move(work), done = std::move(done)]() mutable {
          work();
          loop->post(std::move(done));
        });
  }

  std::string random_id() override {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng_()));
    return buf;
  }

  void log(std::string_view event, const Json& fields) override {
    if (owner_.options_.log) owner_.options_.log(event, fields);
  }

 private:
  NetNode& owner_;
  std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------

NetNode::NetNode(NetNodeOptions options) : options_(std::move(options)) {
  if (!is_local_ipv4(options_.interface)) {
    fail(ErrorCode::kInvalidInterface, "'" + options_.interface + "' is not an address of this host");
  }
  loop_ = std::make_unique<EventLoop>();
  transport_ = std::make_unique<Transport>();
  auto& t = *transport_;

  t.control = std::make_unique<bus::TcpServer>(options_.interface, options_.control_port,
                                               [this](const bus::Message& m, bus::Reply reply) {
                                                 loop_->post([this, m, reply = std::move(reply)]() mutable {
                                                   if (node_) node_->on_request(m, std::move(reply));
                                                 });
                                               });

  // The library default adds SO_REUSEPORT, which would hide a port clash.
  t.http.set_socket_options([](socket_t sock) {
    int one = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  });
  if (options_.switch_port == 0) {
    const int port = t.http.bind_to_any_port(options_.interface);
    if (port <= 0) fail(ErrorCode::kPortInUse, "no free port for the registry-switch endpoint");
    t.http_port = static_cast<std::uint16_t>(port);
  } else {
    if (!t.http.bind_to_port(options_.interface, options_.switch_port)) {
      t.control->stop();
      fail(ErrorCode::kPortInUse, options_.interface + ":" + std::to_string(options_.switch_port) + " is in use");
    }
    t.http_port = options_.switch_port;
  }

  if (options_.node_id) {
    id_ = *options_.node_id;
  } else if (auto mac = interface_mac(options_.interface)) {
    id_ = node_id_from_mac(*mac);
  } else {
    // No hardware address (loopback): the control endpoint is unique.
    char buf[48];
    std::snprintf(buf, sizeof buf, "node-%08x-%u", ntohl(parse_ipv4(options_.interface).s_addr),
                  static_cast<unsigned>(t.control->port()));
    id_ = NodeId(buf);
  }

  const auto switch_timeout = options_.timing.switch_timeout_ms + 2 * options_.timing.request_timeout_ms + 1000;
  t.http.Put("/registration", [this, switch_timeout](const httplib::Request& req, httplib::Response& res) {
    Endpoint target;
    try {
      target = Endpoint::parse(Json::parse(req.body).at("target_coordinator_endpoint").get<std::string>());
    } catch (const std::exception& e) {
      json_response(res, 400, {{"detail", std::string("expected {target_coordinator_endpoint}: ") + e.what()}});
      return;
    }
    auto slot = std::make_shared<Once<std::pair<int, Json>>>();
    auto result = slot->future();
    loop_->post([this, target, slot] {
      if (!node_) return slot->set({503, Json{{"detail", "node is shutting down"}}});
      node_->on_registration_switch(target, [slot](int status, Json body) { slot->set({status, std::move(body)}); });
    });
    if (result.wait_for(milliseconds(switch_timeout)) != std::future_status::ready) {
      json_response(res, 504, {{"detail", "switch did not finish in time"}});
      return;
    }
    auto [status, body] = result.get();
    json_response(res, status, body);
  });

  if (options_.role == NodeRole::kCoordinator && options_.http_gateway) {
    const auto rpc_timeout = options_.timing.deploy_timeout_ms + options_.timing.switch_timeout_ms + 5000;
    t.http.Options("/rpc", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Methods", "POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    t.http.Post("/rpc", [this, rpc_timeout](const httplib::Request& req, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      bus::Message request;
      try {
        request = bus::decode_envelope(req.body);
      } catch (const Error& e) {
        std::string id;
        try {
          auto j = Json::parse(req.body);
          if (j.is_object() && j.contains("msg_id") && j["msg_id"].is_string()) id = j["msg_id"];
        } catch (...) {
        }
        json_response(res, 400, bus::to_envelope(bus::make_rejection(id, e)));
        return;
      }
      auto slot = std::make_shared<Once<bus::Message>>();
      auto result = slot->future();
      loop_->post([this, request, slot] {
        if (!node_) return slot->set(bus::make_rejection(request.msg_id, ErrorCode::kConnectionRefused, "node is shutting down"));
        node_->on_request(request, [slot](bus::Message m) { slot->set(std::move(m)); });
      });
      if (result.wait_for(milliseconds(rpc_timeout)) != std::future_status::ready) {
        json_response(res, 504, bus::to_envelope(bus::make_rejection(request.msg_id, ErrorCode::kTimeout,
                                                                     "no reply from the node")));
        return;
      }
      json_response(res, 200, bus::to_envelope(result.get()));
    });
  }
  t.http_thread = std::thread([&t] { t.http.listen_after_bind(); });

  // Presence. Failure here only costs discovery.
  try {
    t.mc_group.sin_family = AF_INET;
    t.mc_group.sin_port = htons(options_.group.port);
    t.mc_group.sin_addr = parse_ipv4(options_.group.address);
    const in_addr iface = parse_ipv4(options_.interface);
    t.mc_send = bus::Socket(::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0));
    if (!t.mc_send.valid()) fail(ErrorCode::kInternal, "socket");
    unsigned char ttl = 1, loopback = 1;
    ::setsockopt(t.mc_send.fd(), IPPROTO_IP, IP_MULTICAST_TTL, &ttl, sizeof ttl);
    ::setsockopt(t.mc_send.fd(), IPPROTO_IP, IP_MULTICAST_LOOP, &loopback, sizeof loopback);
    if (::setsockopt(t.mc_send.fd(), IPPROTO_IP, IP_MULTICAST_IF, &iface, sizeof iface) != 0) {
      fail(ErrorCode::kInternal, std::string("IP_MULTICAST_IF: ") + std::strerror(errno));
    }
    t.mc_recv = open_group_receiver(options_.group, options_.interface);
    t.mc_ok = true;
    t.mc_thread = std::thread([this, &t] {
      char buf[2048];
      while (!t.stopping) {
        pollfd pfd{t.mc_recv.fd(), POLLIN, 0};
        if (::poll(&pfd, 1, 100) <= 0) continue;
        const ssize_t n = ::recv(t.mc_recv.fd(), buf, sizeof buf, 0);
        if (n <= 0 || static_cast<std::size_t>(n) > node::kMaxPresenceBytes) continue;
        Json j = Json::parse(std::string_view(buf, static_cast<std::size_t>(n)), nullptr, false);
        if (j.is_discarded()) continue;
        loop_->post([this, j = std::move(j)] {
          if (node_) node_->on_datagram(j);
        });
      }
    });
  } catch (const Error& e) {
    if (options_.log) options_.log("presence.unavailable", {{"node", id_.value}, {"detail", e.detail()}});
  }

  if (options_.runtime_root) {
    backend_ = std::make_unique<deploy::ProcessBackend>(
        deploy::ProcessBackendOptions{.root = *options_.runtime_root, .engine_binary = options_.engine_binary});
  } else {
    backend_ = std::make_unique<deploy::FakeBackend>();
  }
  cache_ = std::make_unique<deploy::ImageCache>();
  manager_ = std::make_unique<deploy::InstanceManager>(id_, *backend_, *cache_);
  env_ = std::make_unique<Env>(*this);

  node::NodeConfig cfg;
  cfg.id = id_;
  cfg.role = options_.role;
  cfg.arch = options_.arch;
  cfg.control_endpoint = t.control->endpoint();
  cfg.registry_switch_endpoint = Endpoint{options_.interface, t.http_port};
  cfg.capacity = options_.capacity;
  cfg.background_usage = options_.background_usage;
  cfg.gpu = options_.gpu;
  cfg.coordinator_endpoint = options_.coordinator_endpoint;
  cfg.timing = options_.timing;
  cfg.scheduler = options_.scheduler;
  cfg.library = options_.library;
  loop_->call([this, cfg = std::move(cfg)]() mutable {
    node_ = std::make_unique<node::Node>(std::move(cfg), *env_, manager_.get());
    node_->start();
  });
}

NetNode::~NetNode() { stop(); }

void NetNode::stop() {
  if (stopped_) return;
  stopped_ = true;
  auto quiet = std::make_shared<Once<bool>>();
  auto done = quiet->future();
  loop_->post([this, quiet] { node_->stop([quiet] { quiet->set(true); }); });
  done.wait_for(milliseconds(2 * options_.timing.request_timeout_ms + 1000));
  transport_->shutdown_inbound();
  transport_->io.stop();
  transport_->deploy.stop();
  loop_->call([this] { node_.reset(); });
  loop_->stop();
  manager_->stop_all();
}

Endpoint NetNode::control_endpoint() const { return transport_->control->endpoint(); }

Endpoint NetNode::switch_endpoint() const { return Endpoint{options_.interface, transport_->http_port}; }

bool NetNode::multicast_ok() const noexcept { return transport_->mc_ok; }

}  // namespace cellkit::net
