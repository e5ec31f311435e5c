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

#include <atomic>
#include <future>
#include <random>
#include <thread>

#include "cellkit/bus/framing.hpp"
#include "cellkit/bus/handler_registry.hpp"
#include "cellkit/bus/tcp.hpp"
#include "cellkit/bus/vocabulary.hpp"

using namespace cellkit;
using namespace cellkit::bus;
using namespace std::chrono_literals;

namespace {

// Types whose payload can be built without fixtures.
const std::vector<std::pair<std::string, Json>> kSimple = {
    {"cell.query", Json::object()},
    {"node.announce", {{"coordinator", "node-c"}}},
    {"cell.leave", {{"node", "node-p"}}},
    {"task.terminate", {{"task_id", "t1"}}},
    {"instance.status", Json::object()},
    {"ack", Json::object()},
};

Message dispatch_sync(const HandlerRegistry& reg, const Message& m) {
  std::optional<Message> out;
  reg.dispatch(m, [&](Message r) {
    REQUIRE_FALSE(out.has_value());
    out = std::move(r);
  });
  REQUIRE(out.has_value());
  return *out;
}

Handler tagging(std::string in, std::string tag) {
  return make_handler(in, "ack", [tag](const Message& m) { return make_ack(m.msg_id, {{"via", tag}}); });
}

std::string reason(const Message& m) {
  REQUIRE(m.is_rejection());
  return m.payload.at("reason_code");
}

}  // namespace

TEST_CASE("vocabulary lists the shipped message types") {
  const auto& v = Vocabulary::standard();
  for (const char* t : {"cell.query", "cell.join", "cell.leave", "cell.transfer", "task.submit", "task.terminate",
                        "instance.status", "node.announce", "ack", "error.rejected"}) {
    CHECK_MESSAGE(v.contains(t), t);
  }
  CHECK_THROWS_AS(v.validate(make_request("cell.mystery", {})), Error);
  try {
    v.validate(make_request("cell.leave", {{"node", "n"}, {"reason", "boredom"}}));
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSchemaViolation);
  }
}

TEST_CASE("envelope round trip and msg ids") {
  const auto m = make_request("task.terminate", {{"task_id", "abc"}});
  CHECK(m.msg_id.size() == 32);
  CHECK(m.msg_id.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(decode_envelope(encode_envelope(m)) == m);
  CHECK_THROWS_AS(decode_envelope("{\"msg_type\":\"ack\"}"), Error);
  CHECK_THROWS_AS(decode_envelope("not json"), Error);

  std::set<std::string> ids;
  for (int i = 0; i < 10000; ++i) ids.insert(random_msg_id());
  CHECK(ids.size() == 10000);
}

TEST_CASE("expect_success maps rejections back to errors") {
  const auto rej = make_rejection("x", ErrorCode::kRegistryBusy, "busy", {{"primary", "p"}});
  try {
    expect_success(rej);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kRegistryBusy);
    CHECK(e.detail() == "busy");
    CHECK(e.context().at("primary") == "p");
  }
  const auto ok = make_ack("x");
  CHECK(&expect_success(ok) == &ok);
}

TEST_CASE("register and dispatch") {
  HandlerRegistry reg;
  std::atomic<int> calls = 0;
  reg.register_handler("cell.query", make_handler("cell.query", "ack", [&](const Message& m) {
                         ++calls;
                         return make_ack(m.msg_id, {{"seen", true}});
                       }));
  reg.seal();
  const auto req = make_request("cell.query", {});
  const auto resp = dispatch_sync(reg, req);
  CHECK(calls == 1);
  CHECK(resp.msg_type == "ack");
  CHECK(resp.msg_id == req.msg_id);
  CHECK(resp.payload.at("seen") == true);
}

TEST_CASE("registration errors") {
  HandlerRegistry reg;
  reg.register_handler("cell.query", tagging("cell.query", "a"));
  try {
    reg.register_handler("cell.query", tagging("cell.query", "b"));
    FAIL("duplicate accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDuplicateRegistration);
  }
  try {
    reg.register_handler("cell.nope", tagging("cell.nope", "b"));
    FAIL("unknown type accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnknownMessageType);
  }

  SUBCASE("chain type mismatch between stages") {
    // a: task.submit -> task.plan, b declares it consumes ack.
    Handler a{"task.submit", "task.plan", [](const Message&, Reply) {}};
    Handler b{"ack", "ack", [](const Message&, Reply) {}};
    try {
      reg.register_pipeline("task.submit", {a, b});
      FAIL("mismatch accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kChainTypeMismatch);
    }
    Handler b_ok{"task.plan", "ack", [](const Message&, Reply) {}};
    CHECK_NOTHROW(reg.register_pipeline("task.submit", {a, b_ok}));
    CHECK_THROWS_AS(reg.register_pipeline("task.submit", {a, b_ok}), Error);
  }
  SUBCASE("first stage must consume the start type") {
    Handler a{"cell.query", "ack", [](const Message&, Reply) {}};
    CHECK_THROWS_AS(reg.register_pipeline("cell.join", {a}), Error);
  }
  SUBCASE("sealed") {
    reg.seal();
    CHECK_THROWS_AS(reg.register_handler("cell.leave", tagging("cell.leave", "x")), Error);
  }
}

TEST_CASE("pipeline wins over dedicated handler") {
  HandlerRegistry reg;
  reg.register_handler("cell.query", tagging("cell.query", "dedicated"));
  reg.register_pipeline("cell.query", {tagging("cell.query", "pipeline")});
  reg.seal();
  CHECK(dispatch_sync(reg, make_request("cell.query", {})).payload.at("via") == "pipeline");
}

TEST_CASE("unregistered type is rejected with NoHandler") {
  HandlerRegistry reg;
  reg.seal();
  const auto req = make_request("cell.query", {});
  const auto resp = dispatch_sync(reg, req);
  CHECK(reason(resp) == "NoHandler");
  CHECK(resp.msg_id == req.msg_id);
}

TEST_CASE("pipeline stages run in order on the previous output") {
  HandlerRegistry reg;
  std::vector<int> order;
  Handler s0{"task.terminate", "cell.query", [&](const Message& m, Reply r) {
               order.push_back(0);
               r(Message{"cell.query", "ignored", {{"summary", m.payload.at("task_id") == "t9"}}});
             }};
  Handler s1{"cell.query", "ack", [&](const Message& m, Reply r) {
               order.push_back(1);
               r(make_ack("also-ignored", {{"summary", m.payload.at("summary")}}));
             }};
  reg.register_pipeline("task.terminate", {s0, s1});
  reg.seal();
  const auto req = make_request("task.terminate", {{"task_id", "t9"}});
  const auto resp = dispatch_sync(reg, req);
  CHECK(order == std::vector<int>{0, 1});
  CHECK(resp.msg_id == req.msg_id);
  CHECK(resp.payload.at("summary") == true);
}

TEST_CASE("handler failures carry code and stage index") {
  HandlerRegistry reg;
  Handler s0{"task.terminate", "cell.query", [](const Message&, Reply r) { r(make_request("cell.query", {})); }};
  Handler s1{"cell.query", "ack", [](const Message&, Reply) { fail(ErrorCode::kUnknownTask, "nope"); }};
  reg.register_pipeline("task.terminate", {s0, s1});
  reg.register_handler("cell.leave", make_handler("cell.leave", "ack", [](const Message&) -> Message {
                         throw std::runtime_error("boom");
                       }));
  reg.seal();

  auto resp = dispatch_sync(reg, make_request("task.terminate", {{"task_id", "t"}}));
  CHECK(reason(resp) == "UnknownTask");
  CHECK(resp.payload.at("handler_index") == 1);

  resp = dispatch_sync(reg, make_request("cell.leave", {{"node", "n"}}));
  CHECK(reason(resp) == "HandlerFailure");
  CHECK(resp.payload.at("detail") == "boom");
}

TEST_CASE("invalid payloads never reach a handler") {
  HandlerRegistry reg;
  std::atomic<int> calls = 0;
  auto counting = [&](std::string t) {
    return make_handler(t, "ack", [&](const Message& m) {
      ++calls;
      return make_ack(m.msg_id);
    });
  };
  reg.register_handler("cell.leave", counting("cell.leave"));
  reg.register_pipeline("task.terminate", {counting("task.terminate")});
  reg.seal();

  const std::vector<Message> bad = {
      Message{"cell.leave", "1", Json::object()},
      Message{"cell.leave", "2", {{"node", ""}}},
      Message{"cell.leave", "3", {{"node", "n"}, {"extra", 1}}},
      Message{"cell.leave", "4", {{"node", 7}}},
      Message{"task.terminate", "5", {{"task_id", nullptr}}},
      Message{"task.terminate", "6", Json::array()},
      Message{"no.such.type", "7", Json::object()},
  };
  for (const auto& m : bad) {
    const auto resp = dispatch_sync(reg, m);
    CHECK(resp.msg_id == m.msg_id);
    const auto r = reason(resp);
    CHECK((r == "SchemaViolation" || r == "UnknownMessageType"));
  }
  CHECK(calls == 0);
  dispatch_sync(reg, Message{"cell.leave", "8", {{"node", "n"}}});
  CHECK(calls == 1);
}

TEST_CASE("dispatch precedence holds for random registrations") {
  std::mt19937_64 rng(20261014);
  for (int trial = 0; trial < 500; ++trial) {
    HandlerRegistry reg;
    std::map<std::string, std::string> expected;
    for (const auto& [type, _] : kSimple) {
      const bool pipe = rng() & 1;
      const bool ded = rng() & 1;
      // Registration order is randomized too; it must not matter.
      if (rng() & 1) {
        if (ded) reg.register_handler(type, tagging(type, "dedicated"));
        if (pipe) reg.register_pipeline(type, {tagging(type, "pipeline")});
      } else {
        if (pipe) reg.register_pipeline(type, {tagging(type, "pipeline")});
        if (ded) reg.register_handler(type, tagging(type, "dedicated"));
      }
      expected[type] = pipe ? "pipeline" : ded ? "dedicated" : "reject";
    }
    reg.seal();
    for (const auto& [type, payload] : kSimple) {
      const auto req = make_request(type, payload);
      for (int rep = 0; rep < 2; ++rep) {
        const auto resp = dispatch_sync(reg, req);
        REQUIRE(resp.msg_id == req.msg_id);
        if (expected[type] == "reject") {
          CHECK(reason(resp) == "NoHandler");
        } else {
          CHECK(resp.payload.at("via") == expected[type]);
        }
      }
    }
  }
}

TEST_CASE("frame decoder") {
  FrameDecoder d;
  const auto a = encode_frame("hello");
  const auto b = encode_frame("");
  const auto c = encode_frame(std::string(70000, 'x'));
  CHECK(a.substr(0, 4) == std::string("\0\0\0\x05", 4));
  const std::string stream = a + b + c;
  // Byte-at-a-time feeding yields the same frames.
  std::vector<std::string> got;
  for (char ch : stream) {
    d.feed(&ch, 1);
    while (auto f = d.next()) got.push_back(*f);
  }
  REQUIRE(got.size() == 3);
  CHECK(got[0] == "hello");
  CHECK(got[1].empty());
  CHECK(got[2].size() == 70000);
  CHECK(d.buffered() == 0);

  FrameDecoder small(16);
  small.feed(encode_frame(std::string(17, 'y')));
  CHECK_THROWS_AS(small.next(), Error);
}

TEST_CASE("tcp echo") {
  TcpServer server("127.0.0.1", 0, [](const Message& m, Reply r) { r(make_ack(m.msg_id, m.payload)); });
  REQUIRE(server.port() != 0);
  const auto req = make_request("task.terminate", {{"task_id", "echo-me"}});
  const auto resp = send_request(server.endpoint(), req, 2000ms);
  CHECK(resp.msg_id == req.msg_id);
  CHECK(resp.payload == req.payload);
}

TEST_CASE("tcp serves a registry") {
  HandlerRegistry reg;
  reg.register_handler("cell.query", tagging("cell.query", "dedicated"));
  reg.seal();
  auto server = serve_registry("127.0.0.1", 0, reg);
  CHECK(send_request(server->endpoint(), make_request("cell.query", {}), 2000ms).payload.at("via") == "dedicated");
  CHECK(reason(send_request(server->endpoint(), make_request("cell.leave", {{"node", "x"}}), 2000ms)) ==
        "NoHandler");
  // Envelope-level garbage is rejected on the wire too.
  CHECK(reason(send_request(server->endpoint(), Message{"cell.bogus", "q", {}}, 2000ms)) == "SchemaViolation");
}

TEST_CASE("tcp errors") {
  SUBCASE("port in use") {
    TcpServer a("127.0.0.1", 0, [](const Message&, Reply) {});
    try {
      TcpServer b("127.0.0.1", a.port(), [](const Message&, Reply) {});
      FAIL("second bind succeeded");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kPortInUse);
    }
  }
  SUBCASE("invalid interface") {
    try {
      TcpServer b("203.0.113.77", 0, [](const Message&, Reply) {});
      FAIL("bind to foreign address succeeded");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInvalidInterface);
    }
  }
  SUBCASE("connection refused within timeout") {
    std::uint16_t port;
    {
      TcpServer tmp("127.0.0.1", 0, [](const Message&, Reply) {});
      port = tmp.port();
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      send_request(Endpoint{"127.0.0.1", port}, make_request("cell.query", {}), 1000ms);
      FAIL("connected to a closed port");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConnectionRefused);
    }
    CHECK(std::chrono::steady_clock::now() - t0 < 1500ms);
  }
  SUBCASE("slow handler times out") {
    TcpServer slow("127.0.0.1", 0, [](const Message& m, Reply r) {
      std::this_thread::sleep_for(400ms);
      r(make_ack(m.msg_id));
    });
    try {
      send_request(slow.endpoint(), make_request("cell.query", {}), 100ms);
      FAIL("no timeout");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kTimeout);
    }
  }
  SUBCASE("malformed response") {
    // A raw listener that answers with a frame that is not an envelope.
    TcpServer liar("127.0.0.1", 0, [](const Message& m, Reply r) { r(make_ack("different-id")); });
    try {
      send_request(liar.endpoint(), make_request("cell.query", {}), 1000ms);
      FAIL("mismatched id accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMalformedResponse);
    }
  }
}

TEST_CASE("concurrent requests stay correlated") {
  // Replies are deliberately delayed by a random amount so they come back
  // out of order on the shared connection.
  std::mutex mu;
  std::mt19937 rng(7);
  std::vector<std::jthread> workers;
  TcpServer server("127.0.0.1", 0, [&](const Message& m, Reply r) {
    int delay;
    {
      std::lock_guard lk(mu);
      delay = std::uniform_int_distribution<int>(0, 3)(rng);
      workers.emplace_back([m, r, delay] {
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        r(make_ack(m.msg_id, {{"task_id", m.payload.at("task_id")}}));
      });
    }
  });

  RpcClient client(server.endpoint(), 1000ms);
  std::atomic<int> mismatches = 0;
  std::atomic<int> done = 0;
  {
    std::vector<std::jthread> callers;
    for (int t = 0; t < 8; ++t) {
      callers.emplace_back([&, t] {
        for (int i = 0; i < 100; ++i) {
          const auto tag = std::to_string(t) + "/" + std::to_string(i);
          const auto req = make_request("task.terminate", {{"task_id", tag}});
          const auto resp = client.call(req, 5000ms);
          if (resp.msg_id != req.msg_id || resp.payload.at("task_id") != tag) ++mismatches;
          ++done;
        }
      });
    }
  }
  CHECK(done == 800);
  CHECK(mismatches == 0);
  server.stop();
  std::lock_guard lk(mu);
  workers.clear();
}
