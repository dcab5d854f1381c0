#include <doctest.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <thread>

#include "support/project_fixture.hpp"
#include "trackbridge/server.hpp"

using namespace trackbridge;
using nlohmann::json;
namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

// Server on an ephemeral port, run on its own thread for the test's lifetime.
struct RunningServer {
  fixture::ProjectDir dir;
  Project project;
  Server server;
  std::thread thread;

  explicit RunningServer(const std::string& name)
      : dir(name), project(load_manifest(dir.dir / "project.json")), server(project, "127.0.0.1", 0),
        thread([this] { server.run(); }) {}
  ~RunningServer() {
    server.stop();
    thread.join();
  }
};

http::response<http::string_body> http_request(unsigned short port, http::verb verb, const std::string& target) {
  asio::io_context io;
  tcp::socket socket(io);
  socket.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
  http::request<http::string_body> req(verb, target, 11);
  req.set(http::field::host, "127.0.0.1");
  req.prepare_payload();
  http::write(socket, req);
  beast::flat_buffer buffer;
  http::response<http::string_body> res;
  http::read(socket, buffer, res);
  return res;
}

class WsClient {
 public:
  explicit WsClient(unsigned short port) : ws_(io_) {
    beast::get_lowest_layer(ws_).connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
    ws_.handshake("127.0.0.1", "/ws");
  }
  void send(const json& m) { ws_.write(asio::buffer(m.dump())); }
  json receive() {
    beast::flat_buffer buffer;
    ws_.read(buffer);
    return json::parse(beast::buffers_to_string(buffer.data()));
  }
  json hello() {
    send({{"type", "hello"}, {"payload", {{"protocol", kProtocolVersion}}}});
    return receive();
  }

 private:
  asio::io_context io_;
  websocket::stream<tcp::socket> ws_;
};

}  // namespace

TEST_CASE("document API over HTTP") {
  RunningServer s("trackbridge_service_http");
  const auto port = s.server.port();
  REQUIRE(port != 0);
  auto res = http_request(port, http::verb::get, "/api/v1/info");
  CHECK(res.result_int() == 200);
  CHECK(json::parse(res.body())["name"] == "demo");
  res = http_request(port, http::verb::get, "/api/v1/volume/slab?t=0&x1=2&y1=2&z1=2");
  CHECK(res.result_int() == 200);
  CHECK(res[http::field::content_type] == "application/octet-stream");
  CHECK(http_request(port, http::verb::get, "/api/v1/missing").result_int() == 404);
  CHECK(http_request(port, http::verb::post, "/api/v1/project/save").result_int() == 200);
}

TEST_CASE("session socket: handshake, fan-out and document consistency") {
  RunningServer s("trackbridge_service_ws");
  const auto port = s.server.port();
  WsClient a(port), b(port);

  const json wa = a.hello();
  CHECK(wa["type"] == "welcome");
  CHECK(wa["payload"]["protocol"] == kProtocolVersion);
  CHECK(wa["payload"]["timepointCount"] == 3);
  const json wb = b.hello();
  CHECK(wb["payload"]["clientId"] != wa["payload"]["clientId"]);

  a.send({{"type", "addSpot"}, {"requestId", 1}, {"payload", {{"timepoint", 1}, {"position", {2, 2, 2}}}}});
  const json ack = a.receive();
  CHECK(ack["type"] == "ack");
  CHECK(ack["requestId"] == 1);
  CHECK(ack["version"] == 1);
  const json event = b.receive();
  CHECK(event["type"] == "addSpot");
  CHECK(event["version"] == 1);

  // echo is dropped silently; the next request is answered normally
  a.send(event);
  a.send({{"type", "moveSpot"}, {"requestId", 2}, {"payload", {{"id", 99}, {"position", {0, 0, 0}}}}});
  const json rej = a.receive();
  CHECK(rej["type"] == "reject");
  CHECK(rej["requestId"] == 2);
  CHECK(rej["payload"]["code"] == "not_found");

  b.send({{"type", "setTimepoint"}, {"payload", {{"t", 0}}}});
  CHECK(b.receive()["type"] == "ack");
  const json tp = a.receive();
  CHECK(tp["type"] == "setTimepoint");
  CHECK(tp["version"] == 2);

  const auto graph = json::parse(http_request(port, http::verb::get, "/api/v1/graph").body());
  CHECK(graph["spots"].size() == 1);
  CHECK(graph["version"] == 2);
}

TEST_CASE("session socket requires hello first") {
  RunningServer s("trackbridge_service_hello");
  WsClient c(s.server.port());
  c.send({{"type", "addSpot"}, {"payload", {{"timepoint", 1}, {"position", {2, 2, 2}}}}});
  const json r = c.receive();
  CHECK(r["type"] == "reject");
  CHECK(r["payload"]["code"] == "protocol");
  CHECK(c.hello()["type"] == "welcome");
}

TEST_CASE("bind address parsing") {
  CHECK(parse_bind_address("127.0.0.1:8080") == std::pair<std::string, unsigned short>{"127.0.0.1", 8080});
  CHECK_THROWS(parse_bind_address("localhost"));
  CHECK_THROWS(parse_bind_address("host:99999"));
}
