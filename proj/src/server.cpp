#include "trackbridge/server.hpp"

#include <deque>
#include <iostream>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace trackbridge {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

std::pair<std::string, unsigned short> parse_bind_address(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos || colon + 1 == bind.size()) {
    throw ValidationError("bind address must be host:port, got '" + bind + "'");
  }
  std::string host = bind.substr(0, colon);
  if (host.empty()) host = "0.0.0.0";
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(bind.substr(colon + 1), &used);
    if (used != bind.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ValidationError("bad port in bind address '" + bind + "'");
  }
  if (port < 0 || port > 65535) throw ValidationError("port out of range in '" + bind + "'");
  return {host, static_cast<unsigned short>(port)};
}

namespace {

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, Project& project) : ws_(std::move(socket)), project_(project) {}

  void start(http::request<http::string_body> request) {
    ws_.text(true);
    ws_.async_accept(request, [self = shared_from_this()](beast::error_code ec) {
      if (!ec) self->read();
    });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      close();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    SessionBridge& bridge = project_.bridge();
    if (!client_) {
      // Handshake first: nothing is delivered until the client says hello.
      nlohmann::json hello = nlohmann::json::parse(text, nullptr, false);
      if (hello.is_object() && hello.value("type", std::string()) == "hello") {
        std::weak_ptr<WsSession> weak = weak_from_this();
        client_ = bridge.connect([weak](const Message& m) {
          if (auto self = weak.lock()) self->enqueue(m.dump());
        });
        bridge.handle_message(*client_, hello);
        const auto& p = hello.contains("payload") ? hello["payload"] : nlohmann::json::object();
        if (!p.is_object() || p.value("protocol", 0) != kProtocolVersion) close();
      } else {
        enqueue(nlohmann::json{{"type", "reject"},
                               {"version", bridge.version()},
                               {"origin", kEngine},
                               {"payload", {{"request", ""}, {"code", "protocol"}, {"reason", "send hello first"}}}}
                    .dump());
      }
    } else {
      bridge.handle_text(*client_, text);
    }
    if (!closed_) read();
  }

  void enqueue(std::string text) {
    if (closed_) return;
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) write();
  }

  void write() {
    ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->close();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write();
    });
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    if (client_) project_.bridge().disconnect(*client_);
    if (ws_.is_open()) {
      ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  Project& project_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  std::optional<ClientId> client_;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, Project& project) : stream_(std::move(socket)), project_(project) {}

  void start() { read(); }

 private:
  void read() {
    request_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, request_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) return;
    if (websocket::is_upgrade(request_)) {
      if (request_.target() == "/ws") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), project_)->start(std::move(request_));
        return;
      }
    }
    const DocumentResponse doc =
        handle_document_request(project_, std::string(request_.method_string()), std::string(request_.target()),
                                request_.body());
    auto response = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(doc.status),
                                                                        request_.version());
    response->set(http::field::server, "trackbridge");
    response->set(http::field::content_type, doc.content_type);
    response->set(http::field::access_control_allow_origin, "*");
    response->keep_alive(request_.keep_alive());
    response->body() = doc.body;
    response->prepare_payload();
    http::async_write(stream_, *response,
                      [self = shared_from_this(), response](beast::error_code ec, std::size_t) {
                        if (ec) return;
                        if (response->keep_alive()) {
                          self->read();
                        } else {
                          beast::error_code ignored;
                          self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                        }
                      });
  }

  beast::tcp_stream stream_;
  Project& project_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
};

}  // namespace

struct Server::Impl {
  Impl(Project& p, const std::string& host, unsigned short port, std::chrono::milliseconds t)
      : project(p), acceptor(io), timer(io), tick(t) {
    beast::error_code ec;
    const auto address = asio::ip::make_address(host, ec);
    if (ec) throw ValidationError("bad bind host '" + host + "': " + ec.message());
    const tcp::endpoint endpoint(address, port);
    acceptor.open(endpoint.protocol());
    acceptor.set_option(asio::socket_base::reuse_address(true));
    acceptor.bind(endpoint, ec);
    if (ec) throw StateError("cannot bind " + host + ":" + std::to_string(port) + ": " + ec.message());
    acceptor.listen();
  }

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpSession>(std::move(socket), project)->start();
      accept();
    });
  }

  void schedule_tick() {
    timer.expires_after(tick);
    timer.async_wait([this](beast::error_code ec) {
      if (ec) return;
      const auto now = std::chrono::steady_clock::now();
      project.bridge().tick(std::chrono::duration<double>(now - last_tick).count());
      last_tick = now;
      schedule_tick();
    });
  }

  asio::io_context io;
  Project& project;
  tcp::acceptor acceptor;
  asio::steady_timer timer;
  std::chrono::milliseconds tick;
  std::chrono::steady_clock::time_point last_tick;
};

Server::Server(Project& project, const std::string& host, unsigned short port, std::chrono::milliseconds tick)
    : impl_(std::make_unique<Impl>(project, host, port, tick)) {}

Server::~Server() = default;

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run(bool handle_signals) {
  std::optional<asio::signal_set> signals;
  if (handle_signals) {
    signals.emplace(impl_->io, SIGINT, SIGTERM);
    signals->async_wait([this](beast::error_code, int) { impl_->io.stop(); });
  }
  impl_->accept();
  impl_->last_tick = std::chrono::steady_clock::now();
  impl_->schedule_tick();
  impl_->io.run();
}

void Server::stop() {
  asio::post(impl_->io, [this] { impl_->io.stop(); });
}

}  // namespace trackbridge
