#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "trackbridge/project.hpp"

namespace trackbridge {

// HTTP document API (under /api/v1) and the session socket (/ws) on one
// port. A single I/O thread owns the project, which serializes every
// mutation and keeps per-client event order.
class Server {
 public:
  Server(Project& project, const std::string& host, unsigned short port,
         std::chrono::milliseconds tick = std::chrono::milliseconds(50));
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Bound port (useful when constructed with port 0).
  unsigned short port() const;
  // Blocks until stop() (or SIGINT/SIGTERM when handle_signals is set).
  void run(bool handle_signals = false);
  // Thread-safe.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Parses "host:port" (port required).
std::pair<std::string, unsigned short> parse_bind_address(const std::string& bind);

}  // namespace trackbridge
