#ifndef HYDROLAB_SERVER_HPP_
#define HYDROLAB_SERVER_HPP_

#include <cstdint>
#include <memory>
#include <string>

#include "hydrolab/runtime.hpp"

namespace hydrolab {

struct ServerOptions {
  std::string address = "127.0.0.1";
  /// 0 picks a free port; see Server::port().
  std::uint16_t port = 0;
  /// Snapshot frames buffered per client before the oldest is dropped.
  /// Acks, errors and the hello frame are never dropped.
  std::size_t snapshot_buffer = 256;
};

/// Parses "host:port" (or ":port"). Throws ConfigError.
ServerOptions parse_bind(const std::string& bind);

/// TCP front end for a LiveSession. Each connection is sniffed: an HTTP
/// "GET " upgrade becomes a WebSocket carrying one JSON object per text
/// message; anything else is newline-delimited JSON.
class Server {
 public:
  /// Binds and starts serving on a background thread. Throws IoError when the
  /// address cannot be bound.
  Server(LiveSession& session, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const;
  /// Closes every connection and joins the I/O thread. Idempotent.
  void stop();

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  std::uint16_t port_ = 0;
};

}  // namespace hydrolab

#endif  // HYDROLAB_SERVER_HPP_
