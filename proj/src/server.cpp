#include "hydrolab/server.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <deque>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "hydrolab/error.hpp"
#include "hydrolab/wire.hpp"

namespace hydrolab {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using boost::system::error_code;

namespace {

constexpr std::size_t kMaxMessageBytes = 1 << 20;
// A client that sends nothing this long after connecting is a raw-socket
// client waiting for its hello frame.
constexpr auto kSniffTimeout = std::chrono::milliseconds(150);

}  // namespace

ServerOptions parse_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw ConfigError("bind address must be host:port");
  ServerOptions options;
  const std::string host = bind.substr(0, colon);
  if (!host.empty()) options.address = host;
  const std::string port = bind.substr(colon + 1);
  unsigned value = 0;
  const auto [end, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (port.empty() || ec != std::errc() || end != port.data() + port.size() || value > 65535) {
    throw ConfigError("invalid port '" + port + "'");
  }
  options.port = static_cast<std::uint16_t>(value);
  return options;
}

struct Server::Impl : std::enable_shared_from_this<Server::Impl> {
  class Connection;

  Impl(LiveSession& s, ServerOptions o) : session(s), options(std::move(o)), acceptor(ioc) {}

  void start();
  void accept();
  void broadcast_latest();
  void shutdown();

  LiveSession& session;
  ServerOptions options;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  std::thread thread;
  std::set<std::shared_ptr<Connection>> connections;
  int subscription = -1;
  bool stopped = false;

  std::mutex snapshot_mutex;
  std::optional<Snapshot> pending_snapshot;
  bool broadcast_posted = false;
};

class Server::Impl::Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(std::shared_ptr<Impl> server, tcp::socket socket)
      : server_(std::move(server)), socket_(std::move(socket)), sniff_timer_(server_->ioc) {}

  void start() {
    auto self = shared_from_this();
    sniff_timer_.expires_after(kSniffTimeout);
    sniff_timer_.async_wait([self](error_code ec) {
      if (!ec && !self->sniffed_) self->begin_raw();
    });
    sniff();
  }

  void send_control(std::string frame) {
    if (closed_) return;
    control_.push_back(std::move(frame));
    write_next();
  }

  void send_snapshot(const std::shared_ptr<const std::string>& frame) {
    if (closed_ || !ready_) return;
    if (snapshots_.size() >= server_->options.snapshot_buffer) snapshots_.pop_front();
    snapshots_.push_back(frame);
    write_next();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    sniff_timer_.cancel();
    error_code ignored;
    socket().shutdown(tcp::socket::shutdown_both, ignored);
    socket().close(ignored);
    server_->connections.erase(shared_from_this());
  }

 private:
  tcp::socket& socket() { return ws_ ? ws_->next_layer() : socket_; }

  void sniff() {
    auto self = shared_from_this();
    sniff_pending_ = true;
    socket_.async_read_some(buffer_.prepare(4096), [self](error_code ec, std::size_t n) {
      self->sniff_pending_ = false;
      if (self->closed_ || self->sniffed_) {
        // The timer already chose raw mode; keep the bytes for the line reader.
        if (!ec && !self->closed_) {
          self->buffer_.commit(n);
          self->raw_ingest();
        } else if (ec) {
          self->close();
        }
        return;
      }
      if (ec) return self->close();
      self->buffer_.commit(n);
      const std::string_view head(static_cast<const char*>(self->buffer_.data().data()),
                                  self->buffer_.size());
      const std::string_view get = "GET ";
      const std::size_t k = std::min(head.size(), get.size());
      if (head.substr(0, k) != get.substr(0, k)) return self->begin_raw();
      if (head.size() < get.size()) return self->sniff();
      self->begin_websocket();
    });
  }

  // --- newline-delimited JSON --------------------------------------------------

  void begin_raw() {
    if (sniffed_) return;
    sniffed_ = true;
    sniff_timer_.cancel();
    ready_ = true;
    send_control(hello_frame(server_->session.hello()));
    raw_ingest();
  }

  void raw_ingest() {
    const auto data = buffer_.data();
    line_buffer_.append(static_cast<const char*>(data.data()), data.size());
    buffer_.consume(buffer_.size());
    if (!raw_reading_ && !sniff_pending_) {
      raw_reading_ = true;
      raw_drain_lines();
    }
  }

  void raw_drain_lines() {
    std::size_t nl;
    while (!closed_ && (nl = line_buffer_.find('\n')) != std::string::npos) {
      std::string line = line_buffer_.substr(0, nl);
      line_buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      handle_message(line);
    }
    if (closed_) return;
    if (line_buffer_.size() > kMaxMessageBytes) {
      send_control(error_frame(std::nullopt, "ValidationError: message too large"));
      return close();
    }
    auto self = shared_from_this();
    asio::async_read_until(socket_, asio::dynamic_buffer(line_buffer_, kMaxMessageBytes + 1), '\n',
                           [self](error_code ec, std::size_t) {
                             if (ec || self->closed_) return self->close();
                             self->raw_drain_lines();
                           });
  }

  // --- WebSocket ---------------------------------------------------------------

  void begin_websocket() {
    sniffed_ = true;
    sniff_timer_.cancel();
    auto self = shared_from_this();
    request_ = std::make_unique<http::request<http::string_body>>();
    http::async_read(socket_, buffer_, *request_, [self](error_code ec, std::size_t) {
      if (ec || self->closed_) return self->close();
      if (!websocket::is_upgrade(*self->request_)) return self->reject_http();
      self->ws_.emplace(std::move(self->socket_));
      self->ws_->read_message_max(kMaxMessageBytes);
      self->ws_->set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      self->ws_->async_accept(*self->request_, [self](error_code ec) {
        if (ec || self->closed_) return self->close();
        self->request_.reset();
        self->ws_->text(true);
        self->ready_ = true;
        self->send_control(hello_frame(self->server_->session.hello()));
        self->ws_read();
      });
    });
  }

  void reject_http() {
    auto self = shared_from_this();
    auto response = std::make_shared<http::response<http::string_body>>(http::status::bad_request,
                                                                        request_->version());
    response->set(http::field::content_type, "text/plain");
    response->body() = "expected a WebSocket upgrade\n";
    response->prepare_payload();
    http::async_write(socket_, *response,
                      [self, response](error_code, std::size_t) { self->close(); });
  }

  void ws_read() {
    auto self = shared_from_this();
    ws_->async_read(buffer_, [self](error_code ec, std::size_t) {
      if (ec || self->closed_) return self->close();
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->handle_message(text);
      self->ws_read();
    });
  }

  // --- shared ------------------------------------------------------------------

  void handle_message(const std::string& text) {
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) {
      return;
    }
    std::optional<std::int64_t> id;
    try {
      Request request = parse_request(text, &id);
      std::weak_ptr<Connection> weak = weak_from_this();
      std::weak_ptr<Impl> server = server_;
      server_->session.submit(
          std::move(request.command), request.at_step,
          [weak, server, id = request.id](CommandOutcome outcome) {
            std::string frame = outcome.ok
                                    ? ack_frame(id, outcome.applied_at_step, outcome.detail)
                                    : error_frame(id, outcome.error_kind + ": " + outcome.message);
            if (auto s = server.lock()) {
              asio::post(s->ioc, [weak, frame = std::move(frame)]() mutable {
                if (auto c = weak.lock()) c->send_control(std::move(frame));
              });
            }
          });
    } catch (const Error& e) {
      send_control(error_frame(id, std::string(e.kind()) + ": " + e.what()));
    }
  }

  void write_next() {
    if (writing_ || closed_ || !ready_) return;
    if (!control_.empty()) {
      current_ = std::make_shared<const std::string>(std::move(control_.front()));
      control_.pop_front();
    } else if (!snapshots_.empty()) {
      current_ = std::move(snapshots_.front());
      snapshots_.pop_front();
    } else {
      return;
    }
    writing_ = true;
    auto self = shared_from_this();
    auto done = [self](error_code ec, std::size_t) {
      self->writing_ = false;
      self->current_.reset();
      if (ec) return self->close();
      self->write_next();
    };
    if (ws_) {
      ws_->async_write(asio::buffer(*current_), done);
    } else {
      framed_ = *current_ + '\n';
      asio::async_write(socket_, asio::buffer(framed_), done);
    }
  }

  std::shared_ptr<Impl> server_;
  tcp::socket socket_;
  std::optional<websocket::stream<tcp::socket>> ws_;
  asio::steady_timer sniff_timer_;
  beast::flat_buffer buffer_;
  std::unique_ptr<http::request<http::string_body>> request_;
  std::string line_buffer_;
  bool sniffed_ = false;
  bool raw_reading_ = false;
  bool sniff_pending_ = false;
  bool ready_ = false;
  bool closed_ = false;

  std::deque<std::string> control_;
  std::deque<std::shared_ptr<const std::string>> snapshots_;
  std::shared_ptr<const std::string> current_;
  std::string framed_;
  bool writing_ = false;
};

void Server::Impl::start() {
  error_code ec;
  tcp::resolver resolver(ioc);
  const auto results = resolver.resolve(options.address, std::to_string(options.port), ec);
  if (ec || results.empty()) {
    throw IoError("cannot resolve '" + options.address + "': " + ec.message());
  }
  const tcp::endpoint endpoint = results.begin()->endpoint();
  acceptor.open(endpoint.protocol(), ec);
  if (!ec) acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) acceptor.bind(endpoint, ec);
  if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) {
    throw IoError("cannot bind " + options.address + ":" + std::to_string(options.port) + ": " +
                  ec.message());
  }

  std::weak_ptr<Impl> weak = shared_from_this();
  subscription = session.subscribe([weak](const Snapshot& snapshot) {
    auto self = weak.lock();
    if (!self) return;
    std::lock_guard lock(self->snapshot_mutex);
    self->pending_snapshot = snapshot;
    if (self->broadcast_posted) return;
    self->broadcast_posted = true;
    asio::post(self->ioc, [self] { self->broadcast_latest(); });
  });

  accept();
  thread = std::thread([self = shared_from_this()] { self->ioc.run(); });
}

void Server::Impl::accept() {
  acceptor.async_accept([self = shared_from_this()](error_code ec, tcp::socket socket) {
    if (self->stopped) return;
    if (!ec) {
      error_code ignored;
      socket.set_option(tcp::no_delay(true), ignored);
      auto connection = std::make_shared<Connection>(self, std::move(socket));
      self->connections.insert(connection);
      connection->start();
    }
    self->accept();
  });
}

void Server::Impl::broadcast_latest() {
  std::optional<Snapshot> snapshot;
  {
    std::lock_guard lock(snapshot_mutex);
    snapshot.swap(pending_snapshot);
    broadcast_posted = false;
  }
  if (!snapshot || connections.empty()) return;
  const auto frame = std::make_shared<const std::string>(snapshot_frame(*snapshot));
  const auto targets = connections;
  for (const auto& c : targets) c->send_snapshot(frame);
}

void Server::Impl::shutdown() {
  stopped = true;
  error_code ignored;
  acceptor.close(ignored);
  const auto targets = connections;
  for (const auto& c : targets) c->close();
  connections.clear();
}

Server::Server(LiveSession& session, ServerOptions options)
    : impl_(std::make_shared<Impl>(session, std::move(options))) {
  impl_->start();
  port_ = impl_->acceptor.local_endpoint().port();
}

Server::~Server() { stop(); }

std::uint16_t Server::port() const { return port_; }

void Server::stop() {
  if (!impl_ || !impl_->thread.joinable()) return;
  impl_->session.unsubscribe(impl_->subscription);
  // Aborted operations complete first; the stop then ends run() even if a
  // handler re-armed something.
  asio::post(impl_->ioc, [impl = impl_] {
    impl->shutdown();
    asio::post(impl->ioc, [impl] { impl->ioc.stop(); });
  });
  impl_->thread.join();
}

}  // namespace hydrolab
