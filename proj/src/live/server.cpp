#include "natgrad/live/server.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "natgrad/errors.hpp"

namespace natgrad::live {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

namespace {

constexpr const char* kPlaceholder =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>natgradctl</title></head>"
    "<body><p>natgradctl live service. Connect a WebSocket client to <code>/ws</code>.</p></body></html>";

// State shared by a connection (I/O thread) and its simulation thread.
struct Channel {
  std::mutex m;
  std::condition_variable cv;
  std::deque<std::string> inbox;
  std::optional<SessionDriver> driver;
  bool closed = false;
  std::function<void()> kick;  // asks the I/O thread to flush the outbox

  void close() {
    {
      std::lock_guard lk(m);
      closed = true;
    }
    cv.notify_all();
  }
};

void simulate(const std::shared_ptr<Channel>& ch) {
  using clock = std::chrono::steady_clock;
  auto next = clock::now();
  std::unique_lock lk(ch->m);
  while (!ch->closed) {
    bool produced = false;
    while (!ch->inbox.empty()) {
      ch->driver->receive(ch->inbox.front());
      ch->inbox.pop_front();
      produced = true;
    }
    Session& s = ch->driver->session();
    const auto now = clock::now();
    if (!s.running()) {
      next = now;
    } else if (now >= next) {
      ch->driver->tick();
      produced = true;
      next += std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(s.frame_period()));
      if (next + std::chrono::milliseconds(250) < now) next = now;
    }
    if (produced) {
      lk.unlock();
      ch->kick();
      lk.lock();
      continue;
    }
    if (s.running()) {
      ch->cv.wait_until(lk, next);
    } else {
      ch->cv.wait(lk);
    }
  }
}

}  // namespace

std::string mime_type(const fs::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript; charset=utf-8";
  if (ext == ".css") return "text/css; charset=utf-8";
  if (ext == ".json" || ext == ".map") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  if (ext == ".wasm") return "application/wasm";
  if (ext == ".txt") return "text/plain; charset=utf-8";
  return "application/octet-stream";
}

std::optional<fs::path> resolve_static(const fs::path& root, std::string_view target) {
  std::string_view path = target.substr(0, target.find_first_of("?#"));
  if (path.empty() || path.front() != '/') return std::nullopt;
  fs::path rel = fs::path(std::string(path.substr(1))).lexically_normal();
  if (rel.empty() || rel == ".") rel = "index.html";
  for (const auto& part : rel) {
    if (part == "..") return std::nullopt;
  }
  if (rel.is_absolute()) return std::nullopt;
  return root / rel;
}

struct Server::Impl {
  ServerOptions options;
  asio::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::thread io_thread;
  std::mutex m;
  std::condition_variable stopped_cv;
  bool stopped = false;
  bool started = false;
  std::vector<std::pair<std::shared_ptr<Channel>, std::thread>> sims;
  std::atomic<long> session_counter{0};

  explicit Impl(ServerOptions o) : options(std::move(o)) {}

  void accept();
  void spawn(std::shared_ptr<Channel> ch) {
    std::lock_guard lk(m);
    if (stopped) {
      ch->close();
      return;
    }
    std::erase_if(sims, [](auto& entry) {
      {
        std::lock_guard clk(entry.first->m);
        if (!entry.first->closed) return false;
      }
      entry.second.join();
      return true;
    });
    sims.emplace_back(ch, std::thread(simulate, ch));
  }
  http::response<http::string_body> static_response(const http::request<http::string_body>& req) const;
};

namespace {

class WsConnection : public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(tcp::socket socket, Server::Impl& server) : ws_(std::move(socket)), server_(server) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.text(true);
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

  ~WsConnection() {
    if (channel_) channel_->close();
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    const std::string id = "s" + std::to_string(++server_.session_counter);
    try {
      Session session(id, server_.options.checkpoint, server_.options.session);
      channel_ = std::make_shared<Channel>();
      channel_->driver.emplace(std::move(session), server_.options.max_pending_frames);
      channel_->driver->push(channel_->driver->session().hello());
    } catch (const SessionError& e) {
      fatal_ = std::make_shared<std::string>(error_message(e.code(), e.what()).dump());
      ws_.async_write(asio::buffer(*fatal_), [self = shared_from_this()](beast::error_code, std::size_t) {
        self->ws_.async_close(websocket::close_code::policy_error, [self](beast::error_code) {});
      });
      return;
    }
    std::weak_ptr<WsConnection> weak = shared_from_this();
    auto executor = ws_.get_executor();
    channel_->kick = [weak, executor] {
      asio::post(executor, [weak] {
        if (auto self = weak.lock()) self->flush();
      });
    };
    flush();
    server_.spawn(channel_);
    read();
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->channel_->close();
        return;
      }
      std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      bool rejected = false;
      {
        std::lock_guard lk(self->channel_->m);
        if (self->channel_->inbox.size() >= self->server_.options.max_pending_commands) {
          self->channel_->driver->push(error_message("busy", "too many pending commands"));
          rejected = true;
        } else {
          self->channel_->inbox.push_back(std::move(text));
        }
      }
      if (rejected) {
        self->flush();
      } else {
        self->channel_->cv.notify_all();
      }
      self->read();
    });
  }

  void flush() {
    if (writing_) return;
    std::optional<std::string> next;
    {
      std::lock_guard lk(channel_->m);
      next = channel_->driver->pop();
    }
    if (!next) return;
    writing_ = true;
    out_ = std::move(*next);
    ws_.async_write(asio::buffer(out_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->writing_ = false;
      if (ec) {
        self->channel_->close();
        return;
      }
      self->flush();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  Server::Impl& server_;
  beast::flat_buffer buffer_;
  std::shared_ptr<Channel> channel_;
  std::shared_ptr<std::string> fatal_;
  std::string out_;
  bool writing_ = false;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket socket, Server::Impl& server) : stream_(std::move(socket)), server_(server) {}

  void run() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

 private:
  void on_read(beast::error_code ec) {
    if (ec) return;
    const std::string_view target(req_.target().data(), req_.target().size());
    if (websocket::is_upgrade(req_)) {
      if (target.substr(0, target.find('?')) == "/ws") {
        stream_.expires_never();
        std::make_shared<WsConnection>(stream_.release_socket(), server_)->run(std::move(req_));
        return;
      }
    }
    res_ = server_.static_response(req_);
    http::async_write(stream_, res_, [self = shared_from_this()](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  beast::tcp_stream stream_;
  Server::Impl& server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  http::response<http::string_body> res_;
};

}  // namespace

http::response<http::string_body> Server::Impl::static_response(const http::request<http::string_body>& req) const {
  auto respond = [&](http::status status, std::string body, const std::string& type) {
    http::response<http::string_body> res{status, req.version()};
    res.set(http::field::server, "natgradctl");
    res.set(http::field::content_type, type);
    res.keep_alive(false);
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  };
  if (req.method() != http::verb::get && req.method() != http::verb::head) {
    return respond(http::status::method_not_allowed, "method not allowed\n", "text/plain");
  }
  const std::string_view target(req.target().data(), req.target().size());
  if (options.ui_dir.empty()) {
    if (target.substr(0, target.find('?')) == "/") return respond(http::status::ok, kPlaceholder, mime_type("x.html"));
    return respond(http::status::not_found, "not found\n", "text/plain");
  }
  const auto path = resolve_static(options.ui_dir, target);
  if (!path) return respond(http::status::bad_request, "bad path\n", "text/plain");
  std::ifstream in(*path, std::ios::binary);
  if (!in || fs::is_directory(*path)) return respond(http::status::not_found, "not found\n", "text/plain");
  std::ostringstream body;
  body << in.rdbuf();
  return respond(http::status::ok, body.str(), mime_type(*path));
}

void Server::Impl::accept() {
  acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      if (ec == asio::error::operation_aborted) return;
    } else {
      std::make_shared<HttpConnection>(std::move(socket), *this)->run();
    }
    accept();
  });
}

Server::Server(ServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Server::~Server() { stop(); }

unsigned short Server::start() {
  if (impl_->started) throw ContractViolation("server already started");
  // Fail fast on a bad checkpoint instead of at the first connection.
  Session probe("probe", impl_->options.checkpoint, impl_->options.session);
  const auto address = asio::ip::make_address(impl_->options.address);
  tcp::endpoint endpoint{address, impl_->options.port};
  auto& acc = impl_->acceptor;
  acc.open(endpoint.protocol());
  acc.set_option(asio::socket_base::reuse_address(true));
  acc.bind(endpoint);
  acc.listen(asio::socket_base::max_listen_connections);
  const unsigned short port = acc.local_endpoint().port();
  impl_->started = true;
  impl_->accept();
  impl_->io_thread = std::thread([this] { impl_->ioc.run(); });
  return port;
}

void Server::stop() {
  std::vector<std::pair<std::shared_ptr<Channel>, std::thread>> sims;
  {
    std::lock_guard lk(impl_->m);
    if (impl_->stopped) return;
    impl_->stopped = true;
    sims.swap(impl_->sims);
  }
  impl_->stopped_cv.notify_all();
  for (auto& [ch, th] : sims) ch->close();
  for (auto& [ch, th] : sims) {
    if (th.joinable()) th.join();
  }
  impl_->ioc.stop();
  if (impl_->io_thread.joinable()) impl_->io_thread.join();
}

void Server::wait() {
  std::unique_lock lk(impl_->m);
  impl_->stopped_cv.wait(lk, [&] { return impl_->stopped; });
}

}  // namespace natgrad::live
