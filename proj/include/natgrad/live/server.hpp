#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "natgrad/live/session.hpp"

namespace natgrad::live {

struct ServerOptions {
  fs::path checkpoint;
  SessionOptions session;
  fs::path ui_dir;  // empty: serve a placeholder page
  std::string address = "127.0.0.1";
  unsigned short port = 0;  // 0 picks a free port
  std::size_t max_pending_frames = 256;
  std::size_t max_pending_commands = 256;
};

/// WebSocket endpoint at /ws plus static files on the same port.
///
/// Each connection opens its own session and gets its own simulation thread.
/// Networking runs on one I/O thread.
class Server {
 public:
  explicit Server(ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts serving; returns the bound port.
  unsigned short start();
  void stop();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

/// Content type for a static file name.
std::string mime_type(const fs::path& path);

/// Maps a request target to a file under `root`; empty if the target escapes it.
std::optional<fs::path> resolve_static(const fs::path& root, std::string_view target);

}  // namespace natgrad::live
