#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "natgrad/envs.hpp"
#include "natgrad/policies.hpp"

namespace natgrad::live {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct SessionOptions {
  std::optional<EnvId> env;  // defaults to the env implied by the checkpoint dims
  InitMode init_mode = InitMode::narrow;
  std::uint64_t seed = 0;
  fs::path checkpoint_dir;  // defaults to the checkpoint's own directory
};

/// Error raised while opening a session. `code` is the wire error code.
class SessionError : public std::runtime_error {
 public:
  SessionError(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

/// One interactive rollout: a state machine with no threads and no I/O.
///
/// Sessions run unbounded with termination disabled. The policy acts in mean
/// mode unless stochastic mode is switched on. Commands change the session
/// only between steps; every accepted command is acknowledged with the frame
/// index of the next step, which is the first step it can influence.
///
/// Reset number k draws from reset_stream(seed, k); in stochastic mode the
/// action noise continues on the same stream, so an episode without resets
/// reproduces rollout(policy, spec, reset_stream(seed, 0), ...) exactly.
class Session {
 public:
  Session(std::string id, const fs::path& checkpoint, const SessionOptions& options);

  static Rng reset_stream(std::uint64_t seed, std::uint64_t reset_index);

  const std::string& id() const { return id_; }
  const EnvSpec& spec() const { return spec_; }
  const EnvState& state() const { return state_; }
  const Policy& policy() const { return policy_; }
  const std::string& checkpoint_id() const { return checkpoint_id_; }
  long frame() const { return frame_; }
  bool running() const { return running_; }
  bool stochastic() const { return stochastic_; }
  double rate() const { return rate_; }
  double cumulative_return() const { return return_; }
  const std::vector<PerturbationEvent>& pending_forces() const { return forces_; }

  /// Wall-clock seconds between frames at the current rate.
  double frame_period() const { return spec_.dt / rate_; }

  json hello() const;

  /// Parses one client message and returns the replies to send (possibly none).
  std::vector<json> handle_message(std::string_view text);

  /// Applies a parsed `command` message; returns an ack or an error reply.
  json handle_command(const json& message);

  /// Advances one step and returns its frame message.
  json advance();

  /// Pauses because the consumer fell behind; returns the paused notice.
  json pause_for_backpressure();

  std::vector<std::string> list_checkpoints() const;

 private:
  json ack(const json& command_id) const;
  void do_reset(InitMode mode);
  void prune_forces();

  std::string id_;
  fs::path checkpoint_dir_;
  std::string checkpoint_id_;
  Policy policy_;
  EnvSpec spec_;
  std::uint64_t seed_ = 0;
  std::uint64_t resets_ = 0;
  Rng stream_;
  EnvState state_;
  std::vector<PerturbationEvent> forces_;
  long frame_ = 0;
  double return_ = 0.0;
  double rate_ = 1.0;
  bool running_ = false;
  bool stochastic_ = false;
};

json error_message(std::string_view code, std::string_view message, const json& command_id = nullptr);

/// Couples a session with a bounded queue of unsent frames. When the queue is
/// full the session pauses and a paused notice is queued instead of a frame,
/// so no frame is ever dropped. Notices and replies do not count toward the bound.
class SessionDriver {
 public:
  SessionDriver(Session session, std::size_t max_pending_frames);

  Session& session() { return session_; }
  const Session& session() const { return session_; }

  /// Queues the replies to one client message.
  void receive(std::string_view text);

  /// One simulation tick: a frame if running and there is room, a paused
  /// notice if running and the queue is full, nothing if paused.
  void tick();

  /// Removes and returns the next outgoing message.
  std::optional<std::string> pop();
  std::size_t pending_frames() const { return pending_frames_; }
  std::size_t pending() const { return outbox_.size(); }

  /// Queues a server-originated message such as hello or an error.
  void push(const json& message);

 private:
  Session session_;
  std::size_t max_pending_frames_;
  std::size_t pending_frames_ = 0;
  std::deque<std::pair<std::string, bool>> outbox_;  // (text, is_frame)
};

}  // namespace natgrad::live
