#include "natgrad/live/session.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <fstream>

#include "natgrad/harness/checkpoint.hpp"

namespace natgrad::live {

namespace {

constexpr double kMinRate = 0.1;
constexpr double kMaxRate = 10.0;
constexpr double kDefaultForceDuration = 0.5;

json vec_json(const Vec& v) { return json(v); }

Policy read_policy(const fs::path& path) {
  try {
    return harness::load_checkpoint(path.string());
  } catch (const std::exception& e) {
    throw SessionError("checkpoint", e.what());
  }
}

EnvSpec session_spec(const Policy& policy, const SessionOptions& options) {
  const auto implied = env_from_dims(policy.obs_dim(), policy.act_dim());
  if (!implied) {
    throw SessionError("checkpoint", "checkpoint dims obs " + std::to_string(policy.obs_dim()) + " act " +
                                         std::to_string(policy.act_dim()) + " match no environment");
  }
  if (options.env && *options.env != *implied) {
    throw SessionError("checkpoint", "checkpoint is for " + std::string(to_string(*implied)) + ", not " +
                                         std::string(to_string(*options.env)));
  }
  EnvSpec spec = make_env_spec(*implied, options.init_mode, false);
  spec.horizon = INT_MAX;
  return spec;
}

bool is_checkpoint_file(const fs::path& path) {
  std::ifstream in(path);
  std::string first;
  return in && std::getline(in, first) && first.rfind("NATGRADCTL-POLICY", 0) == 0;
}

const json& payload_of(const json& message) {
  static const json empty = json::object();
  const auto it = message.find("payload");
  return it == message.end() || it->is_null() ? empty : *it;
}

double number_field(const json& payload, const char* key) {
  const auto it = payload.find(key);
  if (it == payload.end() || !it->is_number()) {
    throw SessionError("bad_payload", std::string("payload field '") + key + "' must be a number");
  }
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw SessionError("bad_payload", std::string("payload field '") + key + "' not finite");
  return v;
}

}  // namespace

json error_message(std::string_view code, std::string_view message, const json& command_id) {
  json e = {{"type", "error"}, {"code", code}, {"message", message}};
  if (!command_id.is_null()) e["command_id"] = command_id;
  return e;
}

Rng Session::reset_stream(std::uint64_t seed, std::uint64_t reset_index) {
  return Rng(seed).split(0x11fe).split(reset_index);
}

Session::Session(std::string id, const fs::path& checkpoint, const SessionOptions& options)
    : id_(std::move(id)),
      checkpoint_dir_(options.checkpoint_dir.empty() ? checkpoint.parent_path() : options.checkpoint_dir),
      checkpoint_id_(checkpoint.filename().string()),
      policy_(read_policy(checkpoint)),
      spec_(session_spec(policy_, options)),
      seed_(options.seed) {
  do_reset(options.init_mode);
}

void Session::do_reset(InitMode mode) {
  spec_.init_mode = mode;
  stream_ = reset_stream(seed_, resets_++);
  state_ = reset(spec_, stream_);
  forces_.clear();
  return_ = 0.0;
}

std::vector<std::string> Session::list_checkpoints() const {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(checkpoint_dir_, ec)) {
    if (entry.is_regular_file() && is_checkpoint_file(entry.path())) out.push_back(entry.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

json Session::hello() const {
  return {{"type", "hello"},
          {"session_id", id_},
          {"env_id", to_string(spec_.id)},
          {"obs_dim", spec_.obs_dim},
          {"act_dim", spec_.act_dim},
          {"force_dim", spec_.force_dim},
          {"force_cap", force_cap(spec_.id)},
          {"dt", spec_.dt},
          {"horizon", "unbounded"},
          {"termination", false},
          {"init_mode", to_string(spec_.init_mode)},
          {"checkpoint", checkpoint_id_},
          {"checkpoints", list_checkpoints()},
          {"frame", frame_},
          {"mode", running_ ? "running" : "paused"},
          {"stochastic", stochastic_},
          {"rate", rate_},
          {"q", vec_json(state_.q)},
          {"v", vec_json(state_.v)}};
}

json Session::ack(const json& command_id) const {
  return {{"type", "ack"}, {"command_id", command_id}, {"effective_frame", frame_}};
}

std::vector<json> Session::handle_message(std::string_view text) {
  json message = json::parse(text, nullptr, false);
  if (message.is_discarded() || !message.is_object()) return {error_message("bad_json", "message is not a JSON object")};
  const auto type = message.find("type");
  if (type == message.end() || !type->is_string()) return {error_message("bad_json", "message has no string 'type'")};
  if (*type == "hello_ack") return {};
  if (*type == "command") return {handle_command(message)};
  return {error_message("unknown_kind", "unknown message type '" + type->get<std::string>() + "'")};
}

json Session::handle_command(const json& message) {
  const json command_id = message.value("command_id", json());
  const auto kind_it = message.find("kind");
  if (kind_it == message.end() || !kind_it->is_string()) {
    return error_message("bad_payload", "command has no string 'kind'", command_id);
  }
  const std::string kind = *kind_it;
  const json& payload = payload_of(message);
  if (!payload.is_object()) return error_message("bad_payload", "payload must be an object", command_id);

  try {
    if (kind == "pause") {
      running_ = false;
      return ack(command_id);
    }
    if (kind == "resume") {
      running_ = true;
      return ack(command_id);
    }
    if (kind == "reset") {
      InitMode mode = spec_.init_mode;
      if (const auto it = payload.find("init_mode"); it != payload.end()) {
        if (!it->is_string()) throw SessionError("bad_payload", "init_mode must be a string");
        try {
          mode = parse_init_mode(it->get<std::string>());
        } catch (const std::exception& e) {
          throw SessionError("bad_payload", e.what());
        }
      }
      do_reset(mode);
      json a = ack(command_id);
      a["q"] = vec_json(state_.q);
      a["v"] = vec_json(state_.v);
      return a;
    }
    if (kind == "set_rate") {
      const double r = number_field(payload, "rate");
      if (r < kMinRate || r > kMaxRate) throw SessionError("bad_payload", "rate must lie in [0.1, 10]");
      rate_ = r;
      return ack(command_id);
    }
    if (kind == "set_stochastic") {
      const auto it = payload.find("enabled");
      if (it == payload.end() || !it->is_boolean()) throw SessionError("bad_payload", "enabled must be a boolean");
      stochastic_ = it->get<bool>();
      return ack(command_id);
    }
    if (kind == "apply_force") {
      const auto it = payload.find("force");
      if (it == payload.end() || !it->is_array()) throw SessionError("bad_payload", "force must be an array");
      Vec force;
      for (const auto& x : *it) {
        if (!x.is_number() || !std::isfinite(x.get<double>())) {
          throw SessionError("bad_payload", "force entries must be finite numbers");
        }
        force.push_back(x.get<double>());
      }
      if (static_cast<int>(force.size()) != spec_.force_dim) {
        throw SessionError("bad_payload", "force needs " + std::to_string(spec_.force_dim) + " components");
      }
      double duration = kDefaultForceDuration;
      if (payload.contains("duration")) duration = number_field(payload, "duration");
      if (duration < 0.0) throw SessionError("bad_payload", "duration must be non-negative");
      const double cap = force_cap(spec_.id);
      if (norm(force) > cap) {
        throw SessionError("force_cap", "force magnitude " + std::to_string(norm(force)) + " exceeds the cap " +
                                            std::to_string(cap) + " for " + std::string(to_string(spec_.id)));
      }
      forces_.push_back({std::move(force), state_.t * spec_.dt, duration});
      return ack(command_id);
    }
    if (kind == "load_policy") {
      const auto it = payload.find("checkpoint");
      if (it == payload.end() || !it->is_string()) throw SessionError("bad_payload", "checkpoint must be a string");
      const fs::path name = it->get<std::string>();
      if (name.empty() || name.has_parent_path() || name.filename() != name) {
        throw SessionError("checkpoint", "checkpoint must be a file name inside the checkpoint directory");
      }
      Policy next = read_policy(checkpoint_dir_ / name);
      if (next.obs_dim() != policy_.obs_dim() || next.act_dim() != policy_.act_dim()) {
        throw SessionError("checkpoint", "checkpoint dims do not match " + std::string(to_string(spec_.id)));
      }
      policy_ = std::move(next);
      checkpoint_id_ = name.string();
      return ack(command_id);
    }
  } catch (const SessionError& e) {
    return error_message(e.code(), e.what(), command_id);
  }
  return error_message("unknown_kind", "unknown command kind '" + kind + "'", command_id);
}

void Session::prune_forces() {
  const int t = state_.t;
  std::erase_if(forces_, [&](const PerturbationEvent& e) {
    const auto first = static_cast<long long>(std::ceil(e.start_time / spec_.dt - 1e-9));
    const auto count = static_cast<long long>(std::ceil(e.duration / spec_.dt - 1e-9));
    return t >= first + count;
  });
}

json Session::advance() {
  const Vec obs = observe(spec_, state_);
  Vec action = stochastic_ ? policy_.sample(obs, stream_).action : policy_.mean_action(obs);
  bool perturbed = false;
  for (const auto& f : forces_) perturbed = perturbed || f.active_at(state_.t, spec_.dt);
  const int t = state_.t;
  StepResult r = step(spec_, state_, action, forces_);
  state_ = std::move(r.next);
  return_ += r.reward;
  prune_forces();
  json frame = {{"type", "frame"},
                {"frame", frame_},
                {"time", t * spec_.dt},
                {"q", vec_json(state_.q)},
                {"v", vec_json(state_.v)},
                {"action", vec_json(action)},
                {"reward", r.reward},
                {"return", return_},
                {"perturbed", perturbed}};
  ++frame_;
  return frame;
}

json Session::pause_for_backpressure() {
  running_ = false;
  return {{"type", "paused"}, {"reason", "backpressure"}, {"frame", frame_}};
}

SessionDriver::SessionDriver(Session session, std::size_t max_pending_frames)
    : session_(std::move(session)), max_pending_frames_(max_pending_frames) {
  if (max_pending_frames_ == 0) throw ContractViolation("frame buffer must hold at least one frame");
}

void SessionDriver::push(const json& message) {
  const bool is_frame = message.value("type", "") == "frame";
  outbox_.emplace_back(message.dump(), is_frame);
  if (is_frame) ++pending_frames_;
}

void SessionDriver::receive(std::string_view text) {
  for (const auto& reply : session_.handle_message(text)) push(reply);
}

void SessionDriver::tick() {
  if (!session_.running()) return;
  if (pending_frames_ >= max_pending_frames_) {
    push(session_.pause_for_backpressure());
    return;
  }
  push(session_.advance());
}

std::optional<std::string> SessionDriver::pop() {
  if (outbox_.empty()) return std::nullopt;
  auto [text, is_frame] = std::move(outbox_.front());
  outbox_.pop_front();
  if (is_frame) --pending_frames_;
  return std::move(text);
}

}  // namespace natgrad::live
