#include "natgrad/harness/checkpoint.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "natgrad/harness/config.hpp"

namespace natgrad::harness {

namespace {

constexpr std::string_view kMagic = "NATGRADCTL-POLICY v1";

void write_line(std::ostringstream& out, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) out << (i ? " " : "") << format_double(values[i]);
  out << "\n";
}

struct Token {
  std::string_view text;
  int line;
  int column;  // 1-based token index within the line
};

class TokenStream {
 public:
  explicit TokenStream(std::string_view text) {
    int line = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      std::string_view l = text.substr(pos, end - pos);
      if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
      lines_.push_back(l);
      ++line;
      pos = end + 1;
    }
  }

  std::string_view line(std::size_t i) const { return i < lines_.size() ? lines_[i] : std::string_view{}; }
  std::size_t line_count() const { return lines_.size(); }

  std::vector<Token> tokens_from(std::size_t first_line) const {
    std::vector<Token> out;
    for (std::size_t i = first_line; i < lines_.size(); ++i) {
      std::string_view l = lines_[i];
      int col = 0;
      std::size_t p = 0;
      while (p < l.size()) {
        p = l.find_first_not_of(" \t", p);
        if (p == std::string_view::npos) break;
        auto e = l.find_first_of(" \t", p);
        if (e == std::string_view::npos) e = l.size();
        out.push_back({l.substr(p, e - p), static_cast<int>(i + 1), ++col});
        p = e;
      }
    }
    return out;
  }

 private:
  std::vector<std::string_view> lines_;
};

[[noreturn]] void fail(const Token& tok, std::string_view why) {
  throw CheckpointError("checkpoint line " + std::to_string(tok.line) + " token " + std::to_string(tok.column) +
                        " '" + std::string(tok.text) + "': " + std::string(why));
}

double number(const Token& tok) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), v);
  if (ec != std::errc() || ptr != tok.text.data() + tok.text.size()) fail(tok, "not a number");
  if (!std::isfinite(v)) fail(tok, "not finite");
  return v;
}

int positive_int(const Token& tok) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), v);
  if (ec != std::errc() || ptr != tok.text.data() + tok.text.size() || v <= 0) fail(tok, "not a positive integer");
  return v;
}

}  // namespace

std::string format_checkpoint(const Policy& policy) {
  std::ostringstream out;
  out << kMagic << "\n";
  out << "arch " << (policy.is_rbf() ? "rbf" : "linear") << " obs " << policy.obs_dim() << " act "
      << policy.act_dim() << " feat " << policy.feature_dim() << "\n";
  if (const auto& f = policy.featurizer()) {
    out << format_double(f->bandwidth) << "\n";
    write_line(out, f->projection.data());
    write_line(out, f->phases);
  }
  write_line(out, policy.weights().data());
  write_line(out, policy.bias());
  write_line(out, policy.log_std());
  return out.str();
}

Policy parse_checkpoint(std::string_view text) {
  const TokenStream stream(text);
  if (stream.line(0) != kMagic) {
    const auto first = stream.tokens_from(0);
    if (first.empty()) throw CheckpointError("checkpoint is empty");
    fail(first.front(), "expected header '" + std::string(kMagic) + "'");
  }

  std::vector<Token> head;
  for (const auto& t : stream.tokens_from(1)) {
    if (t.line != 2) break;
    head.push_back(t);
  }
  if (head.size() != 8) {
    if (head.empty()) throw CheckpointError("checkpoint line 2: missing architecture line");
    fail(head.back(), "architecture line must read 'arch <linear|rbf> obs <n> act <m> feat <k>'");
  }
  static constexpr std::string_view kKeys[] = {"arch", "obs", "act", "feat"};
  for (std::size_t i = 0; i < 4; ++i) {
    if (head[2 * i].text != kKeys[i]) fail(head[2 * i], "expected '" + std::string(kKeys[i]) + "'");
  }
  const bool rbf = head[1].text == "rbf";
  if (!rbf && head[1].text != "linear") fail(head[1], "architecture must be linear or rbf");
  const int obs = positive_int(head[3]);
  const int act = positive_int(head[5]);
  const int feat = positive_int(head[7]);
  if (!rbf && feat != obs) fail(head[7], "linear policies need feat == obs");

  const auto body = stream.tokens_from(2);
  std::size_t at = 0;
  auto take = [&](std::size_t n) {
    Vec out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (at >= body.size()) {
        throw CheckpointError("checkpoint ends early: expected " + std::to_string(n - i) + " more values");
      }
      out.push_back(number(body[at++]));
    }
    return out;
  };

  Policy policy;
  const auto nf = static_cast<std::size_t>(feat);
  const auto na = static_cast<std::size_t>(act);
  if (rbf) {
    if (body.empty()) throw CheckpointError("checkpoint ends early: missing bandwidth");
    RbfFeaturizer f;
    const Token& bw_tok = body[at];
    f.bandwidth = take(1)[0];
    if (!(f.bandwidth > 0.0)) fail(bw_tok, "bandwidth must be positive");
    f.projection = Matrix(nf, static_cast<std::size_t>(obs));
    const Vec proj = take(f.projection.size());
    std::copy(proj.begin(), proj.end(), f.projection.data().begin());
    f.phases = take(nf);
    policy = Policy::rbf(obs, act, std::move(f));
  } else {
    policy = Policy::linear(obs, act);
  }
  const Vec w = take(na * nf);
  std::copy(w.begin(), w.end(), policy.weights().data().begin());
  policy.bias() = take(na);
  policy.log_std() = take(na);
  if (at != body.size()) fail(body[at], "unexpected trailing value");
  return policy;
}

void save_checkpoint(const Policy& policy, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  out << format_checkpoint(policy);
  if (!out) throw ConfigError("failed writing checkpoint '" + path + "'");
}

Policy load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace natgrad::harness
