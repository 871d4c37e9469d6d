#pragma once

#include <string>
#include <string_view>

#include "natgrad/errors.hpp"
#include "natgrad/policies.hpp"

namespace natgrad::harness {

/// Malformed checkpoint text. The message names the first bad token.
class CheckpointError : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

// Layout (one section per line, values separated by single spaces, %.17g):
//
//   NATGRADCTL-POLICY v1
//   arch {linear|rbf} obs <n> act <m> feat <k>
//   <bandwidth>               rbf only
//   <projection, row-major>   rbf only
//   <phases>                  rbf only
//   <W, row-major>
//   <b>
//   <log_std>
std::string format_checkpoint(const Policy& policy);
Policy parse_checkpoint(std::string_view text);

void save_checkpoint(const Policy& policy, const std::string& path);
Policy load_checkpoint(const std::string& path);

}  // namespace natgrad::harness
