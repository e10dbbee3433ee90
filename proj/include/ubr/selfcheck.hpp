#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ubr/diffcore/grad_check.hpp"
#include "ubr/network.hpp"

namespace ubr {

struct NamedCheck {
  std::string name;
  diff::GradCheckReport report;
};

/// Finite-difference checks of every graph operation on inputs drawn from `seed`.
std::vector<NamedCheck> op_grad_checks(std::uint64_t seed, const diff::GradCheckOptions& options);

/// Full regressor followed by the training loss on a random g x m group.
NamedCheck network_grad_check(const NetworkConfig& config, std::size_t g, std::size_t m, std::uint64_t seed,
                              const diff::GradCheckOptions& options);

/// 12x12 input, two small stages; cheap enough to check every parameter.
NetworkConfig tiny_network_config();

}  // namespace ubr
