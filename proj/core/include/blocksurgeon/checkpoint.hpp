#pragma once

#include <string>

#include "blocksurgeon/network.hpp"

namespace blocksurgeon {

// Checkpoint = <name>.json manifest (embedded config; per-tensor name, shape,
// byte offset) + <name>.bin single raw little-endian float64 blob.
void save_checkpoint(const Network& network, const std::string& dir,
                     const std::string& name);

Network load_checkpoint(const std::string& dir, const std::string& name);

}  // namespace blocksurgeon
