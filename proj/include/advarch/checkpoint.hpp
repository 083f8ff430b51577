#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "advarch/network.hpp"

namespace advarch {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "ADVARCH\x01";

/// Layout: 8-byte magic, u32 little-endian manifest length, JSON manifest, then the
/// parameters followed by the buffers as little-endian f32 blobs in manifest order.
/// The manifest carries version, config, dtype and per-tensor name, kind, shape,
/// byte offset (relative to the blob section) and byte length.
std::string serialize_checkpoint(const NetworkF& net);
NetworkF deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const NetworkF& net, const std::string& path);
NetworkF load_checkpoint(const std::string& path);

}  // namespace advarch
