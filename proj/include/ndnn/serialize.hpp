#pragma once

#include <filesystem>
#include <string>

#include "ndnn/trainer.hpp"

namespace ndnn {

/// `.ndnn` blob: 8-byte magic "NDNNMLP\0", u32 LE header length, JSON header
/// {spec, tensors: [{name, offset, count}]}, then little-endian f64 payload in
/// for_each_tensor order (running statistics included).
std::string encode_mlp(const MlpParams& p);
MlpParams decode_mlp(std::string_view bytes);

/// Checkpoint container: 8-byte magic "NDNNGRF\0", u32 LE header length, JSON
/// header {system, graph_spec, networks: [{name, offset, length}]}, then the
/// concatenated `.ndnn` blobs (offsets relative to the end of the header).
std::string encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace ndnn
