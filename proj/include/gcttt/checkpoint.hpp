#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gcttt/nn.hpp"

namespace gcttt::nn {

enum class BlobRole : std::uint8_t {
    policy = 1,
    q = 2,
    v = 3,
    q_target = 4,
    v_target = 5,
};

inline constexpr std::uint16_t kBlobVersion = 1;

/// One parameter blob:
///
///   "GCTT" | u16 version | u8 role | u8 activation | u32 n_dims | u32 dims[n_dims]
///   | f64 weights[weight_count(dims)] | u32 n_aux | f64 aux[n_aux] | u32 crc32
///
/// All integers and reals little-endian; the CRC covers every preceding byte of
/// the blob. `aux` carries the policy log_std (empty for critic networks).
struct Blob {
    BlobRole role = BlobRole::policy;
    ParamStore params;
    std::vector<double> aux;
};

std::vector<std::uint8_t> snapshot(const Blob& blob);
std::vector<std::uint8_t> snapshot(const GaussianPolicy& policy);

/// Decodes one blob starting at `bytes[offset]`; advances `offset` past it.
Blob restore_blob(std::span<const std::uint8_t> bytes, std::size_t& offset);
Blob restore_blob(std::span<const std::uint8_t> bytes);
GaussianPolicy restore_policy(std::span<const std::uint8_t> bytes);

/// A checkpoint file is a plain concatenation of blobs.
std::vector<Blob> read_blobs(std::span<const std::uint8_t> bytes);
void write_blobs(const std::string& path, std::span<const Blob> blobs);
std::vector<Blob> load_blobs(const std::string& path);

}  // namespace gcttt::nn
