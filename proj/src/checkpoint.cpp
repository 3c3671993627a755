#include "gcttt/checkpoint.hpp"

#include <string>

#include "gcttt/binio.hpp"
#include "gcttt/errors.hpp"

namespace gcttt::nn {

std::vector<std::uint8_t> snapshot(const Blob& blob) {
    binio::Writer w;
    w.bytes("GCTT");
    w.u16(kBlobVersion);
    w.u8(static_cast<std::uint8_t>(blob.role));
    w.u8(static_cast<std::uint8_t>(blob.params.activation));
    w.u32(static_cast<std::uint32_t>(blob.params.layer_dims.size()));
    for (std::size_t d : blob.params.layer_dims) w.u32(static_cast<std::uint32_t>(d));
    w.f64s(blob.params.weights);
    w.u32(static_cast<std::uint32_t>(blob.aux.size()));
    w.f64s(blob.aux);
    w.seal();
    return w.take();
}

std::vector<std::uint8_t> snapshot(const GaussianPolicy& policy) {
    return snapshot(Blob{BlobRole::policy, policy.net, policy.log_std});
}

Blob restore_blob(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    if (offset > bytes.size()) throw IntegrityError("blob: offset past end of data");
    binio::Reader r(bytes.subspan(offset));
    if (r.remaining() < 4 || r.bytes(4) != "GCTT") throw IntegrityError("blob: bad magic");
    const std::uint16_t version = r.u16();
    if (version != kBlobVersion) {
        throw IntegrityError("blob: unsupported version " + std::to_string(version));
    }
    Blob blob;
    const std::uint8_t role = r.u8();
    if (role < 1 || role > 5) throw IntegrityError("blob: unknown role tag " + std::to_string(role));
    blob.role = static_cast<BlobRole>(role);
    const std::uint8_t act = r.u8();
    if (act != 0) throw IntegrityError("blob: unknown activation tag");
    const std::uint32_t n_dims = r.u32();
    if (n_dims < 2 || n_dims > 64) throw IntegrityError("blob: implausible layer count");
    blob.params.layer_dims.resize(n_dims);
    for (auto& d : blob.params.layer_dims) {
        d = r.u32();
        if (d == 0) throw IntegrityError("blob: zero layer width");
    }
    const std::size_t n_weights = weight_count(blob.params.layer_dims);
    if (n_weights * sizeof(double) > r.remaining()) throw IntegrityError("blob: truncated weights");
    blob.params.weights.resize(n_weights);
    r.f64s(blob.params.weights);
    const std::uint32_t n_aux = r.u32();
    if (static_cast<std::size_t>(n_aux) * sizeof(double) > r.remaining()) throw IntegrityError("blob: truncated aux");
    blob.aux.resize(n_aux);
    r.f64s(blob.aux);
    r.check_crc(0, "blob");
    offset += r.position();
    return blob;
}

Blob restore_blob(std::span<const std::uint8_t> bytes) {
    std::size_t off = 0;
    Blob b = restore_blob(bytes, off);
    if (off != bytes.size()) throw IntegrityError("blob: trailing bytes");
    return b;
}

GaussianPolicy restore_policy(std::span<const std::uint8_t> bytes) {
    Blob b = restore_blob(bytes);
    if (b.role != BlobRole::policy) throw IntegrityError("blob: expected a policy blob");
    if (b.aux.size() != b.params.output_dim()) throw IntegrityError("blob: policy log_std has wrong length");
    return GaussianPolicy{std::move(b.params), std::move(b.aux)};
}

std::vector<Blob> read_blobs(std::span<const std::uint8_t> bytes) {
    std::vector<Blob> out;
    std::size_t off = 0;
    while (off < bytes.size()) out.push_back(restore_blob(bytes, off));
    if (out.empty()) throw IntegrityError("checkpoint: no blobs");
    return out;
}

void write_blobs(const std::string& path, std::span<const Blob> blobs) {
    std::vector<std::uint8_t> all;
    for (const Blob& b : blobs) {
        const auto bytes = snapshot(b);
        all.insert(all.end(), bytes.begin(), bytes.end());
    }
    binio::write_file(path, all);
}

std::vector<Blob> load_blobs(const std::string& path) { return read_blobs(binio::read_file(path)); }

}  // namespace gcttt::nn
