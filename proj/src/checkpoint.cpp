#include "vlogdesk/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "vlogdesk/errors.hpp"
#include "vlogdesk/rng.hpp"

namespace vlogdesk {

namespace {

void write_u32(std::ofstream& f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ofstream& f, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    f.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t read_u32(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4))
        fail_data("checkpoint '" + path + "': truncated at byte " + std::to_string(f.tellg()));
    return b[0] | (b[1] << 8) | (b[2] << 16) | (uint32_t(b[3]) << 24);
}

uint64_t read_u64(std::ifstream& f, const std::string& path) {
    unsigned char b[8];
    if (!f.read(reinterpret_cast<char*>(b), 8))
        fail_data("checkpoint '" + path + "': truncated at byte " + std::to_string(f.tellg()));
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamSet& params, const nlohmann::json& meta) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail_data("cannot open checkpoint for writing: " + path);
    f.write(kCheckpointMagic, 8);
    write_u32(f, kCheckpointVersion);
    write_u32(f, static_cast<uint32_t>(params.items.size()));
    for (const auto& [name, t] : params.items) {
        write_u32(f, static_cast<uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(f, static_cast<uint32_t>(t.shape().size()));
        for (int d : t.shape()) write_u32(f, static_cast<uint32_t>(d));
        // Raw doubles; this code targets little-endian hosts.
        f.write(reinterpret_cast<const char*>(t.data().data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    const std::string m = meta.dump();
    write_u64(f, m.size());
    f.write(m.data(), static_cast<std::streamsize>(m.size()));
    if (!f) fail_data("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail_data("cannot open checkpoint: " + path);
    char magic[8];
    if (!f.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        fail_data("checkpoint '" + path + "': bad magic");
    const uint32_t version = read_u32(f, path);
    if (version != kCheckpointVersion)
        fail_data("checkpoint '" + path + "': unsupported version " + std::to_string(version));
    const uint32_t count = read_u32(f, path);
    Checkpoint ckpt;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = read_u32(f, path);
        std::string name(name_len, '\0');
        if (!f.read(name.data(), name_len)) fail_data("checkpoint '" + path + "': truncated name");
        const uint32_t ndim = read_u32(f, path);
        std::vector<int> shape(ndim);
        int64_t n = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            shape[d] = static_cast<int>(read_u32(f, path));
            n *= shape[d];
        }
        std::vector<double> data(static_cast<size_t>(n));
        if (!f.read(reinterpret_cast<char*>(data.data()),
                    static_cast<std::streamsize>(n * sizeof(double))))
            fail_data("checkpoint '" + path + "': truncated data for '" + name + "'");
        ckpt.params.add(name, Tensor::from_data(shape, std::move(data)));
    }
    const uint64_t meta_len = read_u64(f, path);
    std::string m(meta_len, '\0');
    if (!f.read(m.data(), static_cast<std::streamsize>(meta_len)))
        fail_data("checkpoint '" + path + "': truncated metadata");
    ckpt.meta = nlohmann::json::parse(m, nullptr, false);
    if (ckpt.meta.is_discarded()) fail_data("checkpoint '" + path + "': invalid metadata JSON");
    return ckpt;
}

uint64_t file_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail_data("cannot open file for hashing: " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
        h = fnv1a64(buf, static_cast<size_t>(f.gcount()), h);
        if (f.eof()) break;
    }
    return h;
}

}  // namespace vlogdesk
