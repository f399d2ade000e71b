#include "hsproto/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "hsproto/error.hpp"

namespace hsproto {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t get_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw DecodeError("checkpoint: truncated file");
    return v;
}
uint64_t get_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw DecodeError("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const EmbedModel<float>& m, const std::string& path) {
    static_assert(std::endian::native == std::endian::little);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u64(os, m.cfg.digest());
    const std::string cfg = m.cfg.to_json().dump();
    put_u32(os, static_cast<uint32_t>(cfg.size()));
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    uint32_t count = 0;
    m.for_each_tensor([&](const std::string&, const std::vector<float>&) { ++count; });
    put_u32(os, count);
    m.for_each_tensor([&](const std::string& name, const std::vector<float>& v) {
        put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u64(os, v.size());
        os.write(reinterpret_cast<const char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(float)));
    });
    if (!os) throw IoError("checkpoint: write failed for '" + path + "'");
}

EmbedModel<float> load_checkpoint(const std::string& path) {
    static_assert(std::endian::native == std::endian::little);
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw DecodeError("checkpoint: bad magic in '" + path + "'");
    const uint32_t version = get_u32(is);
    if (version != kVersion)
        throw DecodeError("checkpoint: unsupported version " + std::to_string(version));
    const uint64_t stored_digest = get_u64(is);
    const uint32_t cfg_len = get_u32(is);
    std::string cfg_str(cfg_len, '\0');
    is.read(cfg_str.data(), cfg_len);
    if (!is) throw DecodeError("checkpoint: truncated config");
    ModelConfig cfg;
    try {
        cfg = ModelConfig::from_json(nlohmann::json::parse(cfg_str));
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError(std::string("checkpoint: bad config json: ") + e.what());
    }
    if (cfg.digest() != stored_digest)
        throw DigestError("checkpoint: stored digest does not match embedded config");
    EmbedModel<float> m = EmbedModel<float>::build(cfg);
    std::map<std::string, std::vector<float>> tensors;
    const uint32_t count = get_u32(is);
    for (uint32_t t = 0; t < count; ++t) {
        const uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const uint64_t n = get_u64(is);
        std::vector<float> v(n);
        is.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
        if (!is) throw DecodeError("checkpoint: truncated tensor '" + name + "'");
        tensors.emplace(std::move(name), std::move(v));
    }
    size_t used = 0;
    m.for_each_tensor([&](const std::string& name, std::vector<float>& v) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw DecodeError("checkpoint: missing tensor '" + name + "'");
        if (it->second.size() != v.size())
            throw DecodeError("checkpoint: tensor '" + name + "' has " +
                              std::to_string(it->second.size()) + " values, expected " +
                              std::to_string(v.size()));
        v = it->second;
        ++used;
    });
    if (used != tensors.size())
        throw DecodeError("checkpoint: file contains tensors the config does not declare");
    return m;
}

}  // namespace hsproto
