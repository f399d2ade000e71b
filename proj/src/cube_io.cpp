#include "hsproto/cube_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace hsproto {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "cube payload I/O assumes a little-endian host");

void validate_cube(const HyperCube& cube) {
    if (cube.height < 1 || cube.width < 1 || cube.channels < 1)
        throw ArgumentError("cube: height, width and channels must all be >= 1");
    if (cube.data.size() != cube.values())
        throw ArgumentError("cube: data holds " + std::to_string(cube.data.size()) +
                            " values, expected " + std::to_string(cube.values()));
    for (float v : cube.data)
        if (!std::isfinite(v)) throw ArgumentError("cube: data contains a non-finite value");
    if (!cube.band_centers.empty()) {
        if (cube.band_centers.size() != static_cast<size_t>(cube.channels))
            throw ArgumentError("cube: band_centers length does not equal channels");
        for (size_t i = 1; i < cube.band_centers.size(); ++i)
            if (!(cube.band_centers[i] > cube.band_centers[i - 1]))
                throw ArgumentError("cube: band_centers must be strictly increasing");
    }
    if (!cube.mask.empty() && cube.mask.size() != cube.pixels())
        throw ArgumentError("cube: mask dimensions do not equal height x width");
}

namespace {

std::vector<uint8_t> pack_mask(const std::vector<uint8_t>& mask) {
    std::vector<uint8_t> packed((mask.size() + 7) / 8, 0);
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) packed[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
    return packed;
}

std::vector<uint8_t> unpack_mask(const std::vector<uint8_t>& packed, size_t n) {
    std::vector<uint8_t> mask(n, 0);
    for (size_t i = 0; i < n; ++i) mask[i] = (packed[i / 8] >> (i % 8)) & 1u;
    return mask;
}

std::vector<uint8_t> read_all(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return bytes;
}

}  // namespace

HyperCube load_cube(const std::filesystem::path& path) { return load_cube(path, nullptr); }

HyperCube load_cube(const std::filesystem::path& path, std::string* label_out) {
    const std::filesystem::path meta_path = path.string() + ".json";
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw IoError("cannot open cube sidecar " + meta_path.string());
    json meta;
    try {
        meta_in >> meta;
    } catch (const json::exception& e) {
        throw DecodeError("cube sidecar " + meta_path.string() + ": " + e.what());
    }

    auto require_int = [&](const char* field) {
        if (!meta.contains(field) || !meta[field].is_number_integer())
            throw DecodeError("cube sidecar: missing or non-integer field '" +
                              std::string(field) + "'");
        return meta[field].get<int64_t>();
    };
    if (meta.value("format_version", 0) != 1)
        throw DecodeError("cube sidecar: unsupported format_version");
    const int64_t h = require_int("height");
    const int64_t w = require_int("width");
    const int64_t c = require_int("channels");
    if (h < 1 || w < 1 || c < 1)
        throw DecodeError("cube sidecar: height/width/channels must be >= 1");

    HyperCube cube(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));

    const auto payload = read_all(path);
    const size_t expected = cube.values() * sizeof(float);
    if (payload.size() != expected)
        throw DecodeError("cube payload: size is " + std::to_string(payload.size()) +
                          " bytes, header requires " + std::to_string(expected));

    // Band-sequential on disk -> channel-fastest in memory.
    const float* src = reinterpret_cast<const float*>(payload.data());
    for (int ch = 0; ch < cube.channels; ++ch)
        for (int r = 0; r < cube.height; ++r)
            for (int col = 0; col < cube.width; ++col) cube.at(r, col, ch) = *src++;

    for (float v : cube.data)
        if (!std::isfinite(v)) throw DecodeError("cube payload: contains a non-finite value");

    if (meta.contains("band_centers")) {
        if (!meta["band_centers"].is_array())
            throw DecodeError("cube sidecar: band_centers must be an array");
        cube.band_centers = meta["band_centers"].get<std::vector<double>>();
        if (cube.band_centers.size() != static_cast<size_t>(cube.channels))
            throw DecodeError("cube sidecar: band_centers length does not equal channels");
        for (size_t i = 1; i < cube.band_centers.size(); ++i)
            if (!(cube.band_centers[i] > cube.band_centers[i - 1]))
                throw DecodeError("cube sidecar: band_centers must be strictly increasing");
    }
    if (meta.contains("mask_file")) {
        const auto mask_path = path.parent_path() / meta["mask_file"].get<std::string>();
        const auto packed = read_all(mask_path);
        if (packed.size() != (cube.pixels() + 7) / 8)
            throw DecodeError("cube mask: file size does not match height x width");
        cube.mask = unpack_mask(packed, cube.pixels());
    }
    if (label_out) *label_out = meta.value("label", std::string());
    return cube;
}

void save_cube(const HyperCube& cube, const std::filesystem::path& path,
               const std::string& label) {
    if (path.empty()) throw IoError("save_cube: empty path");
    validate_cube(cube);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    std::vector<float> seq(cube.values());
    float* dst = seq.data();
    for (int ch = 0; ch < cube.channels; ++ch)
        for (int r = 0; r < cube.height; ++r)
            for (int col = 0; col < cube.width; ++col) *dst++ = cube.at(r, col, ch);
    out.write(reinterpret_cast<const char*>(seq.data()),
              static_cast<std::streamsize>(seq.size() * sizeof(float)));
    if (!out) throw IoError("write failed for " + path.string());
    out.close();

    json meta;
    meta["format_version"] = 1;
    meta["height"] = cube.height;
    meta["width"] = cube.width;
    meta["channels"] = cube.channels;
    if (!cube.band_centers.empty()) meta["band_centers"] = cube.band_centers;
    if (!label.empty()) meta["label"] = label;
    if (cube.has_mask()) {
        const std::string mask_name = path.filename().string() + ".mask";
        meta["mask_file"] = mask_name;
        const auto packed = pack_mask(cube.mask);
        std::ofstream mout(path.parent_path() / mask_name, std::ios::binary | std::ios::trunc);
        if (!mout) throw IoError("cannot write mask for " + path.string());
        mout.write(reinterpret_cast<const char*>(packed.data()),
                   static_cast<std::streamsize>(packed.size()));
        if (!mout) throw IoError("mask write failed for " + path.string());
    }
    std::ofstream mjson(path.string() + ".json", std::ios::trunc);
    if (!mjson) throw IoError("cannot write sidecar for " + path.string());
    mjson << meta.dump(2) << "\n";
    if (!mjson) throw IoError("sidecar write failed for " + path.string());
}

}  // namespace hsproto
