#ifndef HSPROTO_CUBE_IO_HPP
#define HSPROTO_CUBE_IO_HPP

#include <filesystem>
#include <string>

#include "hsproto/cube.hpp"

namespace hsproto {

// On-disk cube format, version 1:
//   <name>.hsc       raw band-sequential payload: for each channel, each row,
//                    each column, one little-endian float32
//   <name>.hsc.json  metadata: height, width, channels, format_version,
//                    optional band_centers, optional mask_file, optional label
//   <name>.hsc.mask  packed foreground bits, row-major, LSB-first within each
//                    byte (written only when the cube has a mask)

// Decodes a cube; throws DecodeError naming the offending field on a malformed
// header, payload-size mismatch, or non-finite value, IoError on missing files.
HyperCube load_cube(const std::filesystem::path& path);

// Returns the sidecar 'label' field if present, else empty.
HyperCube load_cube(const std::filesystem::path& path, std::string* label_out);

// Validates the cube, then writes payload + sidecar (+ mask file if present).
// Round-trips the raster bit-exactly.
void save_cube(const HyperCube& cube, const std::filesystem::path& path,
               const std::string& label = "");

}  // namespace hsproto

#endif
