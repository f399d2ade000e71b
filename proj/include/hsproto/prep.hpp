#ifndef HSPROTO_PREP_HPP
#define HSPROTO_PREP_HPP

#include <vector>

#include "hsproto/cube.hpp"

namespace hsproto {

// Drops `head` leading and `tail` trailing channels; band_centers are sliced
// identically. Requires head + tail < C.
HyperCube trim_channels(const HyperCube& cube, int head, int tail);

// Averages every `factor` consecutive channels; factor must divide C exactly
// (no partial trailing group). Grouped band_centers are averaged.
HyperCube average_reduce_channels(const HyperCube& cube, int factor);

// Full-fit square windows at offsets {0, stride, 2*stride, ...} per axis,
// row-major over offsets. Masks and band metadata are carried through.
std::vector<HyperCube> crop_windows(const HyperCube& cube, int window, int stride);

// Keeps crops whose foreground fraction >= threshold, order preserved.
// Every crop must carry a mask.
std::vector<HyperCube> density_filter(const std::vector<HyperCube>& crops, double threshold);

// Optional prep step: per-cube min-max scaling to [0,1]; a constant cube maps
// to all zeros.
HyperCube minmax_normalize(const HyperCube& cube);

}  // namespace hsproto

#endif
