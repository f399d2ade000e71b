#ifndef HSPROTO_CHECKPOINT_HPP
#define HSPROTO_CHECKPOINT_HPP

#include <string>

#include "hsproto/model.hpp"

namespace hsproto {

// Versioned binary container: magic, format version, config digest, the
// config JSON itself, then named float32 tensors (little endian). Loading
// rebuilds the model from the embedded config and fills tensors by name;
// a stored digest that does not match the embedded config is rejected.
void save_checkpoint(const EmbedModel<float>& m, const std::string& path);
EmbedModel<float> load_checkpoint(const std::string& path);

}  // namespace hsproto

#endif
