#ifndef HSPROTO_COMMANDS_HPP
#define HSPROTO_COMMANDS_HPP

#include <iosfwd>

#include <json.hpp>

#include "hsproto/runconfig.hpp"

namespace hsproto {

// One pipeline stage each. Every command validates the config up front,
// writes its artifacts plus a <name>_result.json under cfg.out_dir, prints a
// one-line summary to `out`, and returns the result document. The summary is
// the only place timing appears; result documents stay byte-identical across
// reruns of the same config and seed.
nlohmann::json cmd_synth(const RunConfig& cfg, std::ostream& out);
nlohmann::json cmd_prep(const RunConfig& cfg, std::ostream& out);
nlohmann::json cmd_train(const RunConfig& cfg, std::ostream& out);
nlohmann::json cmd_ccp(const RunConfig& cfg, std::ostream& out);
nlohmann::json cmd_eval(const RunConfig& cfg, std::ostream& out);
nlohmann::json cmd_report(const RunConfig& cfg, std::ostream& out);

}  // namespace hsproto

#endif
