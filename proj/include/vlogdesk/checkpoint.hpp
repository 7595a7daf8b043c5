#ifndef VLOGDESK_CHECKPOINT_HPP
#define VLOGDESK_CHECKPOINT_HPP

#include <string>

#include <json.hpp>

#include "vlogdesk/optim.hpp"

namespace vlogdesk {

// Versioned binary container:
//   magic "VLOGDESK" | u32 version | u32 n_params |
//   per param: u32 name_len, name, u32 ndim, u32 dims[], f64 data (LE) |
//   u64 meta_len, JSON metadata (model config, training step, ...).
inline constexpr char kCheckpointMagic[8] = {'V', 'L', 'O', 'G', 'D', 'E', 'S', 'K'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ParamSet params;
    nlohmann::json meta;
};

void save_checkpoint(const std::string& path, const ParamSet& params, const nlohmann::json& meta);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a of the file bytes, for manifests.
uint64_t file_hash(const std::string& path);

}  // namespace vlogdesk

#endif
