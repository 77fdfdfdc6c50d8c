#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "slt/config.hpp"
#include "slt/models.hpp"
#include "slt/tickets.hpp"

namespace slt {

uint32_t crc32(const void* data, size_t len);

// Named RNG engine states captured alongside a run.
using RngRegistry = std::map<std::string, std::string>;

// Container layout (magic "SLTC", version 1): a sequence of sections, each
// `u32 name_len | name | u64 payload_len | payload | u32 crc32(payload)`.
// Sections: config, rng, one layer:<name> per masked layer in model order,
// pos_embed (transformers), patch_ticket (when present).
void save_checkpoint(const std::filesystem::path& path, Model& model,
                     const ExperimentConfig& config, const PatchTicket* ticket = nullptr,
                     const RngRegistry& rng = {});

struct LoadedCheckpoint {
    ExperimentConfig config;
    std::unique_ptr<Model> model;
    std::optional<PatchTicket> ticket;
    RngRegistry rng;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Section/layer summary as JSON text, validating CRCs along the way.
std::string inspect_checkpoint(const std::filesystem::path& path);

}  // namespace slt
