#pragma once

// Checkpoint container. Layout (all little-endian):
//   magic "SIMDA001"
//   u32 entry count
//   per entry: u32 name length, UTF-8 name, u8 flag (0 frozen / 1 trainable),
//              u32 rank, u64 dims..., raw float32 payload
// Entries are written in name-sorted order so save -> load -> save is
// byte-identical.

#include <string>
#include <vector>

#include "simda/adapters.hpp"
#include "simda/tensor.hpp"

namespace simda {

struct CheckpointEntry {
    std::string name;
    bool trainable = false;
    std::vector<int> shape;
    std::vector<float> data;
};

void save_checkpoint(const ParamSet& params, const std::string& path);

std::vector<CheckpointEntry> load_checkpoint_entries(const std::string& path);

// Strict restore: every model parameter must appear with matching shape, and
// the file must not contain unknown entries. Flags are restored as read.
void load_checkpoint_into(ParamSet& params, const std::string& path);

} // namespace simda
