#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>

#include "vlprobe/core/vocabulary.hpp"
#include "vlprobe/model/params.hpp"
#include "vlprobe/model/trainer.hpp"

namespace vlprobe::model {

// Binary checkpoint, all integers little-endian:
//
//   "VLPC"            magic
//   u32               schema version (1)
//   u32 x 6           vocab_size d_model n_heads n_layers d_v max_len
//   u32               token count, then per token: u32 byte length + UTF-8 bytes
//   u32               tensor count, then per tensor: u32 name length + name, u32 rows, u32 cols
//   u32               1 when optimizer state follows, else 0
//   u64               optimizer step (only when the flag is 1)
//   f32[]             every tensor in table order, row-major
//   f32[], f32[]      Adam first and second moments in the same order (only when the flag is 1)
//
// Floats are stored as raw IEEE-754 bits, so load(save(p)) == p bit for bit.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Params<float> params;
  std::shared_ptr<const Vocabulary> vocab;
  std::optional<AdamState<float>> optimizer;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Throws IoError for a missing file and SchemaError for a bad magic, an
// unsupported version or an inconsistent shape table.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vlprobe::model
