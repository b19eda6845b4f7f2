#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "axloc/model.hpp"
#include "axloc/tensor.hpp"

namespace axloc {

/// Binary checkpoint layout (all integers u32 little-endian):
///   "AXPS" | version | { name_len | name | rank | dims... | f64 LE data }*
/// Records run to end of file.
inline constexpr char kCheckpointMagic[4] = {'A', 'X', 'P', 'S'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Tensor value;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path);

/// Model parameters as records, in parameter order.
std::vector<CheckpointRecord> parameter_records(const Model& model);

/// Copies every model parameter from `records`. Records whose name starts with
/// one of `ignored_prefixes` are skipped. Missing, unexpected, or mis-shaped
/// entries raise CheckpointError listing each offending field.
void load_parameters(Model& model, const std::vector<CheckpointRecord>& records,
                     const std::vector<std::string>& ignored_prefixes = {});

}  // namespace axloc
