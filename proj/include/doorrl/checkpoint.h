#ifndef DOORRL_CHECKPOINT_H_
#define DOORRL_CHECKPOINT_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "doorrl/nn.h"

namespace doorrl {

inline constexpr uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Matrix value;
};

// Versioned binary of named matrices plus string metadata. Saving writes
// `path` and a human-readable `path.manifest` listing metadata and shapes.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<NamedTensor> tensors;

  const Matrix& Get(const std::string& name) const;
};

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint LoadCheckpoint(const std::string& path);

std::vector<uint8_t> SerializeCheckpoint(const Checkpoint& ckpt);
Checkpoint DeserializeCheckpoint(const std::vector<uint8_t>& bytes);

// Policy (de)serialization. kind is stored in meta["kind"].
void AppendPolicy(const PolicyParams& params, Checkpoint& ckpt);
PolicyParams ExtractPolicy(const Checkpoint& ckpt);

}  // namespace doorrl

#endif  // DOORRL_CHECKPOINT_H_
