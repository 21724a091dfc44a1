#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>

#include "grada/model.hpp"
#include "grada/training.hpp"

namespace grada {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kCheckpointHeader = "grada-checkpoint v1";

struct Checkpoint {
  ModelParams params;
  FeatureScaler scaler;
};

/// Text container: a header line, a `dims` line, then one `tensor <name>
/// <rows> <cols>` block per tensor with values in C99 hex-float notation so
/// that load(save(x)) is bit-exact.
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace grada
