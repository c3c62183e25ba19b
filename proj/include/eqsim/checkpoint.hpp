#pragma once

#include <string>

#include "eqsim/cnn.hpp"
#include "eqsim/volterra.hpp"

namespace eqsim {

// Plain-text tensor dump, one container for both model kinds:
//
//   eqsim-checkpoint 1
//   model cnn|volterra
//   ... type-specific header lines ...
//   weights <count>
//   <count> doubles, row-major, %.17g
//
// The format is line oriented and whitespace separated; doubles round-trip
// exactly through %.17g.
void save_checkpoint(const std::string& path, const Cnn& cnn);
void save_checkpoint(const std::string& path, const VolterraSpec& spec);

std::string checkpoint_kind(const std::string& path);  // "cnn" or "volterra"
Cnn load_cnn_checkpoint(const std::string& path);
VolterraSpec load_volterra_checkpoint(const std::string& path);

}  // namespace eqsim
