#pragma once

#include <string>

#include "fedprune/model.hpp"

namespace fedprune {

/// Container file: magic + version, a JSON architecture descriptor, then one
/// named blob per parameter tensor (explicit shape header, little-endian
/// 4-byte reals). Values are quantized to 4-byte precision on save, so
/// save(load(p)) reproduces p byte for byte.
void save_checkpoint(const ModelGraph& g, const std::string& path);

/// Rebuilds the graph from the descriptor and fills every parameter from its
/// blob. Throws IngestError naming the file on any structural defect.
ModelGraph load_checkpoint(const std::string& path);

/// Human-readable summary (JSON): architecture, per-tensor shapes, totals.
std::string checkpoint_summary(const std::string& path);

}  // namespace fedprune
