#pragma once

#include <filesystem>
#include <string>

#include "capri/train/ensemble.hpp"
#include "capri/train/trainer.hpp"

namespace capri::train {

// Checkpoint layout (format version 1):
//
//   CAPRI-CKPT\n
//   format 1\n
//   manifest <bytes>\n
//   payload <bytes>\n
//   fnv1a64 <16 hex digits over manifest+payload>\n
//   \n
//   <manifest: JSON text><payload: little-endian float32 tensors>
//
// The manifest records the model config, vocabulary, target normalization,
// training config and seed, validation metrics, epoch history, and the name,
// shape, kind and payload offset of every tensor.

inline constexpr int kCheckpointFormatVersion = 1;

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);

/// Throws Error(FormatVersionMismatch) for another format version and
/// Error(CorruptCheckpoint) for truncation, checksum mismatch or tensors that
/// do not match the manifest.
TrainedModel load_checkpoint(const std::filesystem::path& path);

/// Directory with ensemble.json plus one member_NN.ckpt per member.
void save_ensemble(const Ensemble& ensemble, const std::filesystem::path& dir);
Ensemble load_ensemble(const std::filesystem::path& dir);

/// Loads a directory as an ensemble and a file as a one-member ensemble.
Ensemble load_models(const std::filesystem::path& path);

/// Content hash of a checkpoint file or ensemble directory.
std::string checkpoint_hash(const std::filesystem::path& path);

}  // namespace capri::train
