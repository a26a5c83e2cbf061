#pragma once

#include "apeg/nn/unet.hpp"

namespace apeg::nn {

// Aggregate sizes for the dominant-term operation counts.
struct FlopModel {
  double steps = 0;      // T
  double batch = 0;      // B
  double levels = 0;     // L
  double res_blocks = 0; // n_r
  double channels = 0;   // C_max
  double spatial = 0;    // S_max (CCMDM) or S~_max (CADM)

  void validate() const;
};

// CCMDM: T B L n_r (C^2 S + S^2 C).   CADM: T B L n_r (2 C^2 S + 4 S^2 C).
double flop_estimate(const FlopModel& m, Variant v);

// Model for a concrete network on an image of the given size: C_max is the
// widest level, S_max the full-resolution token count.
FlopModel flop_model(const NetConfig& cfg, int rows, int cols, int steps, int batch);

}  // namespace apeg::nn
