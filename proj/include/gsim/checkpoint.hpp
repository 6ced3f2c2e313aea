#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gsim/types.hpp"

namespace gsim {

enum class StageId { Init = 0, MirrorPlanePrediction = 1, VirtualCameraOptimization = 2, FineTune = 3 };

const char* stage_name(StageId id);

// Adam moment buffers, one slot per scalar parameter, grouped like the scene
// attribute arrays plus the 3-parameter plane tangent group.
struct OptimizerState {
    std::vector<float> m, v;  // flattened over all Gaussian parameters
    std::vector<float> plane_m = std::vector<float>(3, 0.f);
    std::vector<float> plane_v = std::vector<float>(3, 0.f);
    int64_t step_count = 0;
    int64_t plane_step_count = 0;
};

struct Checkpoint {
    int format_version = 1;
    GaussianScene scene;
    std::optional<Plane> plane;
    OptimizerState optimizer;
    StageId stage = StageId::Init;
    int64_t step = 0;
    uint64_t config_hash = 0;
};

uint64_t hash_config(const TrainConfig& cfg);

// Textual header followed by little-endian float32 arrays in declared order:
// means, log-scales, rotations (wxyz), opacity logits, color coefficients,
// then the optimizer moment arrays.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gsim
