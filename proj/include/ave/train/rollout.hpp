#pragma once

#include <span>
#include <vector>

#include "ave/agent/replay.hpp"
#include "ave/env/dataset.hpp"
#include "ave/train/model.hpp"
#include "ave/train/policy.hpp"

namespace ave::train {

struct RolloutOptions {
    int max_steps = 1;
    /// Confidence stopping (classification only): finish an episode once the
    /// top class probability reaches threshold.
    bool stopping = false;
    double threshold = 1.0;
    bool collect_transitions = false;
    /// Drop capture pixels from the returned records (regions and actions stay).
    bool drop_pixels = false;
    bool keep_states = false;
};

struct EpisodeResult {
    env::EpisodeRecord record;
    backbone::PatchBundle bundle; // every patch seen, in capture order
    SampleOutcome outcome;        // after the last glimpse
    std::vector<agent::StatePtr> states; // s_0 .. s_n when keep_states
};

struct RolloutBatch {
    std::vector<EpisodeResult> episodes;
    std::vector<agent::Transition> transitions;
};

/// Runs one episode per scene in lockstep under the given policy. The model
/// is only evaluated without gradients; the losses L_0..L_n and rewards are
/// written into each record.
RolloutBatch run_episodes(const Model& model, GlimpsePolicy& policy, std::span<const env::ScenePtr> scenes,
                          const env::CameraConfig& camera, const RolloutOptions& options, Rng& rng);

/// Agent state for a bundle from one batched encoder output.
agent::AgentState state_from_encoding(const backbone::PatchBundle& bundle, const backbone::EncodedBatch& encoded,
                                      std::size_t index);

} // namespace ave::train
