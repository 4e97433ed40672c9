#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ave/core/random.hpp"
#include "ave/env/scene.hpp"

namespace ave::env {

using ScenePtr = std::shared_ptr<const SceneImage>;

struct Dataset {
    std::vector<ScenePtr> scenes;
    int num_classes = 0;
    std::vector<std::string> class_names;

    std::size_t size() const { return scenes.size(); }
    bool empty() const { return scenes.empty(); }
    const SceneImage& operator[](std::size_t i) const { return *scenes[i]; }
};

/// Synthetic scenes: one 5x7 bitmap digit rendered at a random position and
/// height on a black canvas. The label is the digit.
struct DigitSceneOptions {
    std::size_t count = 1000;
    int size = 64;
    int min_height = 10;
    int max_height = 20;
    double noise = 0.0; // stddev of additive background noise
    std::uint64_t seed = 0;
};

Dataset make_digit_scenes(const DigitSceneOptions& options);
/// Renders one digit scene; exposed for fixtures.
SceneImage render_digit_scene(int digit, int size, int top, int left, int glyph_height, int glyph_width,
                              double intensity);

/// Loads every PNG/PPM/PGM in a directory (sorted by file name). Labels come
/// from a CSV of `file,label` rows; labels may be integers or class names.
/// Scenes are resized to resize_to x resize_to when it is positive.
Dataset load_image_directory(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& labels_csv,
                             int resize_to = 0);

/// Deterministic split into (first, second) with the given fraction in first.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double fraction, std::uint64_t seed);

struct AugmentOptions {
    bool flip = true;
    double min_crop_scale = 0.8; // fraction of the side kept by the random crop
};

/// Random horizontal flip and random square crop resized back to the input size.
SceneImage augment(const SceneImage& scene, const AugmentOptions& options, Rng& rng);

} // namespace ave::env
