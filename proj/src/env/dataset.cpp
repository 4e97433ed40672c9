#include "ave/env/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ave/env/image_io.hpp"

namespace ave::env {

namespace {

constexpr std::array<std::array<const char*, 7>, 10> kFont = {{
    {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},
    {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},
    {"01110", "10001", "00001", "00010", "00100", "01000", "11111"},
    {"11111", "00010", "00100", "00010", "00001", "10001", "01110"},
    {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},
    {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},
    {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},
    {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},
    {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},
    {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},
}};

constexpr int kSuper = 4;

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n\"");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n\"");
    return s.substr(b, e - b + 1);
}

bool is_integer(const std::string& s)
{
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

} // namespace

SceneImage render_digit_scene(int digit, int size, int top, int left, int glyph_height, int glyph_width,
                              double intensity)
{
    if (digit < 0 || digit > 9) throw std::invalid_argument("digit out of range");
    const auto n = static_cast<std::size_t>(size);
    SceneImage scene;
    scene.pixels = Tensor({n, n, 3});
    scene.label = digit;
    const auto& glyph = kFont[static_cast<std::size_t>(digit)];
    for (int r = std::max(0, top); r < std::min(size, top + glyph_height); ++r) {
        for (int c = std::max(0, left); c < std::min(size, left + glyph_width); ++c) {
            int hits = 0;
            for (int sy = 0; sy < kSuper; ++sy) {
                for (int sx = 0; sx < kSuper; ++sx) {
                    const double v = (r - top + (sy + 0.5) / kSuper) / glyph_height * 7.0;
                    const double u = (c - left + (sx + 0.5) / kSuper) / glyph_width * 5.0;
                    const int gy = std::clamp(static_cast<int>(v), 0, 6);
                    const int gx = std::clamp(static_cast<int>(u), 0, 4);
                    hits += glyph[static_cast<std::size_t>(gy)][gx] == '1';
                }
            }
            const double value = intensity * hits / (kSuper * kSuper);
            for (std::size_t k = 0; k < 3; ++k) scene.pixels[(static_cast<std::size_t>(r) * n + static_cast<std::size_t>(c)) * 3 + k] = value;
        }
    }
    return scene;
}

Dataset make_digit_scenes(const DigitSceneOptions& options)
{
    if (options.min_height < 7 || options.max_height < options.min_height || options.max_height > options.size)
        throw std::invalid_argument("digit scenes: invalid glyph height range");
    Rng rng(options.seed);
    Dataset data;
    data.num_classes = 10;
    for (int d = 0; d < 10; ++d) data.class_names.push_back(std::to_string(d));
    std::uniform_int_distribution<int> digit_dist(0, 9);
    std::uniform_int_distribution<int> height_dist(options.min_height, options.max_height);
    std::normal_distribution<double> noise(0.0, options.noise > 0.0 ? options.noise : 1.0);
    data.scenes.reserve(options.count);
    for (std::size_t i = 0; i < options.count; ++i) {
        const int digit = digit_dist(rng);
        const int gh = height_dist(rng);
        const double aspect = std::uniform_real_distribution<double>(0.6, 0.85)(rng);
        const int gw = std::max(5, static_cast<int>(std::lround(gh * aspect)));
        const int top = std::uniform_int_distribution<int>(0, options.size - gh)(rng);
        const int left = std::uniform_int_distribution<int>(0, options.size - gw)(rng);
        const double intensity = std::uniform_real_distribution<double>(0.7, 1.0)(rng);
        SceneImage scene = render_digit_scene(digit, options.size, top, left, gh, gw, intensity);
        if (options.noise > 0.0)
            for (double& v : scene.pixels.values()) v = std::clamp(v + noise(rng), 0.0, 1.0);
        scene.id = "digit_" + std::to_string(i);
        data.scenes.push_back(std::make_shared<const SceneImage>(std::move(scene)));
    }
    return data;
}

Dataset load_image_directory(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& labels_csv,
                             int resize_to)
{
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".png" || ext == ".ppm" || ext == ".pgm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::map<std::string, std::string> raw_labels;
    if (labels_csv) {
        std::ifstream in(*labels_csv);
        if (!in) throw std::runtime_error("cannot open label file " + labels_csv->string());
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            const auto comma = line.find(',');
            if (comma == std::string::npos) throw std::runtime_error("label file: expected file,label rows");
            const std::string file = trim(line.substr(0, comma));
            const std::string label = trim(line.substr(comma + 1));
            if (first && (file == "file" || file == "filename" || file == "image")) {
                first = false;
                continue;
            }
            first = false;
            raw_labels[file] = label;
        }
    }

    Dataset data;
    const bool numeric = std::all_of(raw_labels.begin(), raw_labels.end(), [](const auto& kv) { return is_integer(kv.second); });
    std::map<std::string, int> class_index;
    if (!raw_labels.empty() && !numeric) {
        for (const auto& [f, l] : raw_labels) class_index.emplace(l, 0);
        int k = 0;
        for (auto& [name, idx] : class_index) {
            idx = k++;
            data.class_names.push_back(name);
        }
        data.num_classes = k;
    }
    int max_label = -1;
    for (const auto& path : files) {
        SceneImage scene;
        scene.id = path.filename().string();
        scene.pixels = read_image(path);
        if (resize_to > 0)
            scene.pixels = resize_image(scene.pixels, static_cast<std::size_t>(resize_to), static_cast<std::size_t>(resize_to));
        const auto it = raw_labels.find(scene.id);
        if (it != raw_labels.end()) {
            scene.label = numeric ? std::stoi(it->second) : class_index.at(it->second);
            max_label = std::max(max_label, *scene.label);
        } else if (labels_csv) {
            throw std::runtime_error("label file has no entry for " + scene.id);
        }
        data.scenes.push_back(std::make_shared<const SceneImage>(std::move(scene)));
    }
    if (numeric && max_label >= 0) {
        data.num_classes = max_label + 1;
        for (int k = 0; k < data.num_classes; ++k) data.class_names.push_back(std::to_string(k));
    }
    return data;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double fraction, std::uint64_t seed)
{
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("split fraction must lie in [0, 1]");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto cut = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(data.size())));
    Dataset a, b;
    a.num_classes = b.num_classes = data.num_classes;
    a.class_names = b.class_names = data.class_names;
    for (std::size_t i = 0; i < order.size(); ++i) (i < cut ? a : b).scenes.push_back(data.scenes[order[i]]);
    return {std::move(a), std::move(b)};
}

SceneImage augment(const SceneImage& scene, const AugmentOptions& options, Rng& rng)
{
    SceneImage out = scene;
    const std::size_t h = scene.pixels.dim(0), w = scene.pixels.dim(1), c = scene.pixels.dim(2);
    auto transform = [&](const Tensor& src, bool flip, const kernels::Window& win) {
        Tensor cropped({h, w, c});
        kernels::resample(src.data(), h, w, c, win, h, w, cropped.data());
        if (!flip) return cropped;
        Tensor flipped({h, w, c});
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t x = 0; x < w; ++x)
                for (std::size_t k = 0; k < c; ++k) flipped[(r * w + x) * c + k] = cropped[(r * w + (w - 1 - x)) * c + k];
        return flipped;
    };
    const bool flip = options.flip && uniform01(rng) < 0.5;
    const double s = options.min_crop_scale + (1.0 - options.min_crop_scale) * uniform01(rng);
    const double cw = s * static_cast<double>(w), ch = s * static_cast<double>(h);
    const kernels::Window win{uniform01(rng) * (static_cast<double>(w) - cw), uniform01(rng) * (static_cast<double>(h) - ch), cw, ch};
    out.pixels = transform(scene.pixels, flip, win);
    if (scene.dense_target) out.dense_target = transform(*scene.dense_target, flip, win);
    for (double& v : out.pixels.values()) v = std::clamp(v, 0.0, 1.0);
    return out;
}

} // namespace ave::env
