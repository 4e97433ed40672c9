#include "ave/eval/export.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ave/env/image_io.hpp"
#include "ave/env/record_io.hpp"

namespace ave::eval {

namespace {

void draw_rect(Tensor& img, const env::Region& r, const double* color)
{
    const int h = static_cast<int>(img.dim(0));
    const int w = static_cast<int>(img.dim(1));
    const int c = static_cast<int>(img.dim(2));
    auto put = [&](int y, int x) {
        if (y < 0 || y >= h || x < 0 || x >= w) return;
        for (int k = 0; k < c; ++k) img[(static_cast<std::size_t>(y) * w + x) * c + k] = color[std::min(k, 2)];
    };
    for (int i = 0; i < r.d; ++i) {
        put(r.y, r.x + i);
        put(r.y + r.d - 1, r.x + i);
        put(r.y + i, r.x);
        put(r.y + i, r.x + r.d - 1);
    }
}

void fill_unobserved(Tensor& img, std::vector<unsigned char>& known)
{
    const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    if (std::none_of(known.begin(), known.end(), [](unsigned char k) { return k != 0; })) return;
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<unsigned char> next = known;
        Tensor out = img;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                if (known[y * w + x]) continue;
                std::vector<double> acc(c, 0.0);
                int n = 0;
                const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    const long yy = static_cast<long>(y) + dy[k], xx = static_cast<long>(x) + dx[k];
                    if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
                    const std::size_t q = static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx);
                    if (!known[q]) continue;
                    for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += img[q * c + ch];
                    ++n;
                }
                if (n == 0) continue;
                for (std::size_t ch = 0; ch < c; ++ch) out[(y * w + x) * c + ch] = acc[ch] / n;
                next[y * w + x] = 1;
                changed = true;
            }
        img = std::move(out);
        known = std::move(next);
    }
}

} // namespace

Tensor overlay(const env::SceneImage& scene, const env::EpisodeRecord& record, std::size_t t)
{
    Tensor img = scene.pixels;
    if (img.dim(2) == 1) {
        // grayscale scenes get colored rectangles
        Tensor rgb({img.dim(0), img.dim(1), 3});
        for (std::size_t i = 0; i < img.size(); ++i)
            for (std::size_t k = 0; k < 3; ++k) rgb[i * 3 + k] = img[i];
        img = std::move(rgb);
    }
    static const double red[3] = {1.0, 0.0, 0.0};
    static const double yellow[3] = {1.0, 1.0, 0.0};
    const std::size_t n = std::min(t, record.captures.size());
    for (std::size_t i = 0; i < n; ++i) draw_rect(img, record.captures[i].region, i + 1 == n ? red : yellow);
    return img;
}

Tensor visible_composite(const env::EpisodeRecord& record, int channels, bool interpolate)
{
    const auto h = static_cast<std::size_t>(record.scene_height);
    const auto w = static_cast<std::size_t>(record.scene_width);
    const auto c = static_cast<std::size_t>(channels);
    Tensor img({h, w, c}, 0.5);
    std::vector<unsigned char> known(h * w, 0);
    std::vector<std::size_t> order(record.captures.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return record.captures[a].region.d > record.captures[b].region.d;
    });
    for (std::size_t i : order) {
        const auto& cap = record.captures[i];
        if (cap.pixels.empty()) continue;
        const auto d = static_cast<std::size_t>(cap.region.d);
        const Tensor patch = env::resize_image(cap.pixels, d, d);
        for (std::size_t y = 0; y < d; ++y)
            for (std::size_t x = 0; x < d; ++x) {
                const std::size_t sy = static_cast<std::size_t>(cap.region.y) + y;
                const std::size_t sx = static_cast<std::size_t>(cap.region.x) + x;
                if (sy >= h || sx >= w) continue;
                for (std::size_t k = 0; k < c; ++k) img[(sy * w + sx) * c + k] = patch[(y * d + x) * c + k];
                known[sy * w + sx] = 1;
            }
    }
    if (interpolate) fill_unobserved(img, known);
    return img;
}

std::string caption(const env::EpisodeRecord& record, int d_cam, const std::vector<std::string>& class_names)
{
    std::ostringstream os;
    os << "scene " << record.scene_id << '\n';
    os << "glimpses " << record.captures.size() << " ("
       << env::pixel_percentage(record.captures.size(), d_cam, record.scene_height, record.scene_width)
       << "% pixels)\n";
    os << "stop " << env::to_string(record.stop_reason) << '\n';
    const auto& p = record.final_prediction;
    if (p.label >= 0) {
        os << "prediction ";
        if (static_cast<std::size_t>(p.label) < class_names.size()) os << class_names[static_cast<std::size_t>(p.label)];
        else os << p.label;
        if (static_cast<std::size_t>(p.label) < p.probs.size())
            os << " p=" << p.probs[static_cast<std::size_t>(p.label)];
        os << '\n';
    }
    for (std::size_t t = 0; t < record.captures.size(); ++t) {
        const auto& r = record.captures[t].region;
        os << "step " << t + 1 << " x=" << r.x << " y=" << r.y << " d=" << r.d << " loss=" << record.losses[t + 1]
           << " reward=" << record.rewards[t] << '\n';
    }
    return os.str();
}

std::vector<std::filesystem::path> export_trajectory(const env::EpisodeRecord& record, const env::SceneImage& scene,
                                                     int d_cam, const std::filesystem::path& dir,
                                                     const ExportOptions& options)
{
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    for (std::size_t t = 1; t <= record.captures.size(); ++t) {
        const auto p = dir / ("step_" + std::to_string(t) + ".png");
        env::write_png(p, overlay(scene, record, t));
        written.push_back(p);
    }
    const auto comp = dir / "composite.png";
    env::write_png(comp, visible_composite(record, scene.channels(), options.interpolate));
    written.push_back(comp);

    const auto cap = dir / "caption.txt";
    {
        std::ofstream out(cap);
        if (!out) throw std::runtime_error("cannot write " + cap.string());
        out << caption(record, d_cam, options.class_names);
    }
    written.push_back(cap);
    const auto json = dir / "record.json";
    env::save_record(json, record, options.include_pixels);
    written.push_back(json);
    return written;
}

} // namespace ave::eval
