#include "slt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "slt/masked.hpp"

namespace slt {

namespace {

constexpr float kPi = 3.14159265358979323846f;

// 3x3 grid of blob centers and a fixed color palette; up to 9 classes.
constexpr int kMaxRgbClasses = 9;
constexpr float kPalette[kMaxRgbClasses][3] = {
    {1.0f, 0.2f, 0.2f}, {0.2f, 1.0f, 0.2f}, {0.2f, 0.2f, 1.0f},
    {1.0f, 1.0f, 0.2f}, {1.0f, 0.2f, 1.0f}, {0.2f, 1.0f, 1.0f},
    {0.9f, 0.6f, 0.1f}, {0.5f, 0.9f, 0.4f}, {0.7f, 0.7f, 0.7f},
};

void append_u32le(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

uint32_t read_u32le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint32_t read_u32be(const unsigned char* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(f),
                                      std::istreambuf_iterator<char>());
}

}  // namespace

Dataset gen_synthetic_rgb(int classes, int64_t n, int hw, uint64_t seed, float noise_sigma,
                          const std::string& split) {
    if (hw < 8) throw ConfigError("gen_synthetic_rgb: hw must be >= 8");
    if (classes < 1 || classes > kMaxRgbClasses)
        throw ConfigError("gen_synthetic_rgb: classes must lie in [1, " +
                          std::to_string(kMaxRgbClasses) + "]");
    RngStream rng(seed);
    const float sigma_b = static_cast<float>(hw) / 6.0f;
    Dataset ds;
    ds.classes = classes;
    ds.seed = seed;
    ds.split = split;
    ds.descriptor = "synthetic_rgb(classes=" + std::to_string(classes) + ",hw=" + std::to_string(hw) +
                    ",sigma=" + std::to_string(noise_sigma) + ")";
    ArrayXf frames = ArrayXf::Zero(n * 3 * hw * hw);
    ds.labels.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % classes);
        ds.labels[static_cast<size_t>(i)] = cls;
        const float cx = (static_cast<float>(cls % 3) + 1.0f) * static_cast<float>(hw) / 4.0f;
        const float cy = (static_cast<float>(cls / 3) + 1.0f) * static_cast<float>(hw) / 4.0f;
        float* base = frames.data() + i * 3 * hw * hw;
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < hw; ++y)
                for (int x = 0; x < hw; ++x) {
                    const float dx = static_cast<float>(x) - cx;
                    const float dy = static_cast<float>(y) - cy;
                    const float blob = std::exp(-(dx * dx + dy * dy) / (2.0f * sigma_b * sigma_b));
                    float v = kPalette[cls][c] * blob;
                    if (noise_sigma > 0.0f) v += rng.normal(0.0f, noise_sigma);
                    base[(c * hw + y) * hw + x] = v;
                }
    }
    ds.frames = Tensor::from_array({n, 1, 3, hw, hw}, std::move(frames));
    return ds;
}

EventStream render_moving_bar(int hw, int timesteps, float angle, float speed_scale,
                              float along_offset, float phase, float noise_p, RngStream& rng,
                              int quadrant) {
    EventStream stream;
    stream.width = hw;
    stream.height = hw;
    float x0 = 0, y0 = 0, x1 = static_cast<float>(hw), y1 = static_cast<float>(hw);
    if (quadrant >= 0) {
        const float half = static_cast<float>(hw) / 2.0f;
        x0 = (quadrant % 2 == 0) ? 0.0f : half;
        y0 = (quadrant / 2 == 0) ? 0.0f : half;
        x1 = x0 + half;
        y1 = y0 + half;
    }
    const float dirx = std::cos(angle), diry = std::sin(angle);
    const float rcx = 0.5f * (x0 + x1), rcy = 0.5f * (y0 + y1);
    const float radius =
        0.5f * (x1 - x0) * std::abs(dirx) + 0.5f * (y1 - y0) * std::abs(diry) + 1.0f;
    const float halfwidth = std::max(1.0f, static_cast<float>(hw) / 12.0f);
    const int substeps = 4 * timesteps;

    auto inside_bar = [&](int px, int py, int step) {
        const float fx = static_cast<float>(px) + 0.5f;
        const float fy = static_cast<float>(py) + 0.5f;
        if (fx < x0 || fx >= x1 || fy < y0 || fy >= y1) return false;
        const float travel =
            speed_scale * (-radius + 2.0f * radius * (static_cast<float>(step) + phase) /
                                         static_cast<float>(substeps)) +
            along_offset;
        const float cx = rcx + dirx * travel;
        const float cy = rcy + diry * travel;
        const float along = (fx - cx) * dirx + (fy - cy) * diry;
        return std::abs(along) <= halfwidth;
    };

    for (int step = 1; step <= substeps; ++step) {
        const int64_t t = static_cast<int64_t>(step - 1) * 1000;
        for (int y = 0; y < hw; ++y)
            for (int x = 0; x < hw; ++x) {
                const bool now = inside_bar(x, y, step);
                const bool before = inside_bar(x, y, step - 1);
                if (now && !before) stream.events.push_back({t, x, y, 1});
                if (!now && before) stream.events.push_back({t, x, y, 0});
            }
    }
    if (noise_p > 0.0f) {
        const int64_t spurious = static_cast<int64_t>(
            noise_p * static_cast<float>(hw) * static_cast<float>(hw) * static_cast<float>(timesteps));
        for (int64_t i = 0; i < spurious; ++i) {
            const int64_t t = rng.below(static_cast<int64_t>(substeps) * 1000);
            stream.events.push_back({t, static_cast<int>(rng.below(hw)),
                                     static_cast<int>(rng.below(hw)),
                                     static_cast<int>(rng.below(2))});
        }
    }
    std::stable_sort(stream.events.begin(), stream.events.end(),
                     [](const Event& a, const Event& b) { return a.t_us < b.t_us; });
    return stream;
}

Tensor bin_events(const EventStream& stream, int timesteps, int hw) {
    if (timesteps < 1) throw ContractError("bin_events: T must be >= 1");
    ArrayXf frames = ArrayXf::Zero(static_cast<int64_t>(timesteps) * 2 * hw * hw);
    if (!stream.events.empty()) {
        int64_t t_max = 0;
        for (const Event& e : stream.events) t_max = std::max(t_max, e.t_us);
        const int64_t span = t_max + 1;
        for (const Event& e : stream.events) {
            if (e.x < 0 || e.x >= hw || e.y < 0 || e.y >= hw)
                throw IndexError("bin_events: event coordinates out of range");
            if (e.polarity != 0 && e.polarity != 1)
                throw IndexError("bin_events: polarity must be 0 or 1");
            int64_t bin = e.t_us * timesteps / span;
            if (bin >= timesteps) bin = timesteps - 1;
            frames[((bin * 2 + e.polarity) * hw + e.y) * hw + e.x] = 1.0f;
        }
    }
    return Tensor::from_array({timesteps, 2, hw, hw}, std::move(frames));
}

Dataset gen_synthetic_dvs(int classes, int64_t n, int hw, int timesteps, uint64_t seed,
                          float noise_p, int signal_quadrant, const std::string& split) {
    if (classes < 1) throw ConfigError("gen_synthetic_dvs: classes must be >= 1");
    if (timesteps < 1) throw ConfigError("gen_synthetic_dvs: timesteps must be >= 1");
    if (hw < 8) throw ConfigError("gen_synthetic_dvs: hw must be >= 8");
    RngStream rng(seed);
    Dataset ds;
    ds.classes = classes;
    ds.seed = seed;
    ds.split = split;
    ds.descriptor = "synthetic_dvs(classes=" + std::to_string(classes) + ",hw=" + std::to_string(hw) +
                    ",T=" + std::to_string(timesteps) + ",noise=" + std::to_string(noise_p) +
                    ",quadrant=" + std::to_string(signal_quadrant) + ")";
    const int64_t per = static_cast<int64_t>(timesteps) * 2 * hw * hw;
    ArrayXf frames = ArrayXf::Zero(n * per);
    ds.labels.resize(static_cast<size_t>(n));
    const float jitter = static_cast<float>(hw) / 8.0f;
    for (int64_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % classes);
        ds.labels[static_cast<size_t>(i)] = cls;
        const float angle = 2.0f * kPi * static_cast<float>(cls) / static_cast<float>(classes);
        const float offset = rng.uniform(-jitter, jitter);
        const float phase = rng.uniform(0.0f, 4.0f);
        EventStream ev = render_moving_bar(hw, timesteps, angle, 1.0f, offset, phase, noise_p, rng,
                                           signal_quadrant);
        Tensor sample = bin_events(ev, timesteps, hw);
        frames.segment(i * per, per) = sample.array();
    }
    ds.frames = Tensor::from_array({n, timesteps, 2, hw, hw}, std::move(frames));
    return ds;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, const std::string& split) {
    const std::vector<unsigned char> img = read_file(images_path);
    const std::vector<unsigned char> lab = read_file(labels_path);
    if (img.size() < 16)
        throw FormatError("idx images: truncated header at byte offset " + std::to_string(img.size()));
    if (read_u32be(img.data()) != 0x00000803u)
        throw FormatError("idx images: bad magic at byte offset 0");
    const int64_t n = read_u32be(img.data() + 4);
    const int64_t rows = read_u32be(img.data() + 8);
    const int64_t cols = read_u32be(img.data() + 12);
    const int64_t expected = 16 + n * rows * cols;
    if (static_cast<int64_t>(img.size()) < expected)
        throw FormatError("idx images: truncated pixel data at byte offset " +
                          std::to_string(img.size()) + ", expected " + std::to_string(expected));
    if (lab.size() < 8)
        throw FormatError("idx labels: truncated header at byte offset " + std::to_string(lab.size()));
    if (read_u32be(lab.data()) != 0x00000801u)
        throw FormatError("idx labels: bad magic at byte offset 0");
    const int64_t nl = read_u32be(lab.data() + 4);
    if (nl != n) throw FormatError("idx: image/label count mismatch");
    if (static_cast<int64_t>(lab.size()) < 8 + n)
        throw FormatError("idx labels: truncated at byte offset " + std::to_string(lab.size()));

    Dataset ds;
    ds.split = split;
    ds.descriptor = "idx(" + images_path.filename().string() + ")";
    ArrayXf frames(n * rows * cols);
    for (int64_t i = 0; i < n * rows * cols; ++i)
        frames[i] = static_cast<float>(img[static_cast<size_t>(16 + i)]) / 255.0f;
    ds.frames = Tensor::from_array({n, 1, 1, rows, cols}, std::move(frames));
    ds.labels.resize(static_cast<size_t>(n));
    int max_label = 0;
    for (int64_t i = 0; i < n; ++i) {
        ds.labels[static_cast<size_t>(i)] = lab[static_cast<size_t>(8 + i)];
        max_label = std::max(max_label, ds.labels[static_cast<size_t>(i)]);
    }
    ds.classes = n > 0 ? max_label + 1 : 0;
    return ds;
}

BatchIter::BatchIter(const Dataset& ds, int64_t batch, uint64_t shuffle_seed,
                     int64_t model_timesteps, bool shuffle)
    : ds_(&ds), batch_(batch), seed_(shuffle_seed), model_t_(model_timesteps), shuffle_(shuffle) {
    if (batch < 1) throw ContractError("batch size must be >= 1");
    if (ds.timesteps() != 1 && ds.timesteps() != model_timesteps)
        throw ContractError("dataset timesteps " + std::to_string(ds.timesteps()) +
                            " incompatible with model timesteps " + std::to_string(model_timesteps));
    reset();
}

void BatchIter::reset() {
    order_.resize(static_cast<size_t>(ds_->size()));
    for (int64_t i = 0; i < ds_->size(); ++i) order_[static_cast<size_t>(i)] = i;
    if (shuffle_) {
        RngStream rng(seed_);
        shuffle_indices(order_, rng);
    }
    cursor_ = 0;
}

int64_t BatchIter::batches() const {
    return (ds_->size() + batch_ - 1) / batch_;
}

bool BatchIter::next(Tensor& frames, std::vector<int>& labels) {
    const int64_t n = ds_->size();
    if (cursor_ >= n) return false;
    const int64_t b = std::min(batch_, n - cursor_);
    const int64_t C = ds_->channels(), H = ds_->height(), W = ds_->width();
    const int64_t chw = C * H * W;
    const bool replicate = ds_->timesteps() == 1;
    ArrayXf out(model_t_ * b * chw);
    const float* src = ds_->frames.array().data();
    labels.assign(static_cast<size_t>(b), 0);
    for (int64_t t = 0; t < model_t_; ++t)
        for (int64_t i = 0; i < b; ++i) {
            const int64_t sample = order_[static_cast<size_t>(cursor_ + i)];
            const int64_t st = replicate ? 0 : t;
            std::memcpy(out.data() + (t * b + i) * chw,
                        src + (sample * ds_->timesteps() + st) * chw,
                        static_cast<size_t>(chw) * sizeof(float));
            if (t == 0) labels[static_cast<size_t>(i)] = ds_->labels[static_cast<size_t>(sample)];
        }
    frames = Tensor::from_array({model_t_, b, C, H, W}, std::move(out));
    cursor_ += b;
    return true;
}

void encode_tensor(std::vector<unsigned char>& out, const Tensor& t) {
    out.push_back('S');
    out.push_back('L');
    out.push_back('T');
    out.push_back('K');
    out.push_back(1);  // version
    out.push_back(0);  // dtype f32
    out.push_back(static_cast<unsigned char>(t.rank()));
    out.push_back(0);  // padding
    for (int i = 0; i < t.rank(); ++i) append_u32le(out, static_cast<uint32_t>(t.dim(i)));
    const size_t payload = static_cast<size_t>(t.numel()) * sizeof(float);
    const size_t pos = out.size();
    out.resize(pos + payload);
    std::memcpy(out.data() + pos, t.array().data(), payload);
}

Tensor decode_tensor(const unsigned char* data, size_t len, size_t& consumed) {
    if (len < 8) throw FormatError("tensor blob: truncated header");
    if (data[0] != 'S' || data[1] != 'L' || data[2] != 'T' || data[3] != 'K')
        throw FormatError("tensor blob: bad magic");
    if (data[4] != 1) throw FormatError("tensor blob: unsupported version");
    if (data[5] != 0) throw FormatError("tensor blob: unsupported dtype");
    const int ndim = data[6];
    if (len < 8 + static_cast<size_t>(ndim) * 4) throw FormatError("tensor blob: truncated dims");
    Shape shape(static_cast<size_t>(ndim));
    for (int i = 0; i < ndim; ++i)
        shape[static_cast<size_t>(i)] = read_u32le(data + 8 + static_cast<size_t>(i) * 4);
    const size_t header = 8 + static_cast<size_t>(ndim) * 4;
    const size_t payload = static_cast<size_t>(shape_numel(shape)) * sizeof(float);
    if (len < header + payload) throw FormatError("tensor blob: truncated payload");
    ArrayXf v(shape_numel(shape));
    std::memcpy(v.data(), data + header, payload);
    consumed = header + payload;
    return Tensor::from_array(shape, std::move(v));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::vector<unsigned char> buf;
    encode_tensor(buf, t);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

Tensor load_tensor(const std::filesystem::path& path) {
    const std::vector<unsigned char> buf = read_file(path);
    size_t consumed = 0;
    return decode_tensor(buf.data(), buf.size(), consumed);
}

uint64_t dataset_hash(const Dataset& ds) {
    uint64_t h = hash_bytes(ds.frames.array().data(),
                            static_cast<size_t>(ds.frames.numel()) * sizeof(float));
    return hash_bytes(ds.labels.data(), ds.labels.size() * sizeof(int), h);
}

}  // namespace slt
