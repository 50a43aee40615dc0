#include "simda/toyworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "simda/error.hpp"
#include "simda/rng.hpp"

namespace simda {

namespace {

const char* kColors[kPaletteSize] = {"red",  "green",   "blue",  "yellow",
                                     "cyan", "magenta", "white", "orange"};

// palette bytes; floats are byte/255 so PPM quantization round-trips exactly
const unsigned char kPaletteBytes[kPaletteSize][3] = {
    {204, 37, 37}, {37, 204, 37}, {37, 37, 204},   {204, 204, 37},
    {37, 204, 204}, {204, 37, 204}, {242, 242, 242}, {230, 140, 25},
};

const char* kShapes[3] = {"circle", "square", "triangle"};
const char* kMotions[5] = {"left", "right", "up", "down", "static"};
const char* kBackgrounds[3] = {"black", "white", "noise"};

std::vector<std::string> build_vocab() {
    std::vector<std::string> v = {"<pad>", "a", "moving", "staying", "still"};
    for (const char* c : kColors) v.push_back(c);
    for (const char* s : kShapes) v.push_back(s);
    v.insert(v.end(), {"left", "right", "up", "down"});
    return v;
}

} // namespace

const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> vocab = build_vocab();
    return vocab;
}

int token_id(const std::string& word) {
    const auto& v = vocabulary();
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i] == word) return static_cast<int>(i);
    throw VocabError("unknown token '" + word + "'");
}

std::vector<int> tokenize(const std::string& text) {
    std::vector<int> ids;
    std::istringstream in(text);
    std::string word;
    while (in >> word) ids.push_back(token_id(word));
    return ids;
}

const char* color_name(int idx) {
    if (idx < 0 || idx >= kPaletteSize) throw RangeError("palette index out of range");
    return kColors[idx];
}

const char* shape_name(Shape s) { return kShapes[static_cast<int>(s)]; }
const char* motion_name(Motion m) { return kMotions[static_cast<int>(m)]; }
const char* background_name(Background b) { return kBackgrounds[static_cast<int>(b)]; }

void palette_rgb(int idx, float rgb[3]) {
    if (idx < 0 || idx >= kPaletteSize) throw RangeError("palette index out of range");
    for (int c = 0; c < 3; ++c) rgb[c] = static_cast<float>(kPaletteBytes[idx][c]) / 255.0f;
}

Caption caption_from_spec(const SceneSpec& spec) {
    std::string text = std::string("a ") + color_name(spec.color) + " " + shape_name(spec.shape);
    if (spec.motion == Motion::still)
        text += " staying still";
    else
        text += std::string(" moving ") + motion_name(spec.motion);
    Caption c;
    c.text = text;
    c.token_ids = tokenize(text);
    return c;
}

SceneSpec spec_from_caption(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> words;
    std::string w;
    while (in >> w) words.push_back(w);
    if (words.size() != 5 || words[0] != "a")
        throw VocabError("caption does not match the closed grammar: '" + text + "'");
    SceneSpec spec;
    bool found = false;
    for (int i = 0; i < kPaletteSize; ++i)
        if (words[1] == kColors[i]) {
            spec.color = i;
            found = true;
        }
    if (!found) throw VocabError("unknown color '" + words[1] + "'");
    found = false;
    for (int i = 0; i < 3; ++i)
        if (words[2] == kShapes[i]) {
            spec.shape = static_cast<Shape>(i);
            found = true;
        }
    if (!found) throw VocabError("unknown shape '" + words[2] + "'");
    if (words[3] == "staying" && words[4] == "still") {
        spec.motion = Motion::still;
    } else if (words[3] == "moving") {
        if (words[4] == "left")
            spec.motion = Motion::left;
        else if (words[4] == "right")
            spec.motion = Motion::right;
        else if (words[4] == "up")
            spec.motion = Motion::up;
        else if (words[4] == "down")
            spec.motion = Motion::down;
        else
            throw VocabError("unknown direction '" + words[4] + "'");
    } else {
        throw VocabError("caption does not match the closed grammar: '" + text + "'");
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace {

struct Placement {
    int cy0 = 0, cx0 = 0; // centroid at frame 0
    int dy = 0, dx = 0;   // per-frame displacement
};

int shape_radius(int height, int width) { return std::max(2, std::min(height, width) / 6); }

Placement plan_motion(const SceneSpec& spec, int frames, int height, int width) {
    const int r = shape_radius(height, width);
    const int m = r + 1;
    const int travel = (spec.motion == Motion::still) ? 0 : spec.speed * (frames - 1);
    Placement p;
    switch (spec.motion) {
    case Motion::still:
        p = {height / 2, width / 2, 0, 0};
        break;
    case Motion::right:
        p = {height / 2, m, 0, spec.speed};
        break;
    case Motion::left:
        p = {height / 2, width - 1 - m, 0, -spec.speed};
        break;
    case Motion::down:
        p = {m, width / 2, spec.speed, 0};
        break;
    case Motion::up:
        p = {height - 1 - m, width / 2, -spec.speed, 0};
        break;
    }
    const int cy_end = p.cy0 + p.dy * (frames - 1);
    const int cx_end = p.cx0 + p.dx * (frames - 1);
    (void)travel;
    if (spec.motion != Motion::still && spec.speed < 1)
        throw ConfigError("scene spec: speed must be at least 1 pixel/frame");
    if (p.cy0 - r < 0 || p.cy0 + r >= height || p.cx0 - r < 0 || p.cx0 + r >= width ||
        cy_end - r < 0 || cy_end + r >= height || cx_end - r < 0 || cx_end + r >= width)
        throw ConfigError("scene spec: object would exit canvas");
    return p;
}

bool inside_shape(Shape shape, int r, int oy, int ox) {
    switch (shape) {
    case Shape::circle:
        return oy * oy + ox * ox <= r * r;
    case Shape::square:
        return std::abs(oy) <= r && std::abs(ox) <= r;
    case Shape::triangle: {
        if (oy < -r || oy > r) return false;
        const int half = (oy + r) / 2;
        return std::abs(ox) <= half;
    }
    }
    return false;
}

} // namespace

Tensor synth_masks(const SceneSpec& spec, int frames, int height, int width) {
    if (frames < 1) throw ConfigError("synth_masks: need at least one frame");
    const Placement p = plan_motion(spec, frames, height, width);
    const int r = shape_radius(height, width);
    Tensor masks({frames, 1, height, width});
    for (int f = 0; f < frames; ++f) {
        const int cy = p.cy0 + p.dy * f, cx = p.cx0 + p.dx * f;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                masks[(f * height + y) * width + x] =
                    inside_shape(spec.shape, r, y - cy, x - cx) ? 1.0f : 0.0f;
    }
    return masks;
}

VideoClip synth_video(const SceneSpec& spec, int frames, int height, int width,
                      std::uint64_t seed) {
    const Tensor masks = synth_masks(spec, frames, height, width);
    float rgb[3];
    palette_rgb(spec.color, rgb);
    Rng rng = Rng(seed).fork(0xb6);
    Tensor pixels({frames, 3, height, width});
    const int hw = height * width;
    for (int f = 0; f < frames; ++f) {
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const bool on = masks[(f * height + y) * width + x] > 0.5f;
                for (int c = 0; c < 3; ++c) {
                    float v = 0.0f;
                    if (on) {
                        v = rgb[c];
                    } else {
                        switch (spec.background) {
                        case Background::black:
                            v = 0.0f;
                            break;
                        case Background::white:
                            v = 1.0f;
                            break;
                        case Background::noise:
                            v = static_cast<float>(rng.uniform());
                            break;
                        }
                    }
                    pixels[((f * 3 + c) * hw) + y * width + x] = v;
                }
            }
    }
    VideoClip clip;
    clip.pixels = pixels;
    clip.caption = caption_from_spec(spec);
    clip.spec = spec;
    clip.seed = seed;
    return clip;
}

void mask_centroid(const Tensor& mask, double& cy, double& cx) {
    const int H = mask.dim(mask.ndim() - 2), W = mask.dim(mask.ndim() - 1);
    double sy = 0.0, sx = 0.0, n = 0.0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (mask[y * W + x] > 0.5f) {
                sy += y;
                sx += x;
                n += 1.0;
            }
    if (n == 0.0) throw ContractError("mask_centroid: empty mask");
    cy = sy / n;
    cx = sx / n;
}

// ---------------------------------------------------------------------------
// Latent codec
// ---------------------------------------------------------------------------

Tensor encode_latent(const Tensor& pixels) {
    if (pixels.ndim() != 4 || pixels.dim(1) != 3)
        throw ShapeError("encode_latent: expected [L,3,H,W] pixels");
    const int L = pixels.dim(0), H = pixels.dim(2), W = pixels.dim(3);
    if (H % 4 != 0 || W % 4 != 0)
        throw ShapeError("encode_latent: spatial extents must be divisible by 4");
    const int Ho = H / 4, Wo = W / 4;
    Tensor latent({L, 48, Ho, Wo});
    for (int l = 0; l < L; ++l)
        for (int c = 0; c < 3; ++c)
            for (int dy = 0; dy < 4; ++dy)
                for (int dx = 0; dx < 4; ++dx) {
                    const int oc = c * 16 + dy * 4 + dx;
                    for (int y = 0; y < Ho; ++y)
                        for (int x = 0; x < Wo; ++x)
                            latent[((l * 48 + oc) * Ho + y) * Wo + x] =
                                pixels[((l * 3 + c) * H + 4 * y + dy) * W + 4 * x + dx];
                }
    return latent;
}

Tensor decode_latent(const Tensor& latent) {
    if (latent.ndim() != 4 || latent.dim(1) != 48)
        throw ShapeError("decode_latent: expected [L,48,h,w] latent");
    const int L = latent.dim(0), Ho = latent.dim(2), Wo = latent.dim(3);
    const int H = Ho * 4, W = Wo * 4;
    Tensor pixels({L, 3, H, W});
    for (int l = 0; l < L; ++l)
        for (int c = 0; c < 3; ++c)
            for (int dy = 0; dy < 4; ++dy)
                for (int dx = 0; dx < 4; ++dx) {
                    const int oc = c * 16 + dy * 4 + dx;
                    for (int y = 0; y < Ho; ++y)
                        for (int x = 0; x < Wo; ++x)
                            pixels[((l * 3 + c) * H + 4 * y + dy) * W + 4 * x + dx] =
                                latent[((l * 48 + oc) * Ho + y) * Wo + x];
                }
    return pixels;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError("write_manifest: cannot open " + path);
    for (const auto& rec : records) {
        nlohmann::json j;
        j["shape"] = shape_name(rec.spec.shape);
        j["color"] = color_name(rec.spec.color);
        j["motion"] = motion_name(rec.spec.motion);
        j["speed"] = rec.spec.speed;
        j["background"] = background_name(rec.spec.background);
        j["seed"] = rec.seed;
        j["caption"] = rec.caption;
        j["frames"] = rec.frame_paths;
        out << j.dump() << "\n";
    }
}

std::vector<ManifestRecord> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_manifest: cannot open " + path);
    std::vector<ManifestRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw CorruptFileError("read_manifest: bad record: " + std::string(e.what()));
        }
        ManifestRecord rec;
        const std::string shape = j.at("shape");
        const std::string motion = j.at("motion");
        const std::string bg = j.at("background");
        const std::string color = j.at("color");
        bool ok = false;
        for (int i = 0; i < 3; ++i)
            if (shape == kShapes[i]) {
                rec.spec.shape = static_cast<Shape>(i);
                ok = true;
            }
        if (!ok) throw CorruptFileError("read_manifest: unknown shape " + shape);
        ok = false;
        for (int i = 0; i < kPaletteSize; ++i)
            if (color == kColors[i]) {
                rec.spec.color = i;
                ok = true;
            }
        if (!ok) throw CorruptFileError("read_manifest: unknown color " + color);
        ok = false;
        for (int i = 0; i < 5; ++i)
            if (motion == kMotions[i]) {
                rec.spec.motion = static_cast<Motion>(i);
                ok = true;
            }
        if (!ok) throw CorruptFileError("read_manifest: unknown motion " + motion);
        ok = false;
        for (int i = 0; i < 3; ++i)
            if (bg == kBackgrounds[i]) {
                rec.spec.background = static_cast<Background>(i);
                ok = true;
            }
        if (!ok) throw CorruptFileError("read_manifest: unknown background " + bg);
        rec.spec.speed = j.at("speed");
        rec.seed = j.at("seed");
        rec.caption = j.at("caption");
        for (const auto& f : j.at("frames")) rec.frame_paths.push_back(f);
        records.push_back(std::move(rec));
    }
    return records;
}

} // namespace simda
