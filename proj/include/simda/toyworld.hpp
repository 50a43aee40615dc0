#pragma once

// Synthetic captioned moving-shape videos, the bijective space-to-depth
// latent codec, and the closed caption vocabulary.

#include <cstdint>
#include <string>
#include <vector>

#include "simda/tensor.hpp"

namespace simda {

enum class Shape { circle, square, triangle };
enum class Motion { left, right, up, down, still };
enum class Background { black, white, noise };

constexpr int kPaletteSize = 8;

struct SceneSpec {
    Shape shape = Shape::circle;
    int color = 0; // palette index
    Motion motion = Motion::still;
    int speed = 1; // pixels per frame, ignored for still scenes
    Background background = Background::black;
};

struct Caption {
    std::vector<int> token_ids;
    std::string text;
};

// --- vocabulary -------------------------------------------------------------

const std::vector<std::string>& vocabulary(); // index 0 is the padding token
int token_id(const std::string& word);        // VocabError on unknown words
std::vector<int> tokenize(const std::string& text);

const char* color_name(int palette_index);
const char* shape_name(Shape s);
const char* motion_name(Motion m);
const char* background_name(Background b);
void palette_rgb(int palette_index, float rgb[3]);

// Deterministic caption; bijective with (shape, color, motion).
Caption caption_from_spec(const SceneSpec& spec);
// Inverse map; speed/background take their defaults.
SceneSpec spec_from_caption(const std::string& text);

// --- rendering --------------------------------------------------------------

struct VideoClip {
    Tensor pixels; // [L,3,H,W] in [0,1]
    Caption caption;
    SceneSpec spec;
    std::uint64_t seed = 0;
};

// Deterministic given (spec, seed); the object centroid moves exactly
// spec.speed pixels per frame in the stated direction. Throws ConfigError if
// the object would exit the canvas.
VideoClip synth_video(const SceneSpec& spec, int frames, int height, int width,
                      std::uint64_t seed);

// Ground-truth object masks, [L,1,H,W] with values in {0,1}.
Tensor synth_masks(const SceneSpec& spec, int frames, int height, int width);

// Centroid (y, x) of a [1,H,W] or [H,W]-shaped binary mask, in double.
void mask_centroid(const Tensor& mask, double& cy, double& cx);

// --- latent codec -----------------------------------------------------------

// Space-to-depth x4 bijection; channel order is block-major:
// latent channel = rgb * 16 + dy * 4 + dx.
Tensor encode_latent(const Tensor& pixels); // [L,3,H,W] -> [L,48,H/4,W/4]
Tensor decode_latent(const Tensor& latent); // exact inverse, bitwise

// --- dataset manifest -------------------------------------------------------

struct ManifestRecord {
    SceneSpec spec;
    std::uint64_t seed = 0;
    std::string caption;
    std::vector<std::string> frame_paths; // relative to the manifest location
};

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> read_manifest(const std::string& path);

} // namespace simda
