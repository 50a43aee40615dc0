// Synthetic data generator, caption grammar, and latent codec.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>

#include "simda/ppm.hpp"
#include "simda/rng.hpp"
#include "simda/toyworld.hpp"

using namespace simda;

TEST_CASE("static scenes render identical frames") {
    SceneSpec spec;
    spec.shape = Shape::square;
    spec.color = 2;
    spec.motion = Motion::still;
    auto clip = synth_video(spec, 6, 32, 32, 9);
    const int frame = clip.pixels.numel() / 6;
    for (int f = 1; f < 6; ++f)
        CHECK(std::memcmp(clip.pixels.data(), clip.pixels.data() + f * frame,
                          sizeof(float) * frame) == 0);
}

TEST_CASE("rightward motion moves the mask centroid exactly one pixel per frame") {
    SceneSpec spec;
    spec.shape = Shape::circle;
    spec.color = 0;
    spec.motion = Motion::right;
    spec.speed = 1;
    auto masks = synth_masks(spec, 8, 32, 32);
    double prev_cy = 0, prev_cx = 0;
    for (int f = 0; f < 8; ++f) {
        Tensor m({32, 32});
        for (int i = 0; i < 32 * 32; ++i) m[i] = masks[f * 32 * 32 + i];
        double cy, cx;
        mask_centroid(m, cy, cx);
        if (f > 0) {
            CHECK(cx - prev_cx == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(cy - prev_cy == doctest::Approx(0.0).epsilon(1e-12));
        }
        prev_cy = cy;
        prev_cx = cx;
    }
}

TEST_CASE("same spec and seed render bitwise-identical clips") {
    SceneSpec spec;
    spec.shape = Shape::triangle;
    spec.color = 5;
    spec.motion = Motion::down;
    spec.background = Background::noise;
    auto a = synth_video(spec, 4, 32, 32, 1234);
    auto b = synth_video(spec, 4, 32, 32, 1234);
    CHECK(std::memcmp(a.pixels.data(), b.pixels.data(), sizeof(float) * a.pixels.numel()) == 0);
    auto c = synth_video(spec, 4, 32, 32, 1235);
    CHECK(std::memcmp(a.pixels.data(), c.pixels.data(), sizeof(float) * a.pixels.numel()) != 0);
}

TEST_CASE("object leaving the canvas is rejected") {
    SceneSpec spec;
    spec.motion = Motion::right;
    spec.speed = 5; // 5 px/frame for 16 frames cannot fit in 32 px
    CHECK_THROWS_AS(synth_video(spec, 16, 32, 32, 1), ConfigError);
}

TEST_CASE("caption grammar is bijective over the full cartesian vocabulary") {
    int count = 0;
    for (int s = 0; s < 3; ++s)
        for (int c = 0; c < kPaletteSize; ++c)
            for (int m = 0; m < 5; ++m) {
                SceneSpec spec;
                spec.shape = static_cast<Shape>(s);
                spec.color = c;
                spec.motion = static_cast<Motion>(m);
                auto cap = caption_from_spec(spec);
                auto back = spec_from_caption(cap.text);
                CHECK(back.shape == spec.shape);
                CHECK(back.color == spec.color);
                CHECK(back.motion == spec.motion);
                ++count;
            }
    CHECK(count == 120);
}

TEST_CASE("tokenizer rejects unknown words") {
    CHECK_THROWS_AS(tokenize("a purple blob moving left"), VocabError);
    CHECK_THROWS_AS(spec_from_caption("a red dog moving left"), VocabError);
}

TEST_CASE("latent codec round-trips bitwise") {
    Rng rng(7);
    auto video = Tensor::randn({3, 3, 16, 16}, rng);
    auto latent = encode_latent(video);
    CHECK(latent.shape() == std::vector<int>{3, 48, 4, 4});
    auto back = decode_latent(latent);
    CHECK(std::memcmp(video.data(), back.data(), sizeof(float) * video.numel()) == 0);
}

TEST_CASE("constant image maps to constant latent") {
    auto video = Tensor::full({1, 3, 8, 8}, 0.625f);
    auto latent = encode_latent(video);
    for (int i = 0; i < latent.numel(); ++i) CHECK(latent[i] == 0.625f);
}

TEST_CASE("codec channel order matches the index table") {
    // single 4x4 pixel block: latent channel = rgb*16 + dy*4 + dx
    Tensor video({1, 3, 4, 4});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                video[(c * 4 + y) * 4 + x] = float(c * 100 + y * 10 + x);
    auto latent = encode_latent(video);
    CHECK(latent.shape() == std::vector<int>{1, 48, 1, 1});
    for (int c = 0; c < 3; ++c)
        for (int dy = 0; dy < 4; ++dy)
            for (int dx = 0; dx < 4; ++dx)
                CHECK(latent[c * 16 + dy * 4 + dx] == float(c * 100 + dy * 10 + dx));
}

TEST_CASE("codec validates extents") {
    CHECK_THROWS_AS(encode_latent(Tensor::zeros({1, 3, 6, 8})), ShapeError);
    CHECK_THROWS_AS(decode_latent(Tensor::zeros({1, 12, 2, 2})), ShapeError);
}

TEST_CASE("palette colors survive PPM quantization exactly") {
    SceneSpec spec;
    spec.color = 3;
    spec.shape = Shape::square;
    auto clip = synth_video(spec, 1, 16, 16, 5);
    Tensor frame({3, 16, 16});
    for (int i = 0; i < frame.numel(); ++i) frame[i] = clip.pixels[i];
    const auto path = std::filesystem::temp_directory_path() / "simda_toyworld_quant.ppm";
    write_ppm(path.string(), frame);
    auto back = read_ppm(path.string());
    CHECK(std::memcmp(frame.data(), back.data(), sizeof(float) * frame.numel()) == 0);
    std::filesystem::remove(path);
}

TEST_CASE("manifest round trip") {
    std::vector<ManifestRecord> records;
    for (int i = 0; i < 3; ++i) {
        ManifestRecord rec;
        rec.spec.shape = static_cast<Shape>(i);
        rec.spec.color = i * 2;
        rec.spec.motion = static_cast<Motion>(i);
        rec.spec.background = Background::noise;
        rec.spec.speed = 1 + i;
        rec.seed = 1000 + i;
        rec.caption = caption_from_spec(rec.spec).text;
        rec.frame_paths = {"clip" + std::to_string(i) + "/f0.ppm",
                           "clip" + std::to_string(i) + "/f1.ppm"};
        records.push_back(rec);
    }
    const auto path = std::filesystem::temp_directory_path() / "simda_toyworld_manifest.jsonl";
    write_manifest(path.string(), records);
    auto rt = read_manifest(path.string());
    REQUIRE(rt.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(rt[i].spec.shape == records[i].spec.shape);
        CHECK(rt[i].spec.color == records[i].spec.color);
        CHECK(rt[i].spec.motion == records[i].spec.motion);
        CHECK(rt[i].spec.speed == records[i].spec.speed);
        CHECK(rt[i].spec.background == records[i].spec.background);
        CHECK(rt[i].seed == records[i].seed);
        CHECK(rt[i].caption == records[i].caption);
        CHECK(rt[i].frame_paths == records[i].frame_paths);
    }
    std::filesystem::remove(path);
}
