#include "simda/ppm.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

#include "simda/error.hpp"

namespace simda {

void write_ppm(const std::string& path, const Tensor& frame) {
    if (frame.ndim() != 3 || frame.dim(0) != 3)
        throw ShapeError("write_ppm: expected [3,H,W] frame");
    const int H = frame.dim(1), W = frame.dim(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_ppm: cannot open " + path);
    out << "P6\n" << W << " " << H << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(W) * 3);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            for (int c = 0; c < 3; ++c) {
                float v = frame[(c * H + y) * W + x];
                if (v < 0.0f) v = 0.0f;
                if (v > 1.0f) v = 1.0f;
                row[static_cast<std::size_t>(x) * 3 + c] =
                    static_cast<unsigned char>(v * 255.0f + 0.5f);
            }
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("write_ppm: short write to " + path);
}

namespace {

int read_ppm_int(std::istream& in) {
    // Skips whitespace and '#' comment lines.
    int c = in.get();
    while (c == '#' || std::isspace(c)) {
        if (c == '#')
            while (c != '\n' && c != EOF) c = in.get();
        c = in.get();
    }
    int value = 0;
    bool any = false;
    while (std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw CorruptFileError("read_ppm: malformed header");
    return value;
}

} // namespace

Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_ppm: cannot open " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '6') throw CorruptFileError("read_ppm: not a P6 file: " + path);
    const int W = read_ppm_int(in);
    const int H = read_ppm_int(in);
    const int maxval = read_ppm_int(in);
    if (maxval != 255) throw CorruptFileError("read_ppm: only maxval 255 supported");
    std::vector<unsigned char> bytes(static_cast<std::size_t>(W) * H * 3);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw CorruptFileError("read_ppm: truncated pixel data in " + path);
    Tensor frame({3, H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c)
                frame[(c * H + y) * W + x] =
                    static_cast<float>(bytes[(static_cast<std::size_t>(y) * W + x) * 3 + c]) / 255.0f;
    return frame;
}

} // namespace simda
