#pragma once

#include <fstream>

#include "weldsign/tensor.hpp"

namespace weldsign {

/// Load a binary portable pixmap (P6) or graymap (P5) as H×W×3 in [0,1].
/// Grayscale input is replicated across the three channels.
inline Tensor load_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("image: cannot open '" + path + "'");
    std::string magic;
    f >> magic;
    if (magic != "P5" && magic != "P6") throw std::runtime_error("image: '" + path + "' is not a P5/P6 pixmap");
    auto next_int = [&f, &path]() {
        int v;
        // skip whitespace and '#' comment lines
        for (;;) {
            f >> std::ws;
            if (f.peek() == '#') {
                std::string line;
                std::getline(f, line);
            } else {
                break;
            }
        }
        if (!(f >> v)) throw std::runtime_error("image: malformed header in '" + path + "'");
        return v;
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (w < 1 || h < 1 || maxval != 255) throw std::runtime_error("image: unsupported pixmap header in '" + path + "'");
    f.get();  // single whitespace after maxval
    const int src_ch = magic == "P6" ? 3 : 1;
    std::vector<uint8_t> bytes(static_cast<size_t>(w) * h * src_ch);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (f.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw std::runtime_error("image: truncated pixel data in '" + path + "'");
    }
    Tensor out({h, w, 3});
    float* dst = out.raw();
    for (int64_t px = 0; px < static_cast<int64_t>(w) * h; ++px) {
        for (int c = 0; c < 3; ++c) {
            dst[px * 3 + c] = static_cast<float>(bytes[px * src_ch + (src_ch == 3 ? c : 0)]) / 255.0f;
        }
    }
    return out;
}

/// Write a 3-channel [0,1] tensor as a binary P6 pixmap.
inline void save_ppm(const std::string& path, const Tensor& img) {
    if (img.rank() != 3 || img.channels() != 3) {
        throw std::invalid_argument("image: save expects H×W×3, got " + img.shape_str());
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("image: cannot open '" + path + "' for writing");
    f << "P6\n" << img.width() << " " << img.height() << "\n255\n";
    std::vector<uint8_t> bytes(static_cast<size_t>(img.size()));
    for (int64_t i = 0; i < img.size(); ++i) {
        const float v = std::min(1.0f, std::max(0.0f, img[i]));
        bytes[static_cast<size_t>(i)] = static_cast<uint8_t>(v * 255.0f + 0.5f);
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("image: short write to '" + path + "'");
}

inline Tensor resize_bilinear(const Tensor& img, int out_h, int out_w) {
    const int h = img.height(), w = img.width(), c = img.channels();
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize: target dims must be positive");
    Tensor out({out_h, out_w, c});
    const float sy = static_cast<float>(h) / static_cast<float>(out_h);
    const float sx = static_cast<float>(w) / static_cast<float>(out_w);
    for (int y = 0; y < out_h; ++y) {
        const float fy = std::min(std::max((y + 0.5f) * sy - 0.5f, 0.0f), static_cast<float>(h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, h - 1);
        const float wy = fy - static_cast<float>(y0);
        for (int x = 0; x < out_w; ++x) {
            const float fx = std::min(std::max((x + 0.5f) * sx - 0.5f, 0.0f), static_cast<float>(w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, w - 1);
            const float wx = fx - static_cast<float>(x0);
            for (int ch = 0; ch < c; ++ch) {
                const float top = img.at(y0, x0, ch) * (1 - wx) + img.at(y0, x1, ch) * wx;
                const float bot = img.at(y1, x0, ch) * (1 - wx) + img.at(y1, x1, ch) * wx;
                out.at(y, x, ch) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

/// Rotate by `times`·90° clockwise (exact pixel permutation).
inline Tensor rotate90_cw(const Tensor& img, int times) {
    Tensor cur = img;
    times = ((times % 4) + 4) % 4;
    for (int t = 0; t < times; ++t) {
        const int h = cur.height(), w = cur.width(), c = cur.channels();
        Tensor next({w, h, c});
        for (int y = 0; y < w; ++y) {
            for (int x = 0; x < h; ++x) {
                for (int ch = 0; ch < c; ++ch) next.at(y, x, ch) = cur.at(h - 1 - x, y, ch);
            }
        }
        cur = std::move(next);
    }
    return cur;
}

inline Tensor rotate90_ccw(const Tensor& img, int times) { return rotate90_cw(img, (4 - ((times % 4) + 4) % 4) % 4); }

struct TileRef {
    Tensor tile;
    int off_y = 0;
    int off_x = 0;
};

/// Split into a non-overlapping grid of `tile`×`tile` squares; partial tiles
/// on the right/bottom edge are zero-padded. Offsets are original-image
/// pixel coordinates of each tile's top-left corner.
inline std::vector<TileRef> tile_image(const Tensor& img, int tile = 416) {
    const int h = img.height(), w = img.width(), c = img.channels();
    if (tile < 1) throw std::invalid_argument("tile: size must be positive");
    std::vector<TileRef> tiles;
    for (int ty = 0; ty < h; ty += tile) {
        for (int tx = 0; tx < w; tx += tile) {
            TileRef ref;
            ref.off_y = ty;
            ref.off_x = tx;
            ref.tile = Tensor({tile, tile, c});
            const int copy_h = std::min(tile, h - ty);
            const int copy_w = std::min(tile, w - tx);
            for (int y = 0; y < copy_h; ++y) {
                const float* src = img.raw() + ((static_cast<int64_t>(ty + y) * w) + tx) * c;
                float* dst = ref.tile.raw() + static_cast<int64_t>(y) * tile * c;
                std::copy(src, src + static_cast<int64_t>(copy_w) * c, dst);
            }
            tiles.push_back(std::move(ref));
        }
    }
    return tiles;
}

}  // namespace weldsign
