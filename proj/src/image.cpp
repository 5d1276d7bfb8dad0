#include "edms/image.hpp"

#include <cmath>
#include <fstream>

namespace edms {

namespace {

void write_pnm(const std::filesystem::path& path, const char* magic, int w, int h,
               const std::vector<uint8_t>& data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ImageError("cannot open for writing: " + path.string());
    f << magic << "\n" << w << " " << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
    if (!f) throw ImageError("write failed: " + path.string());
}

int read_pnm_int(std::istream& in) {
    int c = in.get();
    while (c == '#' || std::isspace(c)) {
        if (c == '#') {
            while (c != '\n' && c != EOF) c = in.get();
        }
        c = in.get();
    }
    int v = 0;
    bool any = false;
    while (std::isdigit(c)) {
        v = v * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw ImageError("malformed PNM header");
    return v;
}

std::vector<uint8_t> read_pnm(const std::filesystem::path& path, const char* magic,
                              int channels, int& w, int& h) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ImageError("cannot open: " + path.string());
    char m[2];
    f.read(m, 2);
    if (!f || m[0] != magic[0] || m[1] != magic[1]) {
        throw ImageError("bad PNM magic in " + path.string());
    }
    w = read_pnm_int(f);
    h = read_pnm_int(f);
    const int maxval = read_pnm_int(f);
    if (maxval != 255) throw ImageError("PNM maxval must be 255: " + path.string());
    if (w < 1 || h < 1) throw ImageError("bad PNM dims: " + path.string());
    std::vector<uint8_t> data(std::size_t(w) * h * channels);
    f.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size()));
    if (!f) throw ImageError("PNM payload truncated: " + path.string());
    return data;
}

}  // namespace

void write_ppm(const ImageU8& img, const std::filesystem::path& path) {
    write_pnm(path, "P6", img.w, img.h, img.data);
}

ImageU8 read_ppm(const std::filesystem::path& path) {
    ImageU8 img;
    img.data = read_pnm(path, "P6", 3, img.w, img.h);
    return img;
}

void write_pgm(const ClassMap& map, const std::filesystem::path& path) {
    write_pnm(path, "P5", map.w, map.h, map.data);
}

ClassMap read_pgm(const std::filesystem::path& path) {
    ClassMap map;
    map.data = read_pnm(path, "P5", 1, map.w, map.h);
    return map;
}

ImageU8 reflect_pad_to_multiple8(const ImageU8& img) {
    if (img.w < 8 || img.h < 8) throw ImageError("image too small (need >= 8x8)");
    const int pw = (img.w + 7) / 8 * 8;
    const int ph = (img.h + 7) / 8 * 8;
    if (pw == img.w && ph == img.h) return img;
    ImageU8 out(pw, ph);
    for (int y = 0; y < ph; ++y) {
        const int sy = y < img.h ? y : 2 * img.h - 1 - y;
        for (int x = 0; x < pw; ++x) {
            const int sx = x < img.w ? x : 2 * img.w - 1 - x;
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
        }
    }
    return out;
}

ImageU8 crop(const ImageU8& img, int w, int h) {
    if (w > img.w || h > img.h) throw ImageError("crop larger than image");
    if (w == img.w && h == img.h) return img;
    ImageU8 out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, c);
        }
    }
    return out;
}

Tensor image_as_float(const ImageU8& img) {
    Tensor t(1, 3, img.h, img.w);
    for (int c = 0; c < 3; ++c) {
        float* dst = t.plane(0, c);
        for (int y = 0; y < img.h; ++y) {
            for (int x = 0; x < img.w; ++x) {
                dst[std::size_t(y) * img.w + x] = float(img.at(y, x, c));
            }
        }
    }
    return t;
}

Tensor normalize_float(const Tensor& t) {
    Tensor out(t.dims);
    for (std::size_t i = 0; i < t.count(); ++i) {
        out.data[i] = t.data[i] / 127.5f - 1.0f;
    }
    return out;
}

Tensor normalize_image(const ImageU8& img) {
    return normalize_float(image_as_float(img));
}

ImageU8 denormalize_image(const Tensor& t) {
    if (t.dims.n != 1 || t.dims.c != 3) throw ImageError("denormalize expects 1x3xHxW");
    ImageU8 img(t.dims.w, t.dims.h);
    for (int c = 0; c < 3; ++c) {
        const float* src = t.plane(0, c);
        for (int y = 0; y < t.dims.h; ++y) {
            for (int x = 0; x < t.dims.w; ++x) {
                const float v = (src[std::size_t(y) * t.dims.w + x] + 1.0f) * 127.5f;
                long r = std::lround(v);  // rounds half away from zero
                if (r < 0) r = 0;
                if (r > 255) r = 255;
                img.at(y, x, c) = uint8_t(r);
            }
        }
    }
    return img;
}

}  // namespace edms
