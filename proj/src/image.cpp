#include "patrack/image.hpp"

#include <fstream>

#include "patrack/errors.hpp"

namespace patrack {

void write_pnm(const ImageU8& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    const bool color = img.channels == 3;
    if (!color && img.channels != 1) throw IoError("write_pnm: unsupported channel count for " + path);
    f << (color ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
    // PNM is interleaved; our storage is channel-major.
    std::vector<uint8_t> row(static_cast<size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) row[static_cast<size_t>(x) * img.channels + c] = img.at(c, y, x);
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw IoError("write failed: " + path);
}

namespace {

int read_pnm_token(std::istream& in, const std::string& path) {
    // Skips whitespace and '#' comments between header tokens.
    int ch = in.get();
    while (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '#') {
        if (ch == '#') {
            while (ch != '\n' && ch != EOF) ch = in.get();
        }
        ch = in.get();
    }
    int value = 0;
    bool any = false;
    while (ch >= '0' && ch <= '9') {
        value = value * 10 + (ch - '0');
        any = true;
        ch = in.get();
    }
    if (!any) throw IoError("malformed PNM header in " + path);
    return value;
}

}  // namespace

ImageU8 read_pnm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    char m0 = 0, m1 = 0;
    f.get(m0);
    f.get(m1);
    int channels;
    if (m0 == 'P' && m1 == '6') channels = 3;
    else if (m0 == 'P' && m1 == '5') channels = 1;
    else throw IoError("not a binary PPM/PGM file: " + path);
    int width = read_pnm_token(f, path);
    int height = read_pnm_token(f, path);
    int maxval = read_pnm_token(f, path);
    if (maxval != 255) throw IoError("unsupported maxval " + std::to_string(maxval) + " in " + path);
    ImageU8 img = ImageU8::make(channels, height, width);
    std::vector<uint8_t> row(static_cast<size_t>(width) * channels);
    for (int y = 0; y < height; ++y) {
        f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        if (!f) throw IoError("truncated pixel data in " + path);
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c) img.at(c, y, x) = row[static_cast<size_t>(x) * channels + c];
    }
    return img;
}

std::vector<uint8_t> luminance_plane(const ImageU8& img) {
    std::vector<uint8_t> out(static_cast<size_t>(img.height) * img.width);
    if (img.channels == 1) {
        out.assign(img.pixels.begin(), img.pixels.end());
        return out;
    }
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double lum = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
            int q = static_cast<int>(lum);  // truncation
            out[static_cast<size_t>(y) * img.width + x] = static_cast<uint8_t>(q > 255 ? 255 : q);
        }
    return out;
}

}  // namespace patrack
