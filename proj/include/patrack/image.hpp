#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace patrack {

/// 8-bit image, channel-major ([C][H][W]), C in {1, 3}. The storage type of
/// every dataset frame; conversion to float tensors happens at the model
/// boundary so on-disk round trips stay bit-exact.
struct ImageU8 {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<uint8_t> pixels;  // channels*height*width, row-major per channel

    static ImageU8 make(int channels, int height, int width, uint8_t fill = 0) {
        ImageU8 img;
        img.channels = channels;
        img.height = height;
        img.width = width;
        img.pixels.assign(static_cast<size_t>(channels) * height * width, fill);
        return img;
    }

    uint8_t& at(int c, int y, int x) { return pixels[(static_cast<size_t>(c) * height + y) * width + x]; }
    uint8_t at(int c, int y, int x) const { return pixels[(static_cast<size_t>(c) * height + y) * width + x]; }

    bool operator==(const ImageU8& other) const = default;
};

/// Binary P6 when the image has 3 channels, binary P5 for 1 channel.
void write_pnm(const ImageU8& img, const std::string& path);
ImageU8 read_pnm(const std::string& path);

/// Luminance plane via the (0.299, 0.587, 0.114) weights, truncated to the
/// 256-level grid; single-channel images pass through.
std::vector<uint8_t> luminance_plane(const ImageU8& img);

}  // namespace patrack
