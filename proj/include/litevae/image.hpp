#pragma once

// 8-bit RGB image I/O (PPM P6), area resampling, and the deterministic
// dataset pipeline: center-crop to square, area-downsample to the target
// resolution, map pixels to [-1, 1].

#include <cstdint>
#include <string>
#include <vector>

#include "litevae/tensor.hpp"

namespace litevae {

struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel

    int64_t pixels() const { return static_cast<int64_t>(width) * height; }
};

ImageU8 read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageU8& img);

// Center crop to the largest square.
ImageU8 center_crop_square(const ImageU8& img);

// Area resampling (box average for shrink, bilinear for enlarge).
ImageU8 resize_area(const ImageU8& img, int out_w, int out_h);

// [0,255] u8 -> [-1,1] CHW floats for one image.
template <typename T>
std::vector<T> image_to_chw(const ImageU8& img) {
    std::vector<T> out(static_cast<size_t>(3) * img.pixels());
    int64_t plane = img.pixels();
    for (int64_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c)
            out[static_cast<size_t>(c * plane + i)] =
                static_cast<T>(img.rgb[static_cast<size_t>(3 * i + c)]) / T(127.5) - T(1);
    return out;
}

// [-1,1] CHW floats -> clamped u8 image.
template <typename T>
ImageU8 chw_to_image(const T* data, int height, int width) {
    ImageU8 img;
    img.width = width;
    img.height = height;
    img.rgb.resize(static_cast<size_t>(3) * width * height);
    int64_t plane = static_cast<int64_t>(width) * height;
    for (int64_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c) {
            T v = (data[c * plane + i] + T(1)) * T(127.5);
            int q = static_cast<int>(std::lround(static_cast<double>(v)));
            img.rgb[static_cast<size_t>(3 * i + c)] = static_cast<uint8_t>(std::min(255, std::max(0, q)));
        }
    return img;
}

// In-memory dataset of source images. Per-resolution tensors are cached after
// the first request so training steps do not re-resample.
class ImageDataset {
public:
    static ImageDataset load_dir(const std::string& dir);
    static ImageDataset from_images(std::vector<ImageU8> images, std::vector<std::string> names);

    size_t size() const { return images_.size(); }
    const ImageU8& image(size_t i) const { return images_[i]; }
    const std::string& name(size_t i) const { return names_[i]; }
    int min_extent() const;

    // Cropped/resized [-1,1] CHW pixels for image i at resolution res.
    const std::vector<float>& pixels_f32(size_t i, int res) const;

    template <typename T>
    Tensor<T> batch(const std::vector<int>& indices, int res) const {
        int64_t plane = static_cast<int64_t>(3) * res * res;
        std::vector<T> data(static_cast<size_t>(indices.size()) * plane);
        for (size_t b = 0; b < indices.size(); ++b) {
            const auto& px = pixels_f32(static_cast<size_t>(indices[b]), res);
            for (int64_t i = 0; i < plane; ++i)
                data[b * static_cast<size_t>(plane) + static_cast<size_t>(i)] = static_cast<T>(px[static_cast<size_t>(i)]);
        }
        return Tensor<T>::from(std::move(data), {static_cast<int>(indices.size()), 3, res, res});
    }

private:
    std::vector<ImageU8> images_;
    std::vector<std::string> names_;
    mutable std::vector<std::vector<std::vector<float>>> cache_;  // [image][res slot]
    mutable std::vector<std::vector<int>> cache_res_;
};

}  // namespace litevae
