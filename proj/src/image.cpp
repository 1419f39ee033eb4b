#include "litevae/image.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "litevae/errors.hpp"

namespace litevae {

namespace {

// Skips whitespace and '#' comments between PPM header tokens.
int read_ppm_int(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) throw DataError(path + ": malformed PPM header");
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = in.get();
    }
    return v;
}

}  // namespace

ImageU8 read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open");
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '6') throw DataError(path + ": not a P6 PPM file");
    ImageU8 img;
    img.width = read_ppm_int(in, path);
    img.height = read_ppm_int(in, path);
    int maxval = read_ppm_int(in, path);
    if (img.width <= 0 || img.height <= 0 || maxval != 255)
        throw DataError(path + ": unsupported PPM geometry or maxval");
    img.rgb.resize(static_cast<size_t>(3) * img.pixels());
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.rgb.size()))
        throw DataError(path + ": truncated pixel data");
    return img;
}

void write_ppm(const std::string& path, const ImageU8& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()),
              static_cast<std::streamsize>(img.rgb.size()));
    if (!out) throw DataError(path + ": write failed");
}

ImageU8 center_crop_square(const ImageU8& img) {
    int side = std::min(img.width, img.height);
    if (side == img.width && side == img.height) return img;
    int x0 = (img.width - side) / 2;
    int y0 = (img.height - side) / 2;
    ImageU8 out;
    out.width = side;
    out.height = side;
    out.rgb.resize(static_cast<size_t>(3) * side * side);
    for (int y = 0; y < side; ++y)
        std::copy_n(img.rgb.data() + (static_cast<int64_t>(y0 + y) * img.width + x0) * 3,
                    static_cast<int64_t>(side) * 3,
                    out.rgb.data() + static_cast<int64_t>(y) * side * 3);
    return out;
}

ImageU8 resize_area(const ImageU8& img, int out_w, int out_h) {
    if (out_w == img.width && out_h == img.height) return img;
    ImageU8 out;
    out.width = out_w;
    out.height = out_h;
    out.rgb.resize(static_cast<size_t>(3) * out_w * out_h);
    double sx = static_cast<double>(img.width) / out_w;
    double sy = static_cast<double>(img.height) / out_h;

    if (out_w <= img.width && out_h <= img.height) {
        // area average with fractional-overlap weights
        for (int oy = 0; oy < out_h; ++oy) {
            double y0 = oy * sy, y1 = (oy + 1) * sy;
            int iy0 = static_cast<int>(std::floor(y0));
            int iy1 = std::min(img.height, static_cast<int>(std::ceil(y1)));
            for (int ox = 0; ox < out_w; ++ox) {
                double x0 = ox * sx, x1 = (ox + 1) * sx;
                int ix0 = static_cast<int>(std::floor(x0));
                int ix1 = std::min(img.width, static_cast<int>(std::ceil(x1)));
                double acc[3] = {0, 0, 0};
                double wsum = 0;
                for (int iy = iy0; iy < iy1; ++iy) {
                    double wy = std::min(y1, iy + 1.0) - std::max(y0, static_cast<double>(iy));
                    for (int ix = ix0; ix < ix1; ++ix) {
                        double wx = std::min(x1, ix + 1.0) - std::max(x0, static_cast<double>(ix));
                        double w = wx * wy;
                        const uint8_t* p = img.rgb.data() + (static_cast<int64_t>(iy) * img.width + ix) * 3;
                        acc[0] += w * p[0];
                        acc[1] += w * p[1];
                        acc[2] += w * p[2];
                        wsum += w;
                    }
                }
                uint8_t* o = out.rgb.data() + (static_cast<int64_t>(oy) * out_w + ox) * 3;
                for (int c = 0; c < 3; ++c)
                    o[c] = static_cast<uint8_t>(std::lround(acc[c] / wsum));
            }
        }
    } else {
        // bilinear for enlargement
        for (int oy = 0; oy < out_h; ++oy) {
            double fy = (oy + 0.5) * sy - 0.5;
            int iy = static_cast<int>(std::floor(fy));
            double ty = fy - iy;
            int iy0 = std::clamp(iy, 0, img.height - 1);
            int iy1 = std::clamp(iy + 1, 0, img.height - 1);
            for (int ox = 0; ox < out_w; ++ox) {
                double fx = (ox + 0.5) * sx - 0.5;
                int ix = static_cast<int>(std::floor(fx));
                double tx = fx - ix;
                int ix0 = std::clamp(ix, 0, img.width - 1);
                int ix1 = std::clamp(ix + 1, 0, img.width - 1);
                uint8_t* o = out.rgb.data() + (static_cast<int64_t>(oy) * out_w + ox) * 3;
                for (int c = 0; c < 3; ++c) {
                    double v00 = img.rgb[(static_cast<int64_t>(iy0) * img.width + ix0) * 3 + c];
                    double v01 = img.rgb[(static_cast<int64_t>(iy0) * img.width + ix1) * 3 + c];
                    double v10 = img.rgb[(static_cast<int64_t>(iy1) * img.width + ix0) * 3 + c];
                    double v11 = img.rgb[(static_cast<int64_t>(iy1) * img.width + ix1) * 3 + c];
                    double v = (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
                    o[c] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
                }
            }
        }
    }
    return out;
}

ImageDataset ImageDataset::load_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError(dir + ": not a directory");
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".ppm") paths.push_back(e.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw DataError(dir + ": no .ppm images found");
    ImageDataset ds;
    for (const auto& p : paths) {
        ds.images_.push_back(read_ppm(p));
        ds.names_.push_back(fs::path(p).filename().string());
    }
    ds.cache_.resize(ds.images_.size());
    ds.cache_res_.resize(ds.images_.size());
    return ds;
}

ImageDataset ImageDataset::from_images(std::vector<ImageU8> images, std::vector<std::string> names) {
    ImageDataset ds;
    ds.images_ = std::move(images);
    ds.names_ = std::move(names);
    ds.cache_.resize(ds.images_.size());
    ds.cache_res_.resize(ds.images_.size());
    return ds;
}

int ImageDataset::min_extent() const {
    int m = 1 << 30;
    for (const auto& img : images_) m = std::min({m, img.width, img.height});
    return m;
}

const std::vector<float>& ImageDataset::pixels_f32(size_t i, int res) const {
    auto& slots = cache_res_[i];
    for (size_t s = 0; s < slots.size(); ++s)
        if (slots[s] == res) return cache_[i][s];
    ImageU8 prep = resize_area(center_crop_square(images_[i]), res, res);
    cache_[i].push_back(image_to_chw<float>(prep));
    slots.push_back(res);
    return cache_[i].back();
}

}  // namespace litevae
