#pragma once

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "ganpr/tensor.hpp"

namespace ganpr {

// 8-bit interleaved image buffer used at the I/O boundary. The numeric side
// of the library always works on [C,H,W] tensors in [-1,1].
struct ImageU8 {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 or 3
    std::vector<uint8_t> pixels;

    size_t index(int y, int x, int c) const {
        return (static_cast<size_t>(y) * width + x) * channels + c;
    }
};

inline Tensor tensor_from_u8(const ImageU8& img) {
    Tensor t({img.channels, img.height, img.width});
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                t[((static_cast<size_t>(c) * img.height) + y) * img.width + x] =
                    img.pixels[img.index(y, x, c)] / 255.0 * 2.0 - 1.0;
    return t;
}

inline ImageU8 u8_from_tensor(const Tensor& t) {
    check(t.ndim() == 3, "u8_from_tensor: expected [C,H,W], got ", t.shape_str());
    ImageU8 img;
    img.channels = t.dim(0);
    img.height = t.dim(1);
    img.width = t.dim(2);
    img.pixels.resize(static_cast<size_t>(img.channels) * img.height * img.width);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                double v = (t[((static_cast<size_t>(c) * img.height) + y) * img.width + x] + 1.0) *
                           0.5 * 255.0;
                v = std::min(255.0, std::max(0.0, v));
                img.pixels[img.index(y, x, c)] = static_cast<uint8_t>(std::lround(v));
            }
    return img;
}

namespace imageio {

// ---- PPM / PGM (binary) ----------------------------------------------------

inline void write_pnm(const ImageU8& img, const std::string& path) {
    check(img.channels == 1 || img.channels == 3, "write_pnm: channels must be 1 or 3");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    check(out.good(), "write_pnm: cannot open '", path, "'");
    out << (img.channels == 3 ? "P6" : "P5") << "\n"
        << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    check(out.good(), "write_pnm: write to '", path, "' failed");
}

inline ImageU8 read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "read_pnm: cannot open '", path, "'");
    std::string magic;
    in >> magic;
    check(magic == "P6" || magic == "P5", "read_pnm: '", path, "' is not binary PPM/PGM");
    const auto next_int = [&] {
        // skip whitespace and '#' comments
        for (;;) {
            int ch = in.peek();
            if (ch == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(ch)) {
                in.get();
            } else {
                break;
            }
        }
        int v;
        in >> v;
        check(in.good(), "read_pnm: malformed header in '", path, "'");
        return v;
    };
    ImageU8 img;
    img.width = next_int();
    img.height = next_int();
    const int maxval = next_int();
    check(maxval == 255, "read_pnm: only 8-bit images supported, got maxval ", maxval);
    in.get();  // single whitespace before raster
    img.channels = magic == "P6" ? 3 : 1;
    img.pixels.resize(static_cast<size_t>(img.width) * img.height * img.channels);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    check(in.gcount() == static_cast<std::streamsize>(img.pixels.size()),
          "read_pnm: truncated raster in '", path, "'");
    return img;
}

// ---- PNG ---------------------------------------------------------------------

inline void write_png(const ImageU8& img, const std::string& path) {
    check(img.channels == 1 || img.channels == 3, "write_png: channels must be 1 or 3");
    FILE* fp = std::fopen(path.c_str(), "wb");
    check(fp != nullptr, "write_png: cannot open '", path, "'");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        fail("write_png: libpng failure writing '", path, "'");
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<size_t>(y)] =
            const_cast<png_bytep>(img.pixels.data() + img.index(y, 0, 0));
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline ImageU8 read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    check(fp != nullptr, "read_png: cannot open '", path, "'");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        std::fclose(fp);
        fail("read_png: '", path, "' is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        fail("read_png: libpng failure reading '", path, "'");
    }
    png_init_io(png, fp);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    ImageU8 img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = static_cast<int>(png_get_channels(png, info));
    check(img.channels == 1 || img.channels == 3, "read_png: unsupported channel count ",
          img.channels, " in '", path, "'");
    img.pixels.resize(static_cast<size_t>(img.width) * img.height * img.channels);
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<size_t>(y)] = img.pixels.data() + img.index(y, 0, 0);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

// ---- JPEG ---------------------------------------------------------------------

namespace detail {
struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};
inline void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}
}  // namespace detail

inline ImageU8 read_jpeg(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    check(fp != nullptr, "read_jpeg: cannot open '", path, "'");
    jpeg_decompress_struct cinfo;
    detail::JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = detail::jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        std::fclose(fp);
        fail("read_jpeg: libjpeg failure reading '", path, "'");
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    ImageU8 img;
    img.width = static_cast<int>(cinfo.output_width);
    img.height = static_cast<int>(cinfo.output_height);
    img.channels = 3;
    img.pixels.resize(static_cast<size_t>(img.width) * img.height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.pixels.data() + img.index(static_cast<int>(cinfo.output_scanline), 0, 0);
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    std::fclose(fp);
    return img;
}

inline void write_jpeg(const ImageU8& img, const std::string& path, int quality = 95) {
    check(img.channels == 3, "write_jpeg: only RGB images supported");
    FILE* fp = std::fopen(path.c_str(), "wb");
    check(fp != nullptr, "write_jpeg: cannot open '", path, "'");
    jpeg_compress_struct cinfo;
    detail::JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = detail::jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        std::fclose(fp);
        fail("write_jpeg: libjpeg failure writing '", path, "'");
    }
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, fp);
    cinfo.image_width = static_cast<JDIMENSION>(img.width);
    cinfo.image_height = static_cast<JDIMENSION>(img.height);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    std::vector<uint8_t> row(static_cast<size_t>(img.width) * 3);
    while (cinfo.next_scanline < cinfo.image_height) {
        std::copy(img.pixels.begin() +
                      static_cast<long>(static_cast<size_t>(cinfo.next_scanline) * row.size()),
                  img.pixels.begin() +
                      static_cast<long>((static_cast<size_t>(cinfo.next_scanline) + 1) * row.size()),
                  row.begin());
        JSAMPROW rp = row.data();
        jpeg_write_scanlines(&cinfo, &rp, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    std::fclose(fp);
}

// ---- format dispatch -----------------------------------------------------------

inline bool has_suffix(const std::string& s, const std::string& suffix) {
    if (s.size() < suffix.size()) return false;
    std::string tail = s.substr(s.size() - suffix.size());
    for (auto& ch : tail) ch = static_cast<char>(std::tolower(ch));
    return tail == suffix;
}

inline bool is_supported_image(const std::string& path) {
    return has_suffix(path, ".png") || has_suffix(path, ".jpg") || has_suffix(path, ".jpeg") ||
           has_suffix(path, ".ppm") || has_suffix(path, ".pgm");
}

inline ImageU8 read_image(const std::string& path) {
    if (has_suffix(path, ".png")) return read_png(path);
    if (has_suffix(path, ".jpg") || has_suffix(path, ".jpeg")) return read_jpeg(path);
    if (has_suffix(path, ".ppm") || has_suffix(path, ".pgm")) return read_pnm(path);
    fail("read_image: unsupported image format for '", path, "'");
}

inline void write_image(const ImageU8& img, const std::string& path) {
    if (has_suffix(path, ".png")) return write_png(img, path);
    if (has_suffix(path, ".jpg") || has_suffix(path, ".jpeg")) return write_jpeg(img, path);
    if (has_suffix(path, ".ppm") || has_suffix(path, ".pgm")) return write_pnm(img, path);
    fail("write_image: unsupported image format for '", path, "'");
}

}  // namespace imageio
}  // namespace ganpr
