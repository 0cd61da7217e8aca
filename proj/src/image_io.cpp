#include "t2i/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace t2i {

namespace {

std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t crc = 0xffffffffu) {
  static std::uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    init = true;
  }
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
  return crc;
}

std::uint32_t adler32(const std::uint8_t* data, std::size_t len) {
  std::uint32_t a = 1, b = 0;
  for (std::size_t i = 0; i < len; ++i) {
    a = (a + data[i]) % 65521;
    b = (b + a) % 65521;
  }
  return (b << 16) | a;
}

void push_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void push_chunk(std::vector<std::uint8_t>& out, const char type[4],
                const std::vector<std::uint8_t>& payload) {
  push_u32(out, static_cast<std::uint32_t>(payload.size()));
  std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  std::uint32_t crc = crc32(out.data() + start, out.size() - start) ^ 0xffffffffu;
  push_u32(out, crc);
}

std::uint32_t read_u32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

}  // namespace

std::vector<std::uint8_t> encode_png(const ImageU8& img) {
  require(img.width > 0 && img.height > 0, "png: empty image");
  require(img.rgb.size() == static_cast<std::size_t>(img.width) * img.height * 3,
          "png: pixel buffer size mismatch");

  // Filtered scanlines: filter byte 0 + raw RGB row.
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(img.height) * (1 + 3 * img.width));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);
    const std::uint8_t* row = img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3;
    raw.insert(raw.end(), row, row + 3 * img.width);
  }

  // zlib stream with stored deflate blocks.
  std::vector<std::uint8_t> z;
  z.push_back(0x78);
  z.push_back(0x01);
  std::size_t pos = 0;
  while (pos < raw.size()) {
    std::size_t chunk = std::min<std::size_t>(65535, raw.size() - pos);
    bool final = pos + chunk == raw.size();
    z.push_back(final ? 1 : 0);
    z.push_back(static_cast<std::uint8_t>(chunk & 0xff));
    z.push_back(static_cast<std::uint8_t>(chunk >> 8));
    z.push_back(static_cast<std::uint8_t>(~chunk & 0xff));
    z.push_back(static_cast<std::uint8_t>((~static_cast<std::uint32_t>(chunk) >> 8) & 0xff));
    z.insert(z.end(), raw.begin() + static_cast<std::ptrdiff_t>(pos),
             raw.begin() + static_cast<std::ptrdiff_t>(pos + chunk));
    pos += chunk;
  }
  push_u32(z, adler32(raw.data(), raw.size()));

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<std::uint8_t> ihdr;
  push_u32(ihdr, static_cast<std::uint32_t>(img.width));
  push_u32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace
  push_chunk(out, "IHDR", ihdr);
  push_chunk(out, "IDAT", z);
  push_chunk(out, "IEND", {});
  return out;
}

void write_png(const std::string& path, const ImageU8& img) {
  auto bytes = encode_png(img);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.good(), "cannot open png for writing: " + path);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(os.good(), "png write failed: " + path);
}

ImageU8 read_png(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open png: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  require(bytes.size() > 8 && bytes[0] == 0x89 && bytes[1] == 'P', "not a png file: " + path);

  ImageU8 img;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  while (pos + 12 <= bytes.size()) {
    std::uint32_t len = read_u32(bytes.data() + pos);
    std::string type(bytes.begin() + static_cast<std::ptrdiff_t>(pos + 4),
                     bytes.begin() + static_cast<std::ptrdiff_t>(pos + 8));
    const std::uint8_t* payload = bytes.data() + pos + 8;
    if (type == "IHDR") {
      img.width = static_cast<int>(read_u32(payload));
      img.height = static_cast<int>(read_u32(payload + 4));
      require(payload[8] == 8 && payload[9] == 2, "png reader supports 8-bit RGB only: " + path);
      require(payload[12] == 0, "png reader does not support interlacing: " + path);
    } else if (type == "IDAT") {
      idat.insert(idat.end(), payload, payload + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  require(img.width > 0 && img.height > 0, "png missing IHDR: " + path);
  require(idat.size() > 6, "png missing IDAT: " + path);

  // Inflate, stored blocks only.
  std::vector<std::uint8_t> raw;
  std::size_t zp = 2;  // skip zlib header
  while (true) {
    require(zp + 5 <= idat.size(), "png deflate stream truncated: " + path);
    std::uint8_t header = idat[zp];
    require((header & 0x06) == 0, "png reader supports stored deflate blocks only: " + path);
    std::size_t len = idat[zp + 1] | (static_cast<std::size_t>(idat[zp + 2]) << 8);
    zp += 5;
    require(zp + len <= idat.size(), "png deflate stream truncated: " + path);
    raw.insert(raw.end(), idat.begin() + static_cast<std::ptrdiff_t>(zp),
               idat.begin() + static_cast<std::ptrdiff_t>(zp + len));
    zp += len;
    if (header & 0x01) break;
  }
  require(zp + 4 <= idat.size(), "png adler32 missing: " + path);
  require(adler32(raw.data(), raw.size()) == read_u32(idat.data() + zp),
          "png checksum mismatch: " + path);

  std::size_t stride = 1 + static_cast<std::size_t>(img.width) * 3;
  require(raw.size() == stride * static_cast<std::size_t>(img.height),
          "png pixel data size mismatch: " + path);
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y) {
    require(raw[static_cast<std::size_t>(y) * stride] == 0,
            "png reader supports filter 0 only: " + path);
    std::memcpy(img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3,
                raw.data() + static_cast<std::size_t>(y) * stride + 1,
                static_cast<std::size_t>(img.width) * 3);
  }
  return img;
}

ImageU8 tensor_to_image(const Tensor& chw) {
  require(chw.ndim() == 3 && chw.dim(0) == 3,
          "tensor_to_image expects [3 x H x W], got " + shape_str(chw.shape()));
  ImageU8 img;
  img.height = chw.dim(1);
  img.width = chw.dim(2);
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  std::int64_t hw = static_cast<std::int64_t>(img.height) * img.width;
  for (std::int64_t i = 0; i < hw; ++i)
    for (int c = 0; c < 3; ++c) {
      real v = chw.data()[c * hw + i];
      real scaled = std::round((v + 1.0) * 127.5);
      img.rgb[static_cast<std::size_t>(i) * 3 + static_cast<std::size_t>(c)] =
          static_cast<std::uint8_t>(std::clamp<real>(scaled, 0.0, 255.0));
    }
  return img;
}

Tensor image_to_tensor(const ImageU8& img) {
  Tensor t({3, img.height, img.width});
  std::int64_t hw = static_cast<std::int64_t>(img.height) * img.width;
  for (std::int64_t i = 0; i < hw; ++i)
    for (int c = 0; c < 3; ++c)
      t.data()[c * hw + i] =
          static_cast<real>(
              img.rgb[static_cast<std::size_t>(i) * 3 + static_cast<std::size_t>(c)]) /
              127.5 -
          1.0;
  return t;
}

ImageU8 tile_row(const std::vector<ImageU8>& tiles) {
  require(!tiles.empty(), "tile_row needs at least one tile");
  int max_h = 0;
  for (const auto& t : tiles) max_h = std::max(max_h, t.height);
  const int gutter = 2;
  int total_w = gutter * (static_cast<int>(tiles.size()) - 1);
  std::vector<int> scales;
  for (const auto& t : tiles) {
    int s = std::max(1, max_h / t.height);
    scales.push_back(s);
    total_w += t.width * s;
  }
  ImageU8 canvas;
  canvas.width = total_w;
  canvas.height = max_h;
  canvas.rgb.assign(static_cast<std::size_t>(total_w) * max_h * 3, 32);
  int x0 = 0;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const auto& t = tiles[i];
    int s = scales[i];
    for (int y = 0; y < t.height * s; ++y)
      for (int x = 0; x < t.width * s; ++x) {
        const std::uint8_t* src =
            t.rgb.data() + (static_cast<std::size_t>(y / s) * t.width + x / s) * 3;
        std::uint8_t* dst =
            canvas.rgb.data() + (static_cast<std::size_t>(y) * canvas.width + x0 + x) * 3;
        dst[0] = src[0];
        dst[1] = src[1];
        dst[2] = src[2];
      }
    x0 += t.width * s + gutter;
  }
  return canvas;
}

}  // namespace t2i
