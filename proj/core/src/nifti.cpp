/*
 * Copyright 2026 The cowbif Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cowbif/nifti.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace cowbif {

static_assert(std::endian::native == std::endian::little,
              "NIfTI I/O assumes a little-endian host");

namespace {

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;
constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtFloat32 = 16;

// Byte offsets inside the NIfTI-1 header.
constexpr int kOffSizeofHdr = 0;
constexpr int kOffDim = 40;
constexpr int kOffDatatype = 70;
constexpr int kOffBitpix = 72;
constexpr int kOffPixdim = 76;
constexpr int kOffVoxOffset = 108;
constexpr int kOffSclSlope = 112;
constexpr int kOffXyztUnits = 123;
constexpr int kOffDescrip = 148;
constexpr int kOffMagic = 344;

bool is_gzip_path(const std::filesystem::path& path) { return path.extension() == ".gz"; }

template <typename T>
void put(std::vector<char>& buf, int offset, T value) {
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}

template <typename T>
T get(const std::vector<char>& buf, int offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  return value;
}

// pixdim is float32 on disk. Widening via the shortest decimal form makes
// spacings like 0.4 come back as the same double they were written from.
double widen_spacing(float f) {
  std::array<char, 64> text{};
  auto [end, ec] = std::to_chars(text.data(), text.data() + text.size(), f);
  if (ec != std::errc{}) return static_cast<double>(f);
  double d = 0.0;
  std::from_chars(text.data(), end, d);
  return d;
}

std::vector<char> make_header(const Dims3& dims, const Spacing3& spacing, std::int16_t datatype) {
  std::vector<char> hdr(kVoxOffset, 0);
  put<std::int32_t>(hdr, kOffSizeofHdr, kHeaderSize);
  const std::array<std::int16_t, 8> dim{3,
                                        static_cast<std::int16_t>(dims.nx),
                                        static_cast<std::int16_t>(dims.ny),
                                        static_cast<std::int16_t>(dims.nz),
                                        1,
                                        1,
                                        1,
                                        1};
  for (int i = 0; i < 8; ++i) put<std::int16_t>(hdr, kOffDim + 2 * i, dim[i]);
  put<std::int16_t>(hdr, kOffDatatype, datatype);
  put<std::int16_t>(hdr, kOffBitpix, datatype == kDtFloat32 ? 32 : 8);
  const std::array<float, 8> pixdim{1.0f,
                                    static_cast<float>(spacing.sx),
                                    static_cast<float>(spacing.sy),
                                    static_cast<float>(spacing.sz),
                                    1.0f,
                                    1.0f,
                                    1.0f,
                                    1.0f};
  for (int i = 0; i < 8; ++i) put<float>(hdr, kOffPixdim + 4 * i, pixdim[i]);
  put<float>(hdr, kOffVoxOffset, static_cast<float>(kVoxOffset));
  put<float>(hdr, kOffSclSlope, 0.0f);
  hdr[kOffXyztUnits] = 2;  // millimetres
  std::memcpy(hdr.data() + kOffDescrip, "cowbif", 6);
  std::memcpy(hdr.data() + kOffMagic, "n+1\0", 4);
  return hdr;
}

void write_bytes(const std::filesystem::path& path, const std::vector<char>& header,
                 const char* payload, std::size_t payload_size) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (is_gzip_path(path)) {
    gzFile f = gzopen(path.c_str(), "wb6");
    if (f == nullptr) throw FormatError("cannot open '" + path.string() + "' for writing");
    bool ok = gzwrite(f, header.data(), static_cast<unsigned>(header.size())) ==
              static_cast<int>(header.size());
    std::size_t done = 0;
    while (ok && done < payload_size) {
      const auto chunk = static_cast<unsigned>(std::min<std::size_t>(payload_size - done, 1u << 26));
      ok = gzwrite(f, payload + done, chunk) == static_cast<int>(chunk);
      done += chunk;
    }
    if (gzclose(f) != Z_OK || !ok) throw FormatError("failed writing '" + path.string() + "'");
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload, static_cast<std::streamsize>(payload_size));
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

std::vector<char> read_bytes(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw FormatError("file '" + path.string() + "' does not exist");
  }
  std::vector<char> bytes;
  if (is_gzip_path(path)) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) throw FormatError("cannot open '" + path.string() + "'");
    std::array<char, 1 << 16> chunk{};
    int n = 0;
    while ((n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()))) > 0) {
      bytes.insert(bytes.end(), chunk.data(), chunk.data() + n);
    }
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw FormatError("corrupt gzip stream in '" + path.string() + "'");
    return bytes;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return bytes;
}

struct Decoded {
  Dims3 dims;
  Spacing3 spacing;
  std::int16_t datatype = 0;
  std::size_t offset = 0;
  std::vector<char> bytes;
};

Decoded decode(const std::filesystem::path& path) {
  Decoded d;
  d.bytes = read_bytes(path);
  const std::string where = " in '" + path.string() + "'";
  if (d.bytes.size() < static_cast<std::size_t>(kHeaderSize)) {
    throw FormatError("truncated header: sizeof_hdr needs 348 bytes" + where);
  }
  const auto sizeof_hdr = get<std::int32_t>(d.bytes, kOffSizeofHdr);
  if (sizeof_hdr != kHeaderSize) {
    throw FormatError("bad sizeof_hdr " + std::to_string(sizeof_hdr) +
                      " (big-endian or not NIfTI-1)" + where);
  }
  if (std::memcmp(d.bytes.data() + kOffMagic, "n+1\0", 4) != 0) {
    throw FormatError("bad magic: expected \"n+1\"" + where);
  }
  const auto ndim = get<std::int16_t>(d.bytes, kOffDim);
  if (ndim < 3 || ndim > 7) throw FormatError("unsupported dim[0] = " + std::to_string(ndim) + where);
  for (int i = 4; i <= ndim; ++i) {
    if (get<std::int16_t>(d.bytes, kOffDim + 2 * i) != 1) {
      throw FormatError("unsupported dim[" + std::to_string(i) + "] != 1 (only 3D volumes)" + where);
    }
  }
  d.dims = {get<std::int16_t>(d.bytes, kOffDim + 2), get<std::int16_t>(d.bytes, kOffDim + 4),
            get<std::int16_t>(d.bytes, kOffDim + 6)};
  if (d.dims.nx <= 0 || d.dims.ny <= 0 || d.dims.nz <= 0) {
    throw FormatError("non-positive dim[1..3]" + where);
  }
  d.datatype = get<std::int16_t>(d.bytes, kOffDatatype);
  if (d.datatype != kDtFloat32 && d.datatype != kDtUint8) {
    throw FormatError("unsupported datatype " + std::to_string(d.datatype) +
                      " (only 2=uint8 and 16=float32)" + where);
  }
  const auto bitpix = get<std::int16_t>(d.bytes, kOffBitpix);
  if (bitpix != (d.datatype == kDtFloat32 ? 32 : 8)) {
    throw FormatError("bitpix " + std::to_string(bitpix) + " inconsistent with datatype" + where);
  }
  d.spacing = {widen_spacing(std::fabs(get<float>(d.bytes, kOffPixdim + 4))),
               widen_spacing(std::fabs(get<float>(d.bytes, kOffPixdim + 8))),
               widen_spacing(std::fabs(get<float>(d.bytes, kOffPixdim + 12)))};
  try {
    validate_spacing(d.spacing);
  } catch (const InvalidArgument&) {
    throw FormatError("invalid pixdim[1..3]" + where);
  }
  const float vox_offset = get<float>(d.bytes, kOffVoxOffset);
  if (!(vox_offset >= static_cast<float>(kVoxOffset))) {
    throw FormatError("vox_offset " + std::to_string(vox_offset) + " below 352" + where);
  }
  d.offset = static_cast<std::size_t>(vox_offset);
  const std::size_t need = d.dims.count() * (d.datatype == kDtFloat32 ? 4 : 1);
  if (d.bytes.size() < d.offset + need) {
    throw FormatError("truncated payload: need " + std::to_string(need) + " bytes after vox_offset, have " +
                      std::to_string(d.bytes.size() > d.offset ? d.bytes.size() - d.offset : 0) + where);
  }
  return d;
}

}  // namespace

void write_nifti(const std::filesystem::path& path, const Volume3D& vol) {
  const auto header = make_header(vol.dims(), vol.spacing(), kDtFloat32);
  write_bytes(path, header, reinterpret_cast<const char*>(vol.data().data()),
              vol.size() * sizeof(float));
}

void write_nifti(const std::filesystem::path& path, const MaskVolume& mask) {
  const auto header = make_header(mask.dims(), mask.spacing(), kDtUint8);
  write_bytes(path, header, reinterpret_cast<const char*>(mask.data().data()), mask.size());
}

Volume3D read_volume(const std::filesystem::path& path) {
  const Decoded d = decode(path);
  std::vector<float> data(d.dims.count());
  if (d.datatype == kDtFloat32) {
    std::memcpy(data.data(), d.bytes.data() + d.offset, data.size() * sizeof(float));
  } else {
    for (std::size_t i = 0; i < data.size(); ++i) {
      data[i] = static_cast<std::uint8_t>(d.bytes[d.offset + i]);
    }
  }
  return Volume3D(d.dims, d.spacing, std::move(data));
}

MaskVolume read_mask(const std::filesystem::path& path) {
  const Decoded d = decode(path);
  std::vector<std::uint8_t> data(d.dims.count());
  for (std::size_t i = 0; i < data.size(); ++i) {
    double v = 0.0;
    if (d.datatype == kDtFloat32) {
      float f;
      std::memcpy(&f, d.bytes.data() + d.offset + 4 * i, 4);
      v = f;
    } else {
      v = static_cast<std::uint8_t>(d.bytes[d.offset + i]);
    }
    if (v != 0.0 && v != 1.0) {
      throw FormatError("mask '" + path.string() + "' holds non-binary value " + std::to_string(v));
    }
    data[i] = static_cast<std::uint8_t>(v);
  }
  return MaskVolume(d.dims, d.spacing, std::move(data));
}

}  // namespace cowbif
