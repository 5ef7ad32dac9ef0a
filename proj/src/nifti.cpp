#include "dsae/nifti.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "dsae/error.hpp"

namespace dsae {
namespace {

static_assert(std::endian::native == std::endian::little,
              "NIfTI I/O assumes a little-endian host");

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;

// Byte offsets of the NIfTI-1 header fields used here.
namespace off {
constexpr int sizeof_hdr = 0;
constexpr int dim = 40;
constexpr int intent_code = 68;
constexpr int datatype = 70;
constexpr int bitpix = 72;
constexpr int pixdim = 76;
constexpr int vox_offset = 108;
constexpr int scl_slope = 112;
constexpr int scl_inter = 116;
constexpr int xyzt_units = 123;
constexpr int descrip = 148;
constexpr int qform_code = 252;
constexpr int sform_code = 254;
constexpr int quatern_b = 256;
constexpr int qoffset_x = 268;
constexpr int srow_x = 280;
constexpr int intent_name = 328;
constexpr int magic = 344;
}  // namespace off

constexpr std::int16_t kIntentLabel = 1002;

template <typename T>
T get(const std::vector<char>& buf, std::size_t offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  return value;
}

template <typename T>
void put(std::vector<char>& buf, std::size_t offset, T value) {
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}

const char* intent_tag(Intent i) {
  switch (i) {
    case Intent::dwi: return "dsae:dwi";
    case Intent::sh_coeffs: return "dsae:sh_coeffs";
    case Intent::scalar: return "dsae:scalar";
    case Intent::labels: return "dsae:labels";
  }
  return "dsae:dwi";
}

Intent parse_intent(const std::vector<char>& hdr) {
  std::string name(hdr.data() + off::intent_name,
                   strnlen(hdr.data() + off::intent_name, 16));
  for (Intent i : {Intent::dwi, Intent::sh_coeffs, Intent::scalar, Intent::labels})
    if (name == intent_tag(i)) return i;
  if (get<std::int16_t>(hdr, off::intent_code) == kIntentLabel) return Intent::labels;
  return Intent::dwi;
}

Affine quaternion_affine(const std::vector<char>& hdr, const std::array<double, 3>& spacing) {
  const double b = get<float>(hdr, off::quatern_b);
  const double c = get<float>(hdr, off::quatern_b + 4);
  const double d = get<float>(hdr, off::quatern_b + 8);
  const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
  double qfac = get<float>(hdr, off::pixdim);
  qfac = qfac < 0 ? -1.0 : 1.0;
  const double r[3][3] = {
      {a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
      {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
      {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b}};
  Affine m{};
  for (int i = 0; i < 3; ++i) {
    m[i][0] = r[i][0] * spacing[0];
    m[i][1] = r[i][1] * spacing[1];
    m[i][2] = r[i][2] * spacing[2] * qfac;
    m[i][3] = get<float>(hdr, off::qoffset_x + 4 * i);
  }
  m[3][3] = 1.0;
  return m;
}

}  // namespace

Volume4D read_nifti(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 4) throw Error(ErrorKind::Parse, "file too short for a NIfTI header", 0);
  const auto sizeof_hdr = get<std::int32_t>(bytes, off::sizeof_hdr);
  if (sizeof_hdr != kHeaderSize) {
    if (__builtin_bswap32(static_cast<std::uint32_t>(sizeof_hdr)) == kHeaderSize)
      fail(ErrorKind::UnsupportedFormat, "big-endian NIfTI files are not supported");
    throw Error(ErrorKind::Parse, "sizeof_hdr is " + std::to_string(sizeof_hdr) + ", expected 348", 0);
  }
  if (bytes.size() < static_cast<std::size_t>(kHeaderSize))
    throw Error(ErrorKind::Parse, "truncated header", bytes.size());

  const char* magic = bytes.data() + off::magic;
  if (std::memcmp(magic, "ni1\0", 4) == 0)
    fail(ErrorKind::UnsupportedFormat, "two-file (.hdr/.img) NIfTI is not supported");
  if (std::memcmp(magic, "n+1\0", 4) != 0)
    throw Error(ErrorKind::Parse, "bad magic, expected \"n+1\"", off::magic);

  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[i] = get<std::int16_t>(bytes, off::dim + 2 * i);
  if (dim[0] < 1 || dim[0] > 7) throw Error(ErrorKind::Parse, "dim[0] out of range", off::dim);
  std::array<int, 4> dims{1, 1, 1, 1};
  for (int i = 1; i <= dim[0]; ++i) {
    if (dim[i] < 1) throw Error(ErrorKind::Parse, "non-positive dimension", off::dim + 2 * i);
    if (i <= 4)
      dims[i - 1] = dim[i];
    else if (dim[i] != 1)
      fail(ErrorKind::UnsupportedFormat, "images with more than 4 dimensions are not supported");
  }

  const auto datatype = get<std::int16_t>(bytes, off::datatype);
  int bytes_per_voxel = 0;
  switch (datatype) {
    case 2: bytes_per_voxel = 1; break;   // uint8
    case 4: bytes_per_voxel = 2; break;   // int16
    case 8: bytes_per_voxel = 4; break;   // int32
    case 16: bytes_per_voxel = 4; break;  // float32
    case 64: bytes_per_voxel = 8; break;  // float64
    default:
      fail(ErrorKind::UnsupportedFormat, "unsupported NIfTI datatype " + std::to_string(datatype));
  }

  std::array<double, 3> spacing{};
  for (int i = 0; i < 3; ++i) {
    const double p = std::fabs(get<float>(bytes, off::pixdim + 4 * (i + 1)));
    spacing[i] = p > 0.0 ? p : 1.0;
  }

  const float vox_offset_f = get<float>(bytes, off::vox_offset);
  if (!(vox_offset_f >= kVoxOffset) || vox_offset_f != std::floor(vox_offset_f))
    throw Error(ErrorKind::Parse, "invalid vox_offset", off::vox_offset);
  const auto vox_offset = static_cast<std::size_t>(vox_offset_f);

  const std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2] * dims[3];
  if (bytes.size() < vox_offset + count * bytes_per_voxel)
    throw Error(ErrorKind::Parse,
                "truncated data section: need " + std::to_string(count * bytes_per_voxel) + " bytes",
                bytes.size());

  const double slope = get<float>(bytes, off::scl_slope);
  const double inter = get<float>(bytes, off::scl_inter);
  const bool scale = slope != 0.0 && std::isfinite(slope);

  std::vector<double> data(count);
  const char* src = bytes.data() + vox_offset;
  for (std::size_t i = 0; i < count; ++i) {
    const char* p = src + i * bytes_per_voxel;
    double v = 0.0;
    switch (datatype) {
      case 2: v = static_cast<unsigned char>(*p); break;
      case 4: { std::int16_t t; std::memcpy(&t, p, 2); v = t; break; }
      case 8: { std::int32_t t; std::memcpy(&t, p, 4); v = t; break; }
      case 16: { float t; std::memcpy(&t, p, 4); v = t; break; }
      case 64: { double t; std::memcpy(&t, p, 8); v = t; break; }
    }
    data[i] = scale ? v * slope + inter : v;
  }

  Affine affine;
  if (get<std::int16_t>(bytes, off::sform_code) > 0) {
    affine = Affine{};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) affine[r][c] = get<float>(bytes, off::srow_x + 16 * r + 4 * c);
    affine[3][3] = 1.0;
  } else if (get<std::int16_t>(bytes, off::qform_code) > 0) {
    affine = quaternion_affine(bytes, spacing);
  } else {
    affine = identity_affine(spacing);
  }

  return Volume4D(dims, spacing, affine, parse_intent(bytes), std::move(data));
}

void write_nifti(const Volume4D& v, const std::filesystem::path& path) {
  v.validate();
  // float32 unless that would round some value; then float64 keeps the round trip exact.
  const bool as_float = std::all_of(v.data().begin(), v.data().end(), [](double x) {
    return std::isnan(x) || static_cast<double>(static_cast<float>(x)) == x;
  });
  std::vector<char> hdr(kVoxOffset, 0);
  put<std::int32_t>(hdr, off::sizeof_hdr, kHeaderSize);
  hdr[38] = 'r';  // regular
  const int ndim = v.nv() > 1 ? 4 : 3;
  put<std::int16_t>(hdr, off::dim, static_cast<std::int16_t>(ndim));
  for (int i = 0; i < 7; ++i)
    put<std::int16_t>(hdr, off::dim + 2 * (i + 1), static_cast<std::int16_t>(i < 4 ? v.dims()[i] : 1));
  if (v.intent() == Intent::labels) put<std::int16_t>(hdr, off::intent_code, kIntentLabel);
  put<std::int16_t>(hdr, off::datatype, as_float ? 16 : 64);
  put<std::int16_t>(hdr, off::bitpix, as_float ? 32 : 64);
  put<float>(hdr, off::pixdim, 1.0f);
  for (int i = 0; i < 3; ++i) put<float>(hdr, off::pixdim + 4 * (i + 1), static_cast<float>(v.spacing()[i]));
  put<float>(hdr, off::pixdim + 16, 1.0f);
  put<float>(hdr, off::vox_offset, static_cast<float>(kVoxOffset));
  put<float>(hdr, off::scl_slope, 1.0f);
  put<float>(hdr, off::scl_inter, 0.0f);
  hdr[off::xyzt_units] = 2 | 8;  // mm, s
  std::strncpy(hdr.data() + off::descrip, "dsae", 79);
  put<std::int16_t>(hdr, off::qform_code, 0);
  put<std::int16_t>(hdr, off::sform_code, 1);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c)
      put<float>(hdr, off::srow_x + 16 * r + 4 * c, static_cast<float>(v.affine()[r][c]));
  std::strncpy(hdr.data() + off::intent_name, intent_tag(v.intent()), 15);
  std::memcpy(hdr.data() + off::magic, "n+1\0", 4);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  if (as_float) {
    std::vector<float> payload(v.data().begin(), v.data().end());
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
  } else {
    out.write(reinterpret_cast<const char*>(v.data().data()),
              static_cast<std::streamsize>(v.data().size() * sizeof(double)));
  }
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace dsae
