#pragma once

// Binary model container and its JSON export.
//
// Layout (little-endian):
//   "KOOPMDL1"
//   u32 version, u32 N, u32 M, u32 h, u32 d, 32-byte dictionary hash
//   N complex eigenvalues, M x N eigenfunction table (row-major by initial
//   condition), h x N modes (row-major by output), h x d real decode map
//   h output names, M initial-condition ids (u32 length + UTF-8 bytes each)
//   u32 CRC32 of everything before it
// Complex values are stored as adjacent (real, imaginary) doubles.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include <unistd.h>

#include <boost/crc.hpp>
#include <json.hpp>

#include "koopman/error.hpp"
#include "koopman/spectral.hpp"

namespace koopman {

inline constexpr std::string_view kModelMagic = "KOOPMDL1";
inline constexpr std::uint32_t kModelVersion = 1;
inline constexpr std::size_t kModelHeaderBytes = 8 + 5 * 4 + 32;

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void c128(const Complex& z) {
    f64(z.real());
    f64(z.imag());
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  void need(std::size_t n) const {
    if (n > buf_.size() - pos_)
      throw Error(ErrorKind::Truncated, "model file ends early at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }
  Complex c128() {
    const double re = f64();
    return {re, f64()};
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void copy(void* out, std::size_t n) {
    need(n);
    std::copy_n(buf_.data() + pos_, n, static_cast<std::uint8_t*>(out));
    pos_ += n;
  }
  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return buf_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
  boost::crc_32_type crc;
  crc.process_bytes(data, n);
  return crc.checksum();
}

/// Writes via a sibling temp file and rename so readers never see a partial file.
inline void write_atomically(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorKind::Io, "write to " + tmp.string() + " failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorKind::Io, "cannot move model into " + path.string());
  }
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_model(const SpectralTriple& triple) {
  triple.validate();
  detail::ByteWriter w;
  w.bytes(kModelMagic.data(), kModelMagic.size());
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(triple.N()));
  w.u32(static_cast<std::uint32_t>(triple.M()));
  w.u32(static_cast<std::uint32_t>(triple.h()));
  w.u32(static_cast<std::uint32_t>(triple.d()));
  w.bytes(triple.dictionary_hash.data(), triple.dictionary_hash.size());
  for (Eigen::Index j = 0; j < triple.eigenvalues.size(); ++j) w.c128(triple.eigenvalues(j));
  for (Eigen::Index i = 0; i < triple.eigenfunction_values.rows(); ++i)
    for (Eigen::Index j = 0; j < triple.eigenfunction_values.cols(); ++j)
      w.c128(triple.eigenfunction_values(i, j));
  for (Eigen::Index i = 0; i < triple.modes.rows(); ++i)
    for (Eigen::Index j = 0; j < triple.modes.cols(); ++j) w.c128(triple.modes(i, j));
  for (Eigen::Index i = 0; i < triple.decode.rows(); ++i)
    for (Eigen::Index j = 0; j < triple.decode.cols(); ++j) w.f64(triple.decode(i, j));
  for (std::size_t i = 0; i < triple.h(); ++i)
    w.str(triple.output_names.empty() ? std::string() : triple.output_names[i]);
  for (std::size_t i = 0; i < triple.M(); ++i)
    w.str(triple.initial_condition_ids.empty() ? std::string() : triple.initial_condition_ids[i]);
  auto& buf = w.buffer();
  w.u32(detail::crc32(buf.data(), buf.size()));
  return std::move(buf);
}

inline SpectralTriple deserialize_model(const std::vector<std::uint8_t>& buf) {
  if (buf.size() < kModelHeaderBytes + 4)
    throw Error(ErrorKind::Truncated, "model file shorter than its header");
  if (!std::equal(kModelMagic.begin(), kModelMagic.end(), buf.begin()))
    throw Error(ErrorKind::BadMagic, "not a model file");
  detail::ByteReader r(buf);
  char magic[8];
  r.copy(magic, 8);
  const std::uint32_t version = r.u32();
  if (version != kModelVersion)
    throw Error(ErrorKind::VersionMismatch, "model format version " + std::to_string(version) +
                                                ", expected " + std::to_string(kModelVersion));
  const std::size_t N = r.u32(), M = r.u32(), h = r.u32(), d = r.u32();
  SpectralTriple t;
  r.copy(t.dictionary_hash.data(), t.dictionary_hash.size());

  // Fixed-size tables must fit before anything is allocated.
  for (std::size_t dim : {N, M, h, d})
    if (dim > buf.size()) throw Error(ErrorKind::Truncated, "model dimensions exceed file size");
  const std::size_t fixed = 16 * (1 + M + h) * N + 8 * h * d + 4 * (h + M) + 4;
  r.need(fixed);

  t.eigenvalues.resize(static_cast<Eigen::Index>(N));
  for (std::size_t j = 0; j < N; ++j) t.eigenvalues(static_cast<Eigen::Index>(j)) = r.c128();
  t.eigenfunction_values.resize(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(N));
  for (Eigen::Index i = 0; i < t.eigenfunction_values.rows(); ++i)
    for (Eigen::Index j = 0; j < t.eigenfunction_values.cols(); ++j)
      t.eigenfunction_values(i, j) = r.c128();
  t.modes.resize(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(N));
  for (Eigen::Index i = 0; i < t.modes.rows(); ++i)
    for (Eigen::Index j = 0; j < t.modes.cols(); ++j) t.modes(i, j) = r.c128();
  t.decode.resize(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < t.decode.rows(); ++i)
    for (Eigen::Index j = 0; j < t.decode.cols(); ++j) t.decode(i, j) = r.f64();
  for (std::size_t i = 0; i < h; ++i) t.output_names.push_back(r.str());
  for (std::size_t i = 0; i < M; ++i) t.initial_condition_ids.push_back(r.str());
  // Unnamed tables are written as empty strings and read back as no names.
  auto unnamed = [](const std::vector<std::string>& v) {
    return std::all_of(v.begin(), v.end(), [](const std::string& x) { return x.empty(); });
  };
  if (unnamed(t.output_names)) t.output_names.clear();
  if (unnamed(t.initial_condition_ids)) t.initial_condition_ids.clear();

  const std::size_t body = r.position();
  const std::uint32_t stored = r.u32();
  if (r.remaining() != 0)
    throw Error(ErrorKind::Truncated, "model file has " + std::to_string(r.remaining()) +
                                          " unexpected trailing bytes");
  if (stored != detail::crc32(buf.data(), body))
    throw Error(ErrorKind::ChecksumMismatch, "model file checksum does not match its contents");
  return t;
}

inline void save_model(const SpectralTriple& triple, const std::filesystem::path& path) {
  const auto bytes = serialize_model(triple);
  detail::write_atomically(
      path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline SpectralTriple load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open model file " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  return deserialize_model(buf);
}

inline std::string hash_to_hex(const DictionaryHash& hash) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  for (std::uint8_t b : hash) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xF]);
  }
  return out;
}

inline nlohmann::json model_to_json(const SpectralTriple& triple) {
  using nlohmann::json;
  auto cplx = [](const Complex& z) { return json::array({z.real(), z.imag()}); };
  auto ctable = [&](const CMatrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(cplx(m(i, j)));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  json eig = json::array();
  for (Eigen::Index j = 0; j < triple.eigenvalues.size(); ++j)
    eig.push_back(cplx(triple.eigenvalues(j)));
  json decode = json::array();
  for (Eigen::Index i = 0; i < triple.decode.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < triple.decode.cols(); ++j) row.push_back(triple.decode(i, j));
    decode.push_back(std::move(row));
  }
  return json{
      {"format", std::string(kModelMagic)},
      {"version", kModelVersion},
      {"N", triple.N()},
      {"M", triple.M()},
      {"h", triple.h()},
      {"d", triple.d()},
      {"dictionary_hash", hash_to_hex(triple.dictionary_hash)},
      {"eigenvalues", std::move(eig)},
      {"eigenfunction_values", ctable(triple.eigenfunction_values)},
      {"modes", ctable(triple.modes)},
      {"decode", std::move(decode)},
      {"output_names", triple.output_names},
      {"initial_condition_ids", triple.initial_condition_ids},
  };
}

}  // namespace koopman
