#pragma once

// File formats.
//   GridKernel   text "GDK1 <m>" + 2^m CSV rows; binary "GDKB0001", u64 m, 4^m f64.
//   SampledArray text "GDA1 <n>[ latents <seed>]" + n CSV rows (+ one latent row);
//                binary "GDAB0001", u64 n, u64 flags (bit 0: latents), n^2 f64,
//                then u64 seed and n f64 latents when flagged.
//   Spectrum     JSON metadata + raw r x 2^m f64 eigenfunction block.
//   FeatureCloud JSON lines: header {r, n, provenance}, then {h, t, a} per point.
// All binary values are little-endian.

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdf/array.hpp"
#include "gdf/dyadic.hpp"
#include "gdf/error.hpp"
#include "gdf/measures.hpp"
#include "gdf/mercer.hpp"
#include "gdf/recovery.hpp"

namespace gdf::io {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

// 64-bit FNV-1a, used for input fingerprints in reports.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  Reader(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError(what_ + ": truncated binary file");
  }
  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::vector<double> parse_csv_row(const std::string& line, std::size_t expected, const std::string& what) {
  std::vector<double> row;
  row.reserve(expected);
  const char* p = line.c_str();
  const char* end = p + line.size();
  while (p < end) {
    char* next = nullptr;
    const double v = std::strtod(p, &next);
    if (next == p) throw IoError(what + ": malformed number in row");
    row.push_back(v);
    p = next;
    while (p < end && (*p == ' ' || *p == '\r')) ++p;
    if (p < end) {
      if (*p != ',') throw IoError(what + ": expected ',' between values");
      ++p;
    }
  }
  if (row.size() != expected) {
    throw IoError(what + ": row has " + std::to_string(row.size()) + " values, expected " +
                  std::to_string(expected));
  }
  return row;
}

inline void append_csv_row(std::string& out, const double* v, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    if (j) out.push_back(',');
    out += format_double(v[j]);
  }
  out.push_back('\n');
}

inline bool starts_with(const std::string& s, const char* prefix) {
  return s.rfind(prefix, 0) == 0;
}

}  // namespace detail

// ---- GridKernel ----

inline std::string encode_kernel_text(const GridKernel& k) {
  std::string out = "GDK1 " + std::to_string(k.level().m()) + "\n";
  for (std::size_t i = 0; i < k.cells(); ++i) detail::append_csv_row(out, k.values().data() + i * k.cells(), k.cells());
  return out;
}

inline std::string encode_kernel_binary(const GridKernel& k) {
  std::string out = "GDKB0001";
  detail::put_u64(out, k.level().m());
  for (double v : k.values()) detail::put_f64(out, v);
  return out;
}

inline GridKernel decode_kernel(const std::string& bytes) {
  if (detail::starts_with(bytes, "GDKB0001")) {
    detail::Reader r(bytes, "grid kernel");
    r.skip(8);
    const auto m = r.u64();
    if (m > kMaxLevel) throw IoError("grid kernel level out of range");
    const DyadicLevel lvl(static_cast<unsigned>(m));
    if (bytes.size() != 16 + 8 * lvl.cells() * lvl.cells()) throw IoError("grid kernel: size does not match header");
    std::vector<double> v(lvl.cells() * lvl.cells());
    for (double& x : v) x = r.f64();
    if (!r.done()) throw IoError("grid kernel: trailing bytes");
    try {
      return GridKernel(lvl, std::move(v));
    } catch (const DataError& e) {
      throw IoError(std::string("grid kernel: ") + e.what());
    }
  }
  if (detail::starts_with(bytes, "GDK1 ")) {
    std::istringstream in(bytes);
    std::string magic;
    unsigned m = 0;
    if (!(in >> magic >> m) || m > kMaxLevel) throw IoError("grid kernel: bad header");
    std::string line;
    std::getline(in, line);
    const DyadicLevel lvl(m);
    // Each value needs at least a digit and a separator.
    if (2 * lvl.cells() * lvl.cells() > bytes.size()) throw IoError("grid kernel: size does not match header");
    std::vector<double> v;
    v.reserve(lvl.cells() * lvl.cells());
    for (std::size_t i = 0; i < lvl.cells(); ++i) {
      if (!std::getline(in, line)) throw IoError("grid kernel: missing rows");
      const auto row = detail::parse_csv_row(line, lvl.cells(), "grid kernel");
      v.insert(v.end(), row.begin(), row.end());
    }
    try {
      return GridKernel(lvl, std::move(v));
    } catch (const DataError& e) {
      throw IoError(std::string("grid kernel: ") + e.what());
    }
  }
  throw IoError("grid kernel: unrecognized file magic");
}

inline GridKernel read_kernel(const fs::path& p) { return decode_kernel(read_file(p)); }

// ---- SampledArray ----

inline std::string encode_array_text(const SampledArray& a) {
  std::string out = "GDA1 " + std::to_string(a.n());
  if (a.latents()) out += " latents " + std::to_string(a.latents()->seed);
  out.push_back('\n');
  for (std::size_t i = 0; i < a.n(); ++i) detail::append_csv_row(out, a.entries().data() + i * a.n(), a.n());
  if (a.latents()) detail::append_csv_row(out, a.latents()->u.data(), a.n());
  return out;
}

inline std::string encode_array_binary(const SampledArray& a) {
  std::string out = "GDAB0001";
  detail::put_u64(out, a.n());
  detail::put_u64(out, a.latents() ? 1u : 0u);
  for (double v : a.entries()) detail::put_f64(out, v);
  if (a.latents()) {
    detail::put_u64(out, a.latents()->seed);
    for (double u : a.latents()->u) detail::put_f64(out, u);
  }
  return out;
}

inline SampledArray decode_array(const std::string& bytes) {
  auto wrap = [](auto&& make) -> SampledArray {
    try {
      return make();
    } catch (const DataError& e) {
      throw IoError(std::string("array file: ") + e.what());
    }
  };
  if (detail::starts_with(bytes, "GDAB0001")) {
    detail::Reader r(bytes, "array file");
    r.skip(8);
    const auto n = r.u64();
    const auto flags = r.u64();
    if (n > (1u << 16) || bytes.size() < 24 + 8 * n * n) throw IoError("array file: size out of range");
    std::vector<double> v(n * n);
    for (double& x : v) x = r.f64();
    std::optional<Latents> lat;
    if (flags & 1u) {
      lat = Latents{r.u64(), std::vector<double>(n)};
      for (double& u : lat->u) u = r.f64();
    }
    if (!r.done()) throw IoError("array file: trailing bytes");
    return wrap([&] { return SampledArray(n, std::move(v), std::move(lat)); });
  }
  if (detail::starts_with(bytes, "GDA1 ")) {
    std::istringstream in(bytes);
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string magic, tag;
    std::size_t n = 0;
    if (!(hs >> magic >> n)) throw IoError("array file: bad header");
    std::optional<Latents> lat;
    if (hs >> tag) {
      std::uint64_t seed = 0;
      if (tag != "latents" || !(hs >> seed)) throw IoError("array file: bad latent flag");
      lat = Latents{seed, {}};
    }
    // Every entry needs at least two bytes of text.
    if (n > (1u << 16) || 2 * n * n > bytes.size()) throw IoError("array file: size out of range");
    std::vector<double> v;
    v.reserve(n * n);
    std::string line;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::getline(in, line)) throw IoError("array file: missing rows");
      const auto row = detail::parse_csv_row(line, n, "array file");
      v.insert(v.end(), row.begin(), row.end());
    }
    if (lat) {
      if (!std::getline(in, line)) throw IoError("array file: missing latent row");
      lat->u = detail::parse_csv_row(line, n, "array file");
    }
    return wrap([&] { return SampledArray(n, std::move(v), std::move(lat)); });
  }
  throw IoError("array file: unrecognized file magic");
}

inline SampledArray read_array(const fs::path& p) { return decode_array(read_file(p)); }

inline void write_array(const fs::path& p, const SampledArray& a, bool binary = true) {
  write_file(p, binary ? encode_array_binary(a) : encode_array_text(a));
}

// ---- Spectrum ----

inline nlohmann::json spectrum_json(const SpectralDecomposition& s, const std::string& block_name) {
  return {{"m", s.level.m()},
          {"r", s.rank()},
          {"lambda", s.eigenvalues},
          {"clipped_mass", s.clipped_mass},
          {"discarded_mass", s.discarded_mass},
          {"clusters", s.cluster},
          {"eigenfunctions", block_name},
          {"eigenfunction_layout", "f64le, r rows of 2^m cell values"}};
}

inline std::string encode_eigenfunctions(const SpectralDecomposition& s) {
  std::string out;
  out.reserve(s.rank() * s.level.cells() * 8);
  for (const auto& f : s.eigenfunctions) {
    for (double v : f.values()) detail::put_f64(out, v);
  }
  return out;
}

// Writes <dir>/<stem>.json and <dir>/<stem>.bin.
inline void write_spectrum(const fs::path& dir, const SpectralDecomposition& s, const std::string& stem = "spectrum") {
  write_file(dir / (stem + ".bin"), encode_eigenfunctions(s));
  write_file(dir / (stem + ".json"), spectrum_json(s, stem + ".bin").dump(2) + "\n");
}

inline SpectralDecomposition read_spectrum(const fs::path& json_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(json_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("spectrum file: " + std::string(e.what()));
  }
  SpectralDecomposition s;
  s.level = DyadicLevel(j.at("m").get<unsigned>());
  s.eigenvalues = j.at("lambda").get<std::vector<double>>();
  s.clipped_mass = j.value("clipped_mass", 0.0);
  s.discarded_mass = j.value("discarded_mass", 0.0);
  s.cluster = j.value("clusters", std::vector<std::size_t>(s.eigenvalues.size(), 0));
  const std::string block = read_file(json_path.parent_path() / j.at("eigenfunctions").get<std::string>());
  detail::Reader r(block, "eigenfunction block");
  for (std::size_t l = 0; l < s.eigenvalues.size(); ++l) {
    std::vector<double> v(s.level.cells());
    for (double& x : v) x = r.f64();
    s.eigenfunctions.emplace_back(s.level, std::move(v));
  }
  if (!r.done()) throw IoError("eigenfunction block: trailing bytes");
  return s;
}

// ---- FeatureCloud ----

inline std::string encode_cloud(const FeatureCloud& c) {
  std::string out = nlohmann::json{{"r", c.r}, {"n", c.size()}, {"provenance", to_string(c.provenance)}}.dump();
  out.push_back('\n');
  for (const auto& p : c.points) {
    out += nlohmann::json{{"h", p.h}, {"t", p.t}, {"a", p.a}}.dump();
    out.push_back('\n');
  }
  return out;
}

inline FeatureCloud decode_cloud(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string line;
  FeatureCloud c;
  try {
    if (!std::getline(in, line)) throw IoError("cloud file: empty");
    const auto header = nlohmann::json::parse(line);
    c.r = header.at("r").get<std::size_t>();
    const auto n = header.at("n").get<std::size_t>();
    const auto prov = header.at("provenance").get<std::string>();
    if (prov != "planted" && prov != "recovered") throw IoError("cloud file: unknown provenance " + prov);
    c.provenance = prov == "planted" ? Provenance::planted : Provenance::recovered;
    c.points.reserve(n);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      FeaturePoint p{j.at("h").get<std::vector<double>>(), j.at("t").get<double>(), j.at("a").get<double>()};
      if (p.h.size() != c.r) throw IoError("cloud file: point has wrong dimension");
      c.points.push_back(std::move(p));
    }
    if (c.points.size() != n) throw IoError("cloud file: header count does not match points");
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cloud file: " + std::string(e.what()));
  }
  return c;
}

inline FeatureCloud read_cloud(const fs::path& p) { return decode_cloud(read_file(p)); }
inline void write_cloud(const fs::path& p, const FeatureCloud& c) { write_file(p, encode_cloud(c)); }

// ---- Alignment report ----

inline nlohmann::json alignment_json(const AlignmentResult& a) {
  nlohmann::json q = nlohmann::json::array();
  for (Eigen::Index i = 0; i < a.q.q.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(a.q.q.cols()));
    for (Eigen::Index j = 0; j < a.q.q.cols(); ++j) row[static_cast<std::size_t>(j)] = a.q.q(i, j);
    q.push_back(row);
  }
  return {{"q", q}, {"residual", a.residual}, {"iterations", a.iterations}};
}

}  // namespace gdf::io
