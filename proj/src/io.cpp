#include "qshift/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "qshift/errors.hpp"

namespace qshift {

namespace {

constexpr std::array<char, 4> kMagic{'E', 'M', 'B', '1'};
constexpr std::size_t kHeaderBytes = 12;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<unsigned char>((v >> s) & 0xffU));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string describe(const std::filesystem::path& path) { return path.string(); }

}  // namespace

void write_embeddings(const std::filesystem::path& path, const EmbeddingBatch& batch) {
  if (batch.size() > std::numeric_limits<std::uint32_t>::max() ||
      batch.dim() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorKind::IoError, "batch too large for EMB1");
  }
  std::vector<unsigned char> bytes(kMagic.begin(), kMagic.end());
  bytes.reserve(kHeaderBytes + 4 * batch.size() * batch.dim());
  put_u32(bytes, static_cast<std::uint32_t>(batch.size()));
  put_u32(bytes, static_cast<std::uint32_t>(batch.dim()));
  const Matrix& m = batch.matrix();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index d = 0; d < m.cols(); ++d) {
      put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(m(i, d))));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + describe(path) + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + describe(path));
}

EmbeddingBatch read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + describe(path));
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw Error(ErrorKind::BadInput, describe(path) + " is not an EMB1 file");
  }
  const std::uint64_t n = get_u32(bytes.data() + 4);
  const std::uint64_t d = get_u32(bytes.data() + 8);
  if (bytes.size() != kHeaderBytes + 4 * n * d) {
    throw Error(ErrorKind::BadInput, describe(path) + ": expected " + std::to_string(kHeaderBytes + 4 * n * d) +
                                         " bytes, found " + std::to_string(bytes.size()));
  }
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const unsigned char* p = bytes.data() + kHeaderBytes;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j, p += 4) {
      const float v = std::bit_cast<float>(get_u32(p));
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::BadInput, describe(path) + ": non-finite value at row " + std::to_string(i));
      }
      m(i, j) = static_cast<double>(v);
    }
  }
  return EmbeddingBatch(std::move(m));
}

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& gt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + describe(path) + " for writing");
  for (std::size_t q = 0; q < gt.size(); ++q) {
    for (GalleryId id : gt.relevant[q]) out << q << '\t' << id << '\n';
  }
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + describe(path));
}

GroundTruth read_ground_truth(const std::filesystem::path& path, std::size_t query_count,
                              std::size_t gallery_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + describe(path));
  GroundTruth gt;
  gt.relevant.resize(query_count);
  std::string line;
  std::size_t line_no = 0;
  const auto parse = [&](std::string_view field, std::size_t bound, const char* what) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
      throw Error(ErrorKind::BadInput, describe(path) + ":" + std::to_string(line_no) + ": bad " + what);
    }
    if (v >= bound) {
      throw Error(ErrorKind::BadInput, describe(path) + ":" + std::to_string(line_no) + ": " + what +
                                           " " + std::to_string(v) + " out of range");
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorKind::BadInput, describe(path) + ":" + std::to_string(line_no) + ": missing tab");
    }
    const std::string_view view(line);
    const auto q = parse(view.substr(0, tab), query_count, "query index");
    const auto g = parse(view.substr(tab + 1), gallery_size, "gallery index");
    gt.relevant[q].push_back(static_cast<GalleryId>(g));
  }
  try {
    gt.validate(gallery_size);
  } catch (const Error& e) {
    throw Error(ErrorKind::BadInput, describe(path) + ": " + e.what());
  }
  return gt;
}

}  // namespace qshift
