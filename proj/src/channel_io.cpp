#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include "gfast/channel.hpp"
#include "gfast/errors.hpp"

namespace gfast {

namespace {

constexpr std::array<char, 8> kMagic = {'G', 'F', 'C', 'H', 'A', 'N', '0', '1'};
constexpr const char* kTextHeader = "gfast-channel-text";

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(sizeof(T) == 8);
  auto bits = std::bit_cast<std::uint64_t>(value);
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[static_cast<std::size_t>(i)] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  out.write(bytes.data(), 8);
}

template <typename T>
bool read_le(std::istream& in, T& value) {
  static_assert(sizeof(T) == 8);
  std::array<unsigned char, 8> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), 8)) return false;
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[static_cast<std::size_t>(i)]) << (8 * i);
  value = std::bit_cast<T>(bits);
  return true;
}

void check_header(std::uint64_t tones, std::uint64_t lines, const std::filesystem::path& path) {
  // Bounds keep a corrupted header from triggering huge allocations.
  if (tones == 0 || tones > (1u << 24)) throw FormatError(path.string() + ": invalid tone count " + std::to_string(tones));
  if (lines == 0 || lines > 4096) throw FormatError(path.string() + ": invalid line count " + std::to_string(lines));
}

ChannelTensor assemble(const std::filesystem::path& path, BandPlan band, std::vector<Eigen::MatrixXcd> matrices,
                       Eigen::MatrixXd noise) {
  try {
    return ChannelTensor(band, std::move(matrices), std::move(noise));
  } catch (const ValidationError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

ChannelTensor load_binary(std::ifstream& in, const std::filesystem::path& path) {
  std::uint64_t tones = 0;
  std::uint64_t lines = 0;
  double f_start = 0.0;
  double f_stop = 0.0;
  if (!read_le(in, tones) || !read_le(in, lines) || !read_le(in, f_start) || !read_le(in, f_stop))
    throw FormatError(path.string() + ": truncated header");
  check_header(tones, lines, path);
  BandPlan band;
  band.num_tones = tones;
  band.f_start_hz = f_start;
  band.f_stop_hz = f_stop;

  const auto l = static_cast<Eigen::Index>(lines);
  std::vector<Eigen::MatrixXcd> matrices;
  matrices.reserve(tones);
  for (std::uint64_t n = 0; n < tones; ++n) {
    Eigen::MatrixXcd h(l, l);
    for (Eigen::Index r = 0; r < l; ++r) {
      for (Eigen::Index c = 0; c < l; ++c) {
        double re = 0.0;
        double im = 0.0;
        if (!read_le(in, re) || !read_le(in, im))
          throw FormatError(path.string() + ": truncated at tone " + std::to_string(n) + " of " +
                            std::to_string(tones) + " (entry " + std::to_string(r) + "," + std::to_string(c) + ")");
        h(r, c) = Complex(re, im);
      }
    }
    matrices.push_back(std::move(h));
  }
  Eigen::MatrixXd noise(static_cast<Eigen::Index>(tones), l);
  for (std::uint64_t n = 0; n < tones; ++n) {
    for (Eigen::Index r = 0; r < l; ++r) {
      double v = 0.0;
      if (!read_le(in, v))
        throw FormatError(path.string() + ": truncated noise table at tone " + std::to_string(n) + ", line " +
                          std::to_string(r));
      noise(static_cast<Eigen::Index>(n), r) = v;
    }
  }
  char extra = 0;
  if (in.read(&extra, 1)) throw FormatError(path.string() + ": trailing bytes after noise table");
  return assemble(path, band, std::move(matrices), std::move(noise));
}

// Splits the stream into whitespace separated tokens, skipping '#' comments.
class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  bool next(std::string& token) {
    while (true) {
      if (line_stream_ >> token) {
        if (token.front() == '#') {
          line_stream_.setstate(std::ios::eofbit);
          continue;
        }
        return true;
      }
      std::string line;
      if (!std::getline(in_, line)) return false;
      ++line_no_;
      line_stream_.clear();
      line_stream_.str(line);
    }
  }

  int line_no() const { return line_no_; }

 private:
  std::istream& in_;
  std::istringstream line_stream_;
  int line_no_ = 0;
};

double parse_double(const std::string& token, const std::filesystem::path& path, int line_no) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != token.size())
    throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected a number, got '" + token + "'");
  return v;
}

ChannelTensor load_text(std::ifstream& in, const std::filesystem::path& path) {
  TokenReader reader(in);
  std::string tok;
  auto expect_number = [&](const std::string& what) {
    if (!reader.next(tok)) throw FormatError(path.string() + ": truncated, missing " + what);
    return parse_double(tok, path, reader.line_no());
  };
  auto expect_word = [&](const std::string& word, const std::string& what) {
    if (!reader.next(tok)) throw FormatError(path.string() + ": truncated, missing " + what);
    if (tok != word)
      throw FormatError(path.string() + ":" + std::to_string(reader.line_no()) + ": expected '" + word + "', got '" +
                        tok + "'");
  };

  expect_word(kTextHeader, "header");
  const double version = expect_number("format version");
  if (version != 1.0) throw FormatError(path.string() + ": unsupported text version");
  const double tones_d = expect_number("tone count");
  const double lines_d = expect_number("line count");
  if (tones_d < 1 || lines_d < 1 || tones_d != std::floor(tones_d) || lines_d != std::floor(lines_d))
    throw FormatError(path.string() + ": tone and line counts must be positive integers");
  const auto tones = static_cast<std::uint64_t>(tones_d);
  const auto lines = static_cast<std::uint64_t>(lines_d);
  check_header(tones, lines, path);
  BandPlan band;
  band.num_tones = tones;
  band.f_start_hz = expect_number("f_start");
  band.f_stop_hz = expect_number("f_stop");

  const auto l = static_cast<Eigen::Index>(lines);
  std::vector<Eigen::MatrixXcd> matrices;
  matrices.reserve(tones);
  for (std::uint64_t n = 0; n < tones; ++n) {
    const std::string where = "tone " + std::to_string(n) + " of " + std::to_string(tones);
    expect_word("tone", where);
    const double idx = expect_number(where + " index");
    if (idx != static_cast<double>(n))
      throw FormatError(path.string() + ":" + std::to_string(reader.line_no()) + ": expected tone " +
                        std::to_string(n));
    Eigen::MatrixXcd h(l, l);
    for (Eigen::Index r = 0; r < l; ++r)
      for (Eigen::Index c = 0; c < l; ++c) {
        const double re = expect_number(where);
        const double im = expect_number(where);
        h(r, c) = Complex(re, im);
      }
    matrices.push_back(std::move(h));
  }
  expect_word("noise", "noise table");
  Eigen::MatrixXd noise(static_cast<Eigen::Index>(tones), l);
  for (std::uint64_t n = 0; n < tones; ++n)
    for (Eigen::Index r = 0; r < l; ++r)
      noise(static_cast<Eigen::Index>(n), r) = expect_number("noise of tone " + std::to_string(n));
  if (reader.next(tok)) throw FormatError(path.string() + ": unexpected trailing token '" + tok + "'");
  return assemble(path, band, std::move(matrices), std::move(noise));
}

}  // namespace

void save_channel(const ChannelTensor& tensor, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  write_le(out, static_cast<std::uint64_t>(tensor.num_tones()));
  write_le(out, static_cast<std::uint64_t>(tensor.num_lines()));
  write_le(out, tensor.band().f_start_hz);
  write_le(out, tensor.band().f_stop_hz);
  const auto l = static_cast<Eigen::Index>(tensor.num_lines());
  for (std::size_t n = 0; n < tensor.num_tones(); ++n) {
    const auto& h = tensor.matrix(n);
    for (Eigen::Index r = 0; r < l; ++r)
      for (Eigen::Index c = 0; c < l; ++c) {
        write_le(out, h(r, c).real());
        write_le(out, h(r, c).imag());
      }
  }
  for (std::size_t n = 0; n < tensor.num_tones(); ++n)
    for (Eigen::Index r = 0; r < l; ++r) write_le(out, tensor.noise(n, static_cast<std::size_t>(r)));
  if (!out) throw FormatError("write failed: " + path.string());
}

void save_channel_text(const ChannelTensor& tensor, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << kTextHeader << " 1\n";
  out << tensor.num_tones() << ' ' << tensor.num_lines() << ' ' << tensor.band().f_start_hz << ' '
      << tensor.band().f_stop_hz << '\n';
  const auto l = static_cast<Eigen::Index>(tensor.num_lines());
  for (std::size_t n = 0; n < tensor.num_tones(); ++n) {
    out << "tone " << n << '\n';
    const auto& h = tensor.matrix(n);
    for (Eigen::Index r = 0; r < l; ++r) {
      for (Eigen::Index c = 0; c < l; ++c) out << (c ? " " : "") << h(r, c).real() << ' ' << h(r, c).imag();
      out << '\n';
    }
  }
  out << "noise\n";
  for (std::size_t n = 0; n < tensor.num_tones(); ++n) {
    for (Eigen::Index r = 0; r < l; ++r) out << (r ? " " : "") << tensor.noise(n, static_cast<std::size_t>(r));
    out << '\n';
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

ChannelTensor load_channel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::array<char, 8> head{};
  in.read(head.data(), head.size());
  if (in.gcount() == static_cast<std::streamsize>(head.size()) && head == kMagic) return load_binary(in, path);
  in.clear();
  in.seekg(0);
  return load_text(in, path);
}

}  // namespace gfast
