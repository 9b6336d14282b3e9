#include "secure/util.hpp"

#include <fstream>

namespace secure {

std::vector<char> read_file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + p.string());
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(size));
  if (size > 0) in.read(buf.data(), size);
  if (!in) throw IoError("short read from " + p.string());
  return buf;
}

void write_file_bytes(const std::filesystem::path& p, const void* data,
                      std::size_t len) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out.write(static_cast<const char*>(data),
            static_cast<std::streamsize>(len));
  if (!out) throw IoError("short write to " + p.string());
}

void write_file_atomic(const std::filesystem::path& p,
                       const std::string& text) {
  const auto tmp = p.string() + ".tmp";
  write_file_bytes(tmp, text.data(), text.size());
  std::error_code ec;
  std::filesystem::rename(tmp, p, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + p.string());
}

std::uint64_t checksum_file(const std::filesystem::path& p) {
  const auto bytes = read_file_bytes(p);
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace secure
