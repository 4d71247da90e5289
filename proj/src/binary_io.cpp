#include "xregion/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace xregion {

void BinaryWriter::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path);
  out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "write failed: " + path);
}

BinaryReader BinaryReader::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return BinaryReader(std::move(bytes), path);
}

}  // namespace xregion
