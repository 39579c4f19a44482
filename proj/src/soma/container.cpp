// Copyright 2026 The soma Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "soma/container.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace soma::container {

namespace {

static_assert(sizeof(float) == 4, "float32 expected");

void write_u32_le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("container: truncated header length");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

const MatX& Blob::block(const std::string& name) const {
  for (const auto& [n, m] : blocks)
    if (n == name) return m;
  throw std::runtime_error("container: missing block '" + name + "'");
}

bool Blob::has_block(const std::string& name) const {
  for (const auto& [n, m] : blocks)
    if (n == name) return true;
  return false;
}

void write(const std::string& path, const Blob& blob) {
  nlohmann::json header = blob.header;
  nlohmann::json decl = nlohmann::json::array();
  for (const auto& [name, m] : blob.blocks)
    decl.push_back({{"name", name},
                    {"rows", static_cast<std::int64_t>(m.rows())},
                    {"cols", static_cast<std::int64_t>(m.cols())}});
  header["blocks"] = decl;
  header["dtype"] = "float32";
  header["byte_order"] = "little";

  const std::string hs = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("container: cannot open " + path + " for writing");
  write_u32_le(os, static_cast<std::uint32_t>(hs.size()));
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));

  std::vector<float> buf;
  for (const auto& [name, m] : blob.blocks) {
    buf.resize(static_cast<size_t>(m.size()));
    // Row-major order on disk.
    size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) buf[k++] = static_cast<float>(m(r, c));
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("container: write failed for " + path);
}

Blob read(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("container: cannot open " + path);
  const std::uint32_t hlen = read_u32_le(is);
  std::string hs(hlen, '\0');
  is.read(hs.data(), hlen);
  if (!is) throw std::runtime_error("container: truncated header in " + path);

  Blob blob;
  blob.header = nlohmann::json::parse(hs, nullptr, /*allow_exceptions=*/true);
  if (!blob.header.contains("blocks"))
    throw std::runtime_error("container: header missing block table in " + path);

  std::vector<float> buf;
  for (const auto& decl : blob.header["blocks"]) {
    const std::string name = decl.at("name").get<std::string>();
    const auto rows = decl.at("rows").get<std::int64_t>();
    const auto cols = decl.at("cols").get<std::int64_t>();
    if (rows < 0 || cols < 0) throw std::runtime_error("container: bad block shape in " + path);
    buf.resize(static_cast<size_t>(rows) * static_cast<size_t>(cols));
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!is) throw std::runtime_error("container: truncated block '" + name + "' in " + path);
    MatX m(rows, cols);
    size_t k = 0;
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t c = 0; c < cols; ++c) m(r, c) = static_cast<double>(buf[k++]);
    blob.blocks.emplace_back(name, std::move(m));
  }
  return blob;
}

MatX quantize_f32(const MatX& m) {
  return m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

}  // namespace soma::container
