#include "gait/io.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gait/errors.hpp"

namespace gait::io {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw IoError(path + ": " + what);
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void append_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  append_u32(out, bits);
}

/// Little-endian cursor over a byte buffer; throws on truncation.
struct Reader {
  const std::vector<std::uint8_t>& buf;
  const std::string& path;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) fail(path, "truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

bool file_exists(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return f.good();
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(path, "cannot open");
  f.seekg(0, std::ios::end);
  const std::streamoff size = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
  if (size > 0 && !f.read(reinterpret_cast<char*>(buf.data()), size)) fail(path, "read failed");
  return buf;
}

void write_bytes_atomic(const std::string& path, const void* data, std::size_t size) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) fail(tmp, "cannot open for writing");
    if (size > 0) f.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!f) fail(tmp, "write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) fail(path, "rename failed");
}

void write_text_atomic(const std::string& path, const std::string& text) {
  write_bytes_atomic(path, text.data(), text.size());
}

std::string read_text(const std::string& path) {
  const auto buf = read_bytes(path);
  return std::string(buf.begin(), buf.end());
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// -- frames -------------------------------------------------------------

TensorF read_pgm(const std::string& path) {
  const auto buf = read_bytes(path);
  std::size_t pos = 0;
  const auto next_token = [&]() -> std::string {
    // skip whitespace and '#' comment lines between header fields
    while (pos < buf.size()) {
      if (std::isspace(buf[pos])) {
        ++pos;
      } else if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < buf.size() && !std::isspace(buf[pos])) tok.push_back(static_cast<char>(buf[pos++]));
    if (tok.empty()) fail(path, "truncated header");
    return tok;
  };

  if (next_token() != "P5") fail(path, "not a binary graymap");
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w < 1 || h < 1) fail(path, "bad dimensions");
  if (maxval < 1 || maxval > 255) fail(path, "only 8-bit graymaps supported");
  ++pos;  // single whitespace byte after maxval
  if (pos + static_cast<std::size_t>(w) * h > buf.size()) fail(path, "truncated pixel data");

  TensorF img({h, w});
  for (std::int64_t i = 0; i < img.numel(); ++i)
    img[i] = static_cast<float>(buf[pos + static_cast<std::size_t>(i)]);
  return img;
}

void write_pgm(const std::string& path, const TensorF& img) {
  if (img.rank() != 2) throw ConfigError("graymap wants an (H, W) tensor, got " + shape_str(img.shape()));
  const int h = img.dim(0), w = img.dim(1);
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(img.numel()));
  for (std::int64_t i = 0; i < img.numel(); ++i) {
    const float v = std::round(std::min(255.0f, std::max(0.0f, img[i])));
    out.push_back(static_cast<char>(static_cast<std::uint8_t>(v)));
  }
  write_text_atomic(path, out);
}

TensorF read_flo(const std::string& path) {
  const auto buf = read_bytes(path);
  Reader r{buf, path};
  if (r.bytes(4) != "FLO1") fail(path, "bad flow magic");
  const std::uint32_t w = r.u32();
  const std::uint32_t h = r.u32();
  if (w < 1 || h < 1 || w > 1 << 20 || h > 1 << 20) fail(path, "bad dimensions");
  TensorF flow({2, static_cast<int>(h), static_cast<int>(w)});
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < plane; ++i) {
    flow[i] = r.f32();          // u
    flow[plane + i] = r.f32();  // v
  }
  return flow;
}

void write_flo(const std::string& path, const TensorF& flow) {
  if (flow.rank() != 3 || flow.dim(0) != 2)
    throw ConfigError("flow file wants a (2, H, W) tensor, got " + shape_str(flow.shape()));
  const int h = flow.dim(1), w = flow.dim(2);
  std::vector<std::uint8_t> out;
  out.reserve(12 + static_cast<std::size_t>(flow.numel()) * 4);
  for (char c : {'F', 'L', 'O', '1'}) out.push_back(static_cast<std::uint8_t>(c));
  append_u32(out, static_cast<std::uint32_t>(w));
  append_u32(out, static_cast<std::uint32_t>(h));
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < plane; ++i) {
    append_f32(out, flow[i]);
    append_f32(out, flow[plane + i]);
  }
  write_bytes_atomic(path, out.data(), out.size());
}

// -- manifest -----------------------------------------------------------

bool valid_split(const std::string& split) {
  return split == "train" || split == "val" || split == "test" || split == "test-gallery";
}

std::vector<SequenceEntry> read_manifest(const std::string& path) {
  std::istringstream in(read_text(path));
  std::vector<SequenceEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    SequenceEntry e;
    if (!(ls >> e.seq_id)) continue;  // blank or comment-only line
    if (!(ls >> e.subject_id >> e.scenario >> e.viewpoint >> e.dir >> e.split))
      fail(path, "line " + std::to_string(lineno) + ": expected 6 fields");
    std::string extra;
    if (ls >> extra) fail(path, "line " + std::to_string(lineno) + ": trailing fields");
    if (!valid_split(e.split))
      fail(path, "line " + std::to_string(lineno) + ": unknown split '" + e.split + "'");
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<SequenceEntry>& entries) {
  std::ostringstream os;
  os << "# seq_id subject_id scenario viewpoint dir split\n";
  for (const auto& e : entries)
    os << e.seq_id << ' ' << e.subject_id << ' ' << e.scenario << ' ' << e.viewpoint << ' '
       << e.dir << ' ' << e.split << '\n';
  write_text_atomic(path, os.str());
}

// -- score files --------------------------------------------------------

std::vector<ScoreLine> read_scores(const std::string& path) {
  std::istringstream in(read_text(path));
  std::vector<ScoreLine> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    ScoreLine s;
    if (!(ls >> s.video_id)) continue;
    if (!(ls >> s.modality)) fail(path, "line " + std::to_string(lineno) + ": missing modality");
    double p;
    while (ls >> p) s.probs.push_back(p);
    if (s.probs.empty()) fail(path, "line " + std::to_string(lineno) + ": no scores");
    if (!out.empty() && out.front().probs.size() != s.probs.size())
      fail(path, "line " + std::to_string(lineno) + ": inconsistent class count");
    out.push_back(std::move(s));
  }
  return out;
}

void write_scores(const std::string& path, const std::vector<ScoreLine>& lines) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& s : lines) {
    os << s.video_id << ' ' << s.modality;
    for (double p : s.probs) os << ' ' << p;
    os << '\n';
  }
  write_text_atomic(path, os.str());
}

// -- checkpoints ----------------------------------------------------------

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out;
  for (char c : {'G', 'A', 'I', 'T', 'C', 'K', 'P', 'T'}) out.push_back(static_cast<std::uint8_t>(c));
  append_u32(out, ckpt.version);
  append_u64(out, ckpt.config_hash);
  append_u32(out, static_cast<std::uint32_t>(ckpt.blocks.size()));
  for (const auto& [name, tensor] : ckpt.blocks) {
    append_u32(out, static_cast<std::uint32_t>(name.size()));
    for (char c : name) out.push_back(static_cast<std::uint8_t>(c));
    append_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (int d = 0; d < tensor.rank(); ++d) append_u32(out, static_cast<std::uint32_t>(tensor.dim(d)));
    for (std::int64_t i = 0; i < tensor.numel(); ++i) append_f32(out, tensor[i]);
  }
  append_u64(out, fnv1a64(out.data(), out.size()));
  write_bytes_atomic(path, out.data(), out.size());
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto buf = read_bytes(path);
  if (buf.size() < 8 + 4 + 8 + 4 + 8) fail(path, "truncated file");
  const std::uint64_t stored = [&] {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[buf.size() - 8 + i]) << (8 * i);
    return v;
  }();
  if (fnv1a64(buf.data(), buf.size() - 8) != stored) fail(path, "checksum mismatch");

  Reader r{buf, path};
  if (r.bytes(8) != "GAITCKPT") fail(path, "bad magic");
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kCheckpointVersion)
    fail(path, "version mismatch: file has " + std::to_string(ckpt.version) + ", expected " +
                   std::to_string(kCheckpointVersion));
  ckpt.config_hash = r.u64();
  const std::uint32_t count = r.u32();
  for (std::uint32_t b = 0; b < count; ++b) {
    const std::uint32_t name_len = r.u32();
    if (name_len > 4096) fail(path, "implausible block name length");
    const std::string name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) fail(path, "implausible block rank");
    Shape shape;
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<int>(r.u32()));
      numel *= shape.back();
    }
    TensorF t(shape);
    for (std::int64_t i = 0; i < numel; ++i) t[i] = r.f32();
    if (!ckpt.blocks.emplace(name, std::move(t)).second) fail(path, "duplicate block '" + name + "'");
  }
  if (r.pos != buf.size() - 8) fail(path, "trailing bytes before checksum");
  return ckpt;
}

}  // namespace gait::io
