#include "axloc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace axloc {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8U),
                              static_cast<unsigned char>(v >> 16U), static_cast<unsigned char>(v >> 24U)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  unsigned char b[8];
  for (unsigned i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8U * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

bool get_bytes(std::istream& in, unsigned char* dst, std::size_t n) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  return in.gcount() == static_cast<std::streamsize>(n);
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!get_bytes(in, b, 4)) throw CheckpointError("truncated checkpoint while reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8U) |
         (static_cast<std::uint32_t>(b[2]) << 16U) | (static_cast<std::uint32_t>(b[3]) << 24U);
}

double get_f64(std::istream& in, const std::string& what) {
  unsigned char b[8];
  if (!get_bytes(in, b, 8)) throw CheckpointError("truncated checkpoint while reading " + what);
  std::uint64_t v = 0;
  for (unsigned i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8U * i);
  return std::bit_cast<double>(v);
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  for (const auto& r : records) {
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put_u32(out, static_cast<std::uint32_t>(r.value.rank()));
    for (std::size_t d : r.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : r.value.data()) put_f64(out, v);
  }
  if (!out) throw CheckpointError("failed writing " + path.string());
}

std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw CheckpointError(path.string() + ": bad magic, not an AXPS checkpoint");
  }
  const std::uint32_t version = get_u32(in, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<CheckpointRecord> records;
  while (in.peek() != std::char_traits<char>::eof()) {
    const std::uint32_t len = get_u32(in, "name length");
    std::string name(len, '\0');
    if (!get_bytes(in, reinterpret_cast<unsigned char*>(name.data()), len)) {
      throw CheckpointError("truncated checkpoint while reading a record name");
    }
    const std::uint32_t rank = get_u32(in, name + " rank");
    Shape shape(rank);
    for (auto& d : shape) d = get_u32(in, name + " dims");
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = get_f64(in, name + " data");
    records.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return records;
}

std::vector<CheckpointRecord> parameter_records(const Model& model) {
  std::vector<CheckpointRecord> out;
  out.reserve(model.parameters().size());
  for (const auto& p : model.parameters()) out.push_back({p.name, p.value});
  return out;
}

void load_parameters(Model& model, const std::vector<CheckpointRecord>& records,
                     const std::vector<std::string>& ignored_prefixes) {
  std::unordered_map<std::string, const CheckpointRecord*> by_name;
  std::ostringstream diff;
  for (const auto& r : records) {
    bool ignored = false;
    for (const auto& prefix : ignored_prefixes) ignored = ignored || r.name.starts_with(prefix);
    if (ignored) continue;
    by_name.emplace(r.name, &r);
    if (!model.has_parameter(r.name)) {
      diff << "\n  unexpected: " << r.name << " " << shape_string(r.value.shape());
    }
  }
  for (const auto& p : model.parameters()) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      diff << "\n  missing: " << p.name << " expected " << shape_string(p.value.shape());
    } else if (it->second->value.shape() != p.value.shape()) {
      diff << "\n  shape: " << p.name << " expected " << shape_string(p.value.shape()) << " found "
           << shape_string(it->second->value.shape());
    }
  }
  const std::string problems = diff.str();
  if (!problems.empty()) throw CheckpointError("checkpoint does not match model configuration:" + problems);
  for (auto& p : model.parameters()) p.value = by_name.at(p.name)->value;
}

}  // namespace axloc
