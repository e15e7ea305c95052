#include "xflood/checkpoint.hpp"

#include <limits>

#include "xflood/binary_io.hpp"
#include "xflood/errors.hpp"

namespace xflood {

namespace {
constexpr char kMagic[4] = {'X', 'F', 'L', 'D'};
}

std::string encode_checkpoint(const ParamStore& params) {
  std::string out(kMagic, 4);
  binio::put_u8(out, kCheckpointVersion);
  binio::put_le<std::uint64_t>(out, params.size());
  for (const auto& [name, e] : params) {
    if (name.size() > std::numeric_limits<std::uint32_t>::max()) throw ContractError("parameter name too long");
    binio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    const Shape& s = e.value.shape();
    binio::put_u8(out, static_cast<std::uint8_t>(s.rank()));
    for (std::size_t ext : s.extents()) binio::put_le<std::uint64_t>(out, ext);
    for (double v : e.value.data()) binio::put_f64(out, v);
  }
  return out;
}

ParamStore decode_checkpoint(const std::string& bytes) {
  binio::Reader r(bytes);
  if (bytes.size() < 4 || bytes.compare(0, 4, kMagic, 4) != 0) throw ParseError("bad checkpoint magic", 0);
  r.text(4, "magic");
  const std::size_t version_at = r.offset();
  const std::uint8_t version = r.u8("version");
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const auto count = r.le<std::uint64_t>("entry count");
  ParamStore store;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.le<std::uint32_t>("name length");
    const std::size_t name_at = r.offset();
    std::string name = r.text(name_len, "name");
    if (name.empty()) throw ParseError("empty parameter name", name_at);
    if (store.contains(name)) throw ParseError("duplicate parameter " + name, name_at);
    const std::size_t rank_at = r.offset();
    const std::uint8_t rank = r.u8("rank");
    if (rank < 1 || rank > Shape::kMaxRank) throw ParseError("rank out of range for " + name, rank_at);
    std::vector<std::size_t> extents;
    std::size_t numel = 1;
    for (std::uint8_t a = 0; a < rank; ++a) {
      const std::size_t at = r.offset();
      const auto ext = r.le<std::uint64_t>("extent");
      if (ext == 0) throw ParseError("zero extent for " + name, at);
      if (numel > (bytes.size() / 8) / ext + 1) throw ParseError("tensor too large for file: " + name, at);
      extents.push_back(ext);
      numel *= ext;
    }
    r.expect(numel * 8, "tensor data");
    Tensor value{Shape(std::move(extents))};
    for (double& v : value.data()) v = r.f64("tensor data");
    const bool trainable = !is_buffer_name(name);
    store.put(name, std::move(value), trainable);
  }
  if (!r.done()) throw ParseError("trailing bytes after checkpoint", r.offset());
  return store;
}

void save_checkpoint(const ParamStore& params, const std::string& path) {
  binio::write_file(path, encode_checkpoint(params));
}

ParamStore load_checkpoint(const std::string& path) { return decode_checkpoint(binio::read_file(path)); }

std::size_t checkpoint_size(const ParamStore& params) {
  std::size_t n = 4 + 1 + 8;
  for (const auto& [name, e] : params) n += 4 + name.size() + 1 + 8 * e.value.rank() + 8 * e.value.size();
  return n;
}

}  // namespace xflood
