#include "vlprobe/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "vlprobe/error.hpp"

namespace vlprobe::model {

namespace {

constexpr char kMagic[4] = {'V', 'L', 'P', 'C'};

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xFFFFFFFFu));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_floats(std::ostream& out, const std::vector<float>& data) {
  std::vector<char> buf(data.size() * 4);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(data[i]);
    for (int k = 0; k < 4; ++k) buf[i * 4 + k] = static_cast<char>((bits >> (8 * k)) & 0xFF);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void read_exact(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) fail(ErrorKind::SchemaError, "checkpoint: truncated file");
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& in) {
  const std::uint64_t lo = get_u32(in);
  const std::uint64_t hi = get_u32(in);
  return lo | (hi << 32);
}

void get_floats(std::istream& in, std::vector<float>& data) {
  std::vector<unsigned char> buf(data.size() * 4);
  read_exact(in, reinterpret_cast<char*>(buf.data()), buf.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(buf[i * 4 + k]) << (8 * k);
    data[i] = std::bit_cast<float>(bits);
  }
}

std::string get_string(std::istream& in, std::size_t max_len) {
  const auto n = get_u32(in);
  if (n > max_len) fail(ErrorKind::SchemaError, "checkpoint: implausible string length");
  std::string s(n, '\0');
  read_exact(in, s.data(), n);
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  const auto& c = ck.params.config;
  if (!ck.vocab || ck.vocab->size() != c.vocab_size)
    fail(ErrorKind::ShapeError, "checkpoint: vocabulary does not match model config");
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  for (std::size_t v : {c.vocab_size, c.d_model, c.n_heads, c.n_layers, c.d_v, c.max_len})
    put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(ck.vocab->size()));
  for (const auto& tok : ck.vocab->tokens()) {
    put_u32(out, static_cast<std::uint32_t>(tok.size()));
    out.write(tok.data(), static_cast<std::streamsize>(tok.size()));
  }
  std::uint32_t n_tensors = 0;
  ck.params.for_each([&](const std::string&, const Tensor<float>&) { ++n_tensors; });
  put_u32(out, n_tensors);
  ck.params.for_each([&](const std::string& name, const Tensor<float>& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.rows));
    put_u32(out, static_cast<std::uint32_t>(t.cols));
  });
  put_u32(out, ck.optimizer ? 1u : 0u);
  if (ck.optimizer) put_u64(out, ck.optimizer->step);
  ck.params.for_each([&](const std::string&, const Tensor<float>& t) { put_floats(out, t.data); });
  if (ck.optimizer) {
    ck.optimizer->m.for_each([&](const std::string&, const Tensor<float>& t) { put_floats(out, t.data); });
    ck.optimizer->v.for_each([&](const std::string&, const Tensor<float>& t) { put_floats(out, t.data); });
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  read_exact(in, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) fail(ErrorKind::SchemaError, "checkpoint: bad magic");
  const auto version = get_u32(in);
  if (version != kCheckpointVersion)
    fail(ErrorKind::SchemaError, "checkpoint: unsupported schema version " + std::to_string(version));
  ModelConfig c;
  c.vocab_size = get_u32(in);
  c.d_model = get_u32(in);
  c.n_heads = get_u32(in);
  c.n_layers = get_u32(in);
  c.d_v = get_u32(in);
  c.max_len = get_u32(in);
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorKind::SchemaError, std::string("checkpoint: ") + e.what());
  }
  const auto n_tokens = get_u32(in);
  if (n_tokens != c.vocab_size) fail(ErrorKind::SchemaError, "checkpoint: token count differs from vocab_size");
  std::vector<std::string> tokens;
  tokens.reserve(n_tokens);
  for (std::uint32_t i = 0; i < n_tokens; ++i) tokens.push_back(get_string(in, 1 << 16));
  Vocabulary probe;
  for (std::size_t i = 0; i < Vocabulary::kNumReserved; ++i)
    if (tokens[i] != probe.token(static_cast<TokenId>(i))) fail(ErrorKind::SchemaError, "checkpoint: reserved tokens out of place");
  std::vector<std::string> words(tokens.begin() + Vocabulary::kNumReserved, tokens.end());
  auto vocab = std::make_shared<const Vocabulary>(words);

  Checkpoint ck;
  ck.vocab = vocab;
  ck.params = Params<float>::zeros(c);
  const auto n_tensors = get_u32(in);
  std::vector<Tensor<float>*> slots;
  std::vector<std::string> names;
  ck.params.for_each([&](const std::string& name, Tensor<float>& t) {
    slots.push_back(&t);
    names.push_back(name);
  });
  if (n_tensors != slots.size()) fail(ErrorKind::SchemaError, "checkpoint: tensor count mismatch");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto name = get_string(in, 256);
    const auto rows = get_u32(in);
    const auto cols = get_u32(in);
    if (name != names[i] || rows != slots[i]->rows || cols != slots[i]->cols)
      fail(ErrorKind::SchemaError, "checkpoint: shape table entry " + std::to_string(i) + " (" + name +
                                       ") does not match the model config");
  }
  const auto has_opt = get_u32(in);
  if (has_opt > 1) fail(ErrorKind::SchemaError, "checkpoint: bad optimizer flag");
  std::uint64_t opt_step = has_opt ? get_u64(in) : 0;
  for (auto* t : slots) get_floats(in, t->data);
  if (has_opt) {
    auto state = AdamState<float>::zeros(c);
    state.step = opt_step;
    state.m.for_each([&](const std::string&, Tensor<float>& t) { get_floats(in, t.data); });
    state.v.for_each([&](const std::string&, Tensor<float>& t) { get_floats(in, t.data); });
    ck.optimizer = std::move(state);
  }
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::SchemaError, "checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  write_checkpoint(out, checkpoint);
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace vlprobe::model
