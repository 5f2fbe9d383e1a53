#include "geoloc/container.hpp"

#include <bit>
#include <cstring>
#include <sstream>
#include <vector>

#include "geoloc/error.hpp"
#include "geoloc/text_io.hpp"

namespace geoloc {

namespace {

constexpr std::string_view kMagic = "geoloc-model";

struct TensorDecl {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t count() const {
    std::size_t n = 1;
    for (const auto d : shape) n *= d;
    return n;
  }
};

void append_f32(std::string& out, double value) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<char>((bits >> shift) & 0xffu));
}

double read_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return static_cast<double>(std::bit_cast<float>(bits));
}

template <typename Block>
void append_block(std::string& out, const Block& block) {
  for (Eigen::Index i = 0; i < block.size(); ++i) append_f32(out, block.data()[i]);
}

template <typename Block>
const char* read_block(const char* p, Block& block) {
  for (Eigen::Index i = 0; i < block.size(); ++i, p += 4) block.data()[i] = read_f32(p);
  return p;
}

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorCode::model, what); }

std::size_t to_size(std::string_view text, std::string_view what) {
  const auto v = parse_int(text);
  if (!v || *v < 0) corrupt("manifest: bad " + std::string(what) + " '" + std::string(text) + "'");
  return static_cast<std::size_t>(*v);
}

}  // namespace

std::string serialize_model(const ModelContainer& c) {
  const auto& p = c.model.params;
  const std::string vocab = c.vocab.serialize();
  const std::string disc = c.discretiser.serialize();
  if (p.w1.rows() != static_cast<Eigen::Index>(c.vocab.size()) ||
      p.w2.cols() != static_cast<Eigen::Index>(c.discretiser.num_classes())) {
    throw Error(ErrorCode::dimension, "model shape disagrees with vocabulary or discretiser");
  }

  std::ostringstream head;
  head << kMagic << '\n' << "format_version=" << kModelFormatVersion << '\n';
  for (const auto& [key, value] : c.manifest) {
    if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw Error(ErrorCode::model, "manifest entry '" + key + "' is not a single line");
    }
    head << key << '=' << value << '\n';
  }
  for (const auto& [key, value] : c.model.meta.config) head << "config." << key << '=' << value << '\n';
  head << "activation=" << activation_name(c.model.activation) << '\n'
       << "fallback_class=" << c.model.meta.fallback_class << '\n'
       << "vocab_hash=" << c.vocab.hash() << '\n'
       << "discretiser_kind=" << discretiser_kind_name(c.discretiser.kind()) << '\n'
       << "discretiser_k=" << c.discretiser.requested_k() << '\n'
       << "discretiser_hash=" << c.discretiser.hash() << '\n'
       << "section=vocabulary " << vocab.size() << '\n'
       << "section=discretiser " << disc.size() << '\n'
       << "tensor=W1 f32 " << p.w1.rows() << ' ' << p.w1.cols() << '\n'
       << "tensor=b1 f32 " << p.b1.size() << '\n'
       << "tensor=W2 f32 " << p.w2.rows() << ' ' << p.w2.cols() << '\n'
       << "tensor=b2 f32 " << p.b2.size() << '\n'
       << "end\n";

  std::string out = head.str();
  out += vocab;
  out += disc;
  out.reserve(out.size() + 4 * static_cast<std::size_t>(p.w1.size() + p.b1.size() + p.w2.size() + p.b2.size()));
  append_block(out, p.w1);
  append_block(out, p.b1);
  append_block(out, p.w2);
  append_block(out, p.b2);
  return out;
}

ModelContainer deserialize_model(std::string_view bytes) {
  std::size_t pos = 0;
  const auto next_line = [&]() -> std::string_view {
    const auto end = bytes.find('\n', pos);
    if (end == std::string_view::npos) corrupt("manifest truncated");
    const auto line = bytes.substr(pos, end - pos);
    pos = end + 1;
    return line;
  };

  if (next_line() != kMagic) corrupt("not a geoloc model file");
  std::map<std::string, std::string> fields;
  std::vector<std::pair<std::string, std::size_t>> sections;
  std::vector<TensorDecl> tensors;
  bool saw_version = false;
  ModelContainer c;
  for (std::string_view line = next_line(); line != "end"; line = next_line()) {
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) corrupt("manifest line without '='");
    const std::string key(line.substr(0, eq));
    const std::string_view value = line.substr(eq + 1);
    if (key == "format_version") {
      saw_version = true;
      if (value != std::to_string(kModelFormatVersion)) {
        corrupt("unknown format version " + std::string(value) + " (expected " +
                std::to_string(kModelFormatVersion) + ")");
      }
    } else if (key == "section") {
      const auto parts = split(value, ' ');
      if (parts.size() != 2) corrupt("manifest: bad section line");
      sections.emplace_back(std::string(parts[0]), to_size(parts[1], "section length"));
    } else if (key == "tensor") {
      const auto parts = split(value, ' ');
      if (parts.size() < 3 || parts[1] != "f32") corrupt("manifest: bad tensor line");
      TensorDecl decl{std::string(parts[0]), {}};
      for (std::size_t i = 2; i < parts.size(); ++i) decl.shape.push_back(to_size(parts[i], "tensor dimension"));
      tensors.push_back(std::move(decl));
    } else if (key.starts_with("config.")) {
      c.model.meta.config[key.substr(7)] = std::string(value);
    } else {
      fields[key] = std::string(value);
    }
  }
  if (!saw_version) corrupt("manifest lacks format_version");

  if (sections.size() != 2 || sections[0].first != "vocabulary" || sections[1].first != "discretiser") {
    corrupt("manifest: expected vocabulary and discretiser sections");
  }
  if (tensors.size() != 4 || tensors[0].name != "W1" || tensors[1].name != "b1" ||
      tensors[2].name != "W2" || tensors[3].name != "b2" || tensors[0].shape.size() != 2 ||
      tensors[1].shape.size() != 1 || tensors[2].shape.size() != 2 || tensors[3].shape.size() != 1) {
    corrupt("manifest: expected tensors W1[V,H] b1[H] W2[H,C] b2[C]");
  }
  std::size_t expected = sections[0].second + sections[1].second;
  for (const auto& t : tensors) expected += 4 * t.count();
  const std::size_t actual = bytes.size() - pos;
  if (actual != expected) {
    corrupt("payload length mismatch: manifest declares " + std::to_string(expected) +
            " bytes, file holds " + std::to_string(actual));
  }

  const std::size_t v = tensors[0].shape[0], h = tensors[0].shape[1];
  const std::size_t c_out = tensors[2].shape[1];
  if (tensors[1].shape[0] != h || tensors[2].shape[0] != h || tensors[3].shape[0] != c_out) {
    corrupt("manifest: tensor shapes are inconsistent");
  }

  try {
    c.vocab = Vocabulary::deserialize(bytes.substr(pos, sections[0].second));
  } catch (const Error& e) {
    corrupt(std::string("vocabulary section: ") + e.what());
  }
  pos += sections[0].second;
  c.discretiser = Discretiser::deserialize(bytes.substr(pos, sections[1].second));
  pos += sections[1].second;

  if (c.vocab.size() != v) corrupt("W1 rows disagree with vocabulary size");
  if (c.discretiser.num_classes() != c_out) corrupt("W2 columns disagree with discretiser classes");
  if (fields.contains("vocab_hash") && fields["vocab_hash"] != std::to_string(c.vocab.hash())) {
    corrupt("vocabulary hash mismatch");
  }
  if (fields.contains("discretiser_hash") &&
      fields["discretiser_hash"] != std::to_string(c.discretiser.hash())) {
    corrupt("discretiser hash mismatch");
  }

  c.model.params = MlpParams::zeros(v, h, c_out);
  const char* data = bytes.data() + pos;
  data = read_block(data, c.model.params.w1);
  data = read_block(data, c.model.params.b1);
  data = read_block(data, c.model.params.w2);
  read_block(data, c.model.params.b2);

  try {
    c.model.activation = parse_activation(fields["activation"]);
  } catch (const Error& e) {
    corrupt(e.what());
  }
  c.model.meta.fallback_class = static_cast<std::uint32_t>(to_size(fields["fallback_class"], "fallback_class"));
  if (c.model.meta.fallback_class >= c_out) corrupt("fallback_class outside the class range");
  c.model.meta.vocab_hash = c.vocab.hash();
  c.model.meta.discretiser_hash = c.discretiser.hash();

  for (const char* key : {"activation", "fallback_class", "vocab_hash", "discretiser_kind",
                          "discretiser_k", "discretiser_hash"}) {
    fields.erase(key);
  }
  c.manifest = std::move(fields);
  c.model.check_finite();
  return c;
}

void save_model(const ModelContainer& container, const std::filesystem::path& path) {
  write_file(path, serialize_model(container));
}

ModelContainer load_model(const std::filesystem::path& path) {
  return deserialize_model(read_file(path));
}

}  // namespace geoloc
