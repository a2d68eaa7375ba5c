#include "shardjoin/workload.hpp"

#include <algorithm>
#include <cmath>
#include <array>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

namespace shardjoin {

void GenSpec::validate() const {
  if (domain == 0) {
    throw ConfigError("domain must be at least 1");
  }
  if (tuple_size < kKeyBytes) {
    throw ConfigError("tuple_size must be at least 8");
  }
  if (distribution == Distribution::kZipf && zipf_theta < 0.0) {
    throw ConfigError("zipf theta must be non-negative");
  }
  if (distribution == Distribution::kLocality) {
    if (block_size == 0) {
      throw ConfigError("locality block size must be positive");
    }
    if (p_stay < 0.0 || p_stay > 1.0) {
      throw ConfigError("locality p_stay must be in [0, 1]");
    }
  }
}

std::string to_string(const GenSpec& spec) {
  std::ostringstream os;
  switch (spec.distribution) {
    case Distribution::kUniform: os << "uniform"; break;
    case Distribution::kZipf: os << "zipf:" << spec.zipf_theta; break;
    case Distribution::kLocality: os << "locality:" << spec.block_size << ":" << spec.p_stay; break;
  }
  return os.str();
}

void parse_distribution(const std::string& text, GenSpec& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ':')) {
    parts.push_back(part);
  }
  try {
    if (parts.size() == 1 && parts[0] == "uniform") {
      spec.distribution = Distribution::kUniform;
      return;
    }
    if (parts.size() == 2 && parts[0] == "zipf") {
      spec.distribution = Distribution::kZipf;
      spec.zipf_theta = std::stod(parts[1]);
      if (spec.zipf_theta >= 0.0) {
        return;
      }
    }
    if (parts.size() == 3 && parts[0] == "locality") {
      spec.distribution = Distribution::kLocality;
      spec.block_size = std::stoull(parts[1]);
      spec.p_stay = std::stod(parts[2]);
      if (spec.block_size >= 1 && spec.p_stay >= 0.0 && spec.p_stay <= 1.0) {
        return;
      }
    }
  } catch (const std::logic_error&) {
    // fall through to the error below
  }
  throw ConfigError("bad distribution '" + text +
                    "' (expected uniform, zipf:<theta> or locality:<block>:<p_stay>)");
}

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// mt19937_64's output sequence is fixed by the standard; the reductions
// below avoid std:: distributions, whose algorithms are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Unbiased in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

class ZipfSampler {
 public:
  ZipfSampler(Key domain, double theta) : cdf_(domain) {
    double sum = 0.0;
    for (Key k = 0; k < domain; ++k) {
      sum += 1.0 / std::pow(static_cast<double>(k + 1), theta);
      cdf_[k] = sum;
    }
    for (auto& c : cdf_) {
      c /= sum;
    }
  }

  Key sample(Rng& rng) const {
    const double u = rng.unit();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) {
      --it;
    }
    return static_cast<Key>(it - cdf_.begin());
  }

 private:
  std::vector<double> cdf_;
};

void fill_payload(std::byte* dst, std::size_t len, std::uint64_t seed) {
  std::uint64_t state = seed;
  for (std::size_t i = 0; i < len; i += 8) {
    state = mix64(state);
    const std::size_t n = std::min<std::size_t>(8, len - i);
    for (std::size_t j = 0; j < n; ++j) {
      dst[i + j] = static_cast<std::byte>((state >> (8 * j)) & 0xFF);
    }
  }
}

} // namespace

Partition generate_partition(const GenSpec& spec, TableId table, NodeId node) {
  spec.validate();
  const std::uint64_t stream_seed =
      mix64(mix64(spec.seed) ^ (static_cast<std::uint64_t>(table) << 32 | node));
  Rng rng(stream_seed);

  Partition p;
  p.table_id = table;
  p.node_id = node;
  p.domain = spec.domain;
  p.tuples = TupleBlock(spec.tuple_size);

  auto& bytes = p.tuples.mutable_bytes();
  bytes.resize(spec.tuples * spec.tuple_size);

  std::optional<ZipfSampler> zipf;
  if (spec.distribution == Distribution::kZipf) {
    zipf.emplace(spec.domain, spec.zipf_theta);
  }
  const std::uint64_t blocks = (spec.domain + spec.block_size - 1) / spec.block_size;
  std::uint64_t block = blocks > 0 ? rng.below(blocks) : 0;

  for (std::uint64_t i = 0; i < spec.tuples; ++i) {
    Key key = 0;
    switch (spec.distribution) {
      case Distribution::kUniform: key = rng.below(spec.domain); break;
      case Distribution::kZipf: key = zipf->sample(rng); break;
      case Distribution::kLocality: {
        if (i > 0 && rng.unit() >= spec.p_stay) {
          block = rng.below(blocks);
        }
        const Key lo = block * spec.block_size;
        const Key width = std::min<Key>(spec.block_size, spec.domain - lo);
        key = lo + rng.below(width);
        break;
      }
    }
    std::byte* t = bytes.data() + i * spec.tuple_size;
    store_le<Key>(t, key);
    fill_payload(t + kKeyBytes, spec.tuple_size - kKeyBytes, rng.next());
  }
  return p;
}

GenSpec gen_spec_from_kv(const KeyValueFile& kv) {
  GenSpec g;
  g.seed = kv.get_u64("seed", g.seed);
  g.tuples = kv.get_u64("tuples", kv.get_u64("partition_size_r", g.tuples));
  g.domain = kv.get_u64("domain", g.domain);
  g.tuple_size = static_cast<std::uint32_t>(kv.get_u64("tuple_size", g.tuple_size));
  if (auto d = kv.get("distribution")) {
    parse_distribution(*d, g);
  }
  g.validate();
  return g;
}

std::string partition_file_name(TableId table, NodeId node) {
  return std::string(table_name(table)) + "_" + std::to_string(node) + ".sjpt";
}

void write_partition(const std::string& path, const Partition& partition) {
  std::array<std::byte, kPartitionHeaderSize> h{};
  h[0] = std::byte{'S'};
  h[1] = std::byte{'J'};
  h[2] = std::byte{'P'};
  h[3] = std::byte{'T'};
  store_le<std::uint32_t>(h.data() + 4, kPartitionFileVersion);
  store_le<std::uint32_t>(h.data() + 8, static_cast<std::uint32_t>(partition.table_id));
  store_le<std::uint32_t>(h.data() + 12, partition.node_id);
  store_le<std::uint64_t>(h.data() + 16, partition.tuples.size());
  store_le<std::uint32_t>(h.data() + 24, partition.tuples.tuple_size());
  store_le<std::uint64_t>(h.data() + 28, partition.domain);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path + " for writing");
  }
  out.write(reinterpret_cast<const char*>(h.data()), h.size());
  const auto body = partition.tuples.bytes();
  out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  out.flush();
  if (!out) {
    throw IoError("write to " + path + " failed");
  }
}

Partition read_partition(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  std::array<std::byte, kPartitionHeaderSize> h{};
  in.read(reinterpret_cast<char*>(h.data()), h.size());
  if (in.gcount() != static_cast<std::streamsize>(h.size())) {
    throw FormatError(path + ": truncated header");
  }
  if (h[0] != std::byte{'S'} || h[1] != std::byte{'J'} || h[2] != std::byte{'P'} ||
      h[3] != std::byte{'T'}) {
    throw FormatError(path + ": bad magic");
  }
  const auto version = load_le<std::uint32_t>(h.data() + 4);
  if (version != kPartitionFileVersion) {
    throw FormatError(path + ": unsupported version " + std::to_string(version));
  }
  const auto table = load_le<std::uint32_t>(h.data() + 8);
  if (table > 1) {
    throw FormatError(path + ": unknown table id " + std::to_string(table));
  }
  const auto count = load_le<std::uint64_t>(h.data() + 16);
  const auto tuple_size = load_le<std::uint32_t>(h.data() + 24);
  if (tuple_size < kKeyBytes) {
    throw FormatError(path + ": tuple size " + std::to_string(tuple_size) + " below 8");
  }
  Partition p;
  p.table_id = static_cast<TableId>(table);
  p.node_id = load_le<std::uint32_t>(h.data() + 12);
  p.domain = load_le<std::uint64_t>(h.data() + 28);
  p.tuples = TupleBlock(tuple_size);

  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  if (file_size != kPartitionHeaderSize + count * tuple_size) {
    throw FormatError(path + ": size " + std::to_string(file_size) + " does not match " +
                      std::to_string(count) + " tuples of " + std::to_string(tuple_size) +
                      " bytes");
  }
  in.seekg(static_cast<std::streamoff>(kPartitionHeaderSize));
  auto& bytes = p.tuples.mutable_bytes();
  bytes.resize(count * tuple_size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) {
    throw IoError(path + ": read failed");
  }
  for (std::size_t i = 0; i < p.tuples.size(); ++i) {
    if (p.domain != 0 && p.tuples.key(i) >= p.domain) {
      throw FormatError(path + ": key " + std::to_string(p.tuples.key(i)) + " outside domain");
    }
  }
  return p;
}

} // namespace shardjoin
