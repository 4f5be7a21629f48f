#include "mqmrc/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "mqmrc/errors.hpp"

namespace mqmrc {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(t));
  return entries_.back().second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return entries_[it->second].second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return entries_[it->second].second;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

void ParamStore::set_requires_grad(bool v) {
  for (auto& [name, t] : entries_) t.set_requires_grad(v);
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& [name, t] : entries_) {
    Tensor copy(t.shape(), t.data(), t.requires_grad());
    out.add(name, copy);
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'M', 'Q', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void put(std::vector<std::uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw DataError("checkpoint: truncated file");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::vector<std::uint8_t> checkpoint_bytes(const ParamStore& params) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + sizeof(kMagic));
  put<std::uint64_t>(out, params.count());
  for (const auto& [name, t] : params.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.data()) put<double>(out, v);
  }
  return out;
}

void save_checkpoint(const ParamStore& params, const std::string& path) {
  const auto bytes = checkpoint_bytes(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("checkpoint: cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot read " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("checkpoint: bad magic in " + path);
  }
  pos = sizeof(kMagic);
  const auto count = take<std::uint64_t>(bytes, pos);
  ParamStore store;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = take<std::uint32_t>(bytes, pos);
    if (pos + name_len > bytes.size()) throw DataError("checkpoint: truncated name");
    std::string name(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
    pos += name_len;
    const auto rank = take<std::uint32_t>(bytes, pos);
    Shape shape(rank);
    for (auto& d : shape) d = take<std::uint64_t>(bytes, pos);
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = take<double>(bytes, pos);
    store.add(name, Tensor(shape, std::move(data)));
  }
  return store;
}

Tensor randn(Shape shape, std::mt19937_64& rng, double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace mqmrc
