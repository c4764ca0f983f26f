#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "thinar/error.hpp"
#include "thinar/mcmc.hpp"

namespace thinar {

namespace {

constexpr char kMagic[8] = {'T', 'H', 'I', 'N', 'D', 'R', 'A', 'W'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ValidationError("draws file: truncated");
  return v;
}

}  // namespace

void write_draws_csv(const DrawStore& store, std::ostream& out) {
  out << "chain,iter,parameter,value\n";
  char buf[64];
  for (std::size_t c = 0; c < store.n_chains(); ++c) {
    for (std::size_t d = 0; d < store.n_draws(); ++d) {
      for (std::size_t p = 0; p < store.n_params(); ++p) {
        std::snprintf(buf, sizeof buf, "%.17g", store.at(c, d, p));
        out << c + 1 << ',' << d + 1 << ',' << store.names[p] << ',' << buf << '\n';
      }
    }
  }
}

DrawStore read_draws_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("chain,iter,parameter,value", 0) != 0) {
    throw ValidationError("draws CSV: expected header chain,iter,parameter,value");
  }
  DrawStore store;
  std::map<std::string, std::size_t> index;
  // (chain, iter) -> row of values, in file order
  std::vector<std::vector<std::vector<double>>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    // Parameter names contain commas ("x[1,2]"): split off the first two
    // fields and the last one.
    const auto p1 = line.find(',');
    const auto p2 = p1 == std::string::npos ? p1 : line.find(',', p1 + 1);
    const auto p3 = line.rfind(',');
    if (p2 == std::string::npos || p3 <= p2) throw ValidationError("draws CSV: malformed line " + std::to_string(line_no));
    std::size_t chain, iter;
    double value;
    try {
      chain = std::stoul(line.substr(0, p1));
      iter = std::stoul(line.substr(p1 + 1, p2 - p1 - 1));
      value = std::stod(line.substr(p3 + 1));
    } catch (const std::exception&) {
      throw ValidationError("draws CSV: malformed line " + std::to_string(line_no));
    }
    if (chain < 1 || iter < 1) throw ValidationError("draws CSV: chain and iter are 1-based");
    const std::string name = line.substr(p2 + 1, p3 - p2 - 1);
    auto it = index.find(name);
    if (it == index.end()) {
      it = index.emplace(name, store.names.size()).first;
      store.names.push_back(name);
    }
    if (rows.size() < chain) rows.resize(chain);
    auto& chain_rows = rows[chain - 1];
    if (chain_rows.size() < iter) chain_rows.resize(iter);
    auto& row = chain_rows[iter - 1];
    if (row.size() <= it->second) row.resize(it->second + 1, NAN);
    row[it->second] = value;
  }
  const std::size_t p = store.names.size();
  for (auto& chain_rows : rows) {
    std::vector<double> flat;
    flat.reserve(chain_rows.size() * p);
    for (auto& row : chain_rows) {
      if (row.size() != p) throw ValidationError("draws CSV: incomplete draw rows");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    store.chains.push_back(std::move(flat));
    store.accept_rate.push_back(NAN);
    store.step_size.push_back(NAN);
  }
  for (const auto& c : store.chains) {
    if (c.size() != store.chains.front().size()) throw ValidationError("draws CSV: chains differ in length");
  }
  return store;
}

void write_draws_binary(const DrawStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.n_chains()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.n_params()));
  for (const auto& name : store.names) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  for (std::size_t c = 0; c < store.n_chains(); ++c) {
    put<std::uint64_t>(out, store.n_params() ? store.chains[c].size() / store.n_params() : 0);
    put<double>(out, c < store.accept_rate.size() ? store.accept_rate[c] : NAN);
    put<double>(out, c < store.step_size.size() ? store.step_size[c] : NAN);
    out.write(reinterpret_cast<const char*>(store.chains[c].data()),
              static_cast<std::streamsize>(store.chains[c].size() * sizeof(double)));
  }
  if (!out) throw ValidationError("failed writing " + path);
}

DrawStore read_draws_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ValidationError(path + ": not a draws file");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw ValidationError(path + ": unsupported draws version " + std::to_string(version));
  const auto n_chains = get<std::uint32_t>(in);
  const auto n_params = get<std::uint32_t>(in);
  DrawStore store;
  for (std::uint32_t p = 0; p < n_params; ++p) {
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    store.names.push_back(std::move(name));
  }
  for (std::uint32_t c = 0; c < n_chains; ++c) {
    const auto n_draws = get<std::uint64_t>(in);
    store.accept_rate.push_back(get<double>(in));
    store.step_size.push_back(get<double>(in));
    std::vector<double> flat(n_draws * n_params);
    in.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(flat.size() * sizeof(double)));
    if (!in) throw ValidationError(path + ": truncated");
    store.chains.push_back(std::move(flat));
  }
  return store;
}

}  // namespace thinar
