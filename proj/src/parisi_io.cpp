#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cspamp/parisi.h"

namespace cspamp {

static_assert(std::endian::native == std::endian::little, "table I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'S', 'P', 'A', 'M', 'P', 'T', '1'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_array(const std::vector<double>& v) {
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  explicit Reader(std::ifstream& in) : in_(in) {}
  template <typename T>
  T get() {
    T v{};
    if (!in_.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("parisi table truncated");
    return v;
  }
  std::vector<double> get_array(std::size_t n) {
    std::vector<double> v(n);
    if (!in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
      throw std::runtime_error("parisi table truncated");
    }
    return v;
  }

 private:
  std::ifstream& in_;
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

void write_table(const std::filesystem::path& path, const ParisiSolution& sol) {
  const PdeGrid& g = sol.grid;
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    Writer w(out);
    out.write(kMagic, sizeof(kMagic));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(sol.xi.degree()));
    for (double c : sol.xi.weights()) w.put<double>(c);
    w.put<double>(sol.eta);
    w.put<std::uint64_t>(g.nt);
    w.put<std::uint64_t>(g.nx);
    w.put<double>(g.dt);
    w.put<double>(g.dx);
    w.put<double>(g.x_max);
    w.put<std::uint64_t>(sol.mu.pieces());
    w.put_array(sol.mu.breakpoints());
    w.put_array(sol.mu.values());
    w.put<double>(sol.functional_value);
    w.put<std::uint8_t>(sol.converged ? 1 : 0);
    w.put_array(g.phi_x);
    w.put_array(g.phi_xx);
    if (!out) throw std::runtime_error("error writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

ParisiSolution read_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a parisi table: " + path.string());
  }
  Reader r(in);
  ParisiSolution sol;
  const auto degree = r.get<std::uint32_t>();
  if (degree > static_cast<std::uint32_t>(kMaxArity)) throw std::runtime_error("parisi table: bad degree");
  sol.xi = MixturePolynomial(r.get_array(degree));
  sol.eta = r.get<double>();
  PdeGrid& g = sol.grid;
  g.nt = r.get<std::uint64_t>();
  g.nx = r.get<std::uint64_t>();
  g.dt = r.get<double>();
  g.dx = r.get<double>();
  g.x_max = r.get<double>();
  if (g.nt == 0 || g.nx < 3 || g.nt > (1u << 24) || g.nx > (1u << 24)) throw std::runtime_error("parisi table: bad grid");
  const auto pieces = r.get<std::uint64_t>();
  if (pieces == 0 || pieces > (1u << 20)) throw std::runtime_error("parisi table: bad piece count");
  auto breaks = r.get_array(pieces);
  auto values = r.get_array(pieces);
  sol.mu = StepFunction(std::move(breaks), std::move(values));
  sol.functional_value = r.get<double>();
  sol.converged = r.get<std::uint8_t>() != 0;
  g.phi_x = r.get_array((g.nt + 1) * g.nx);
  g.phi_xx = r.get_array((g.nt + 1) * g.nx);
  return sol;
}

std::string CacheKey::digest() const {
  std::ostringstream s;
  s << std::setprecision(17) << "xi";
  for (double w : xi.weights()) s << ':' << w;
  s << "|k:" << options.pieces << "|eta:" << options.eta << "|dt:" << options.grid.dt << "|dx:" << options.grid.dx
    << "|xmax:" << options.grid.x_max << "|mumax:" << options.mu_max << "|it:" << options.max_iterations
    << "|tol:" << options.tolerance << "|grad:" << options.use_gradient;
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a(s.str());
  return hex.str();
}

ParisiSolution cached_solution(const std::filesystem::path& dir, const CacheKey& key, bool* from_cache) {
  const std::string d = key.digest();
  const auto table = dir / (d + ".tbl");
  const auto meta = dir / (d + ".json");
  if (std::filesystem::exists(table) && std::filesystem::exists(meta)) {
    auto sol = read_table(table);
    if (sol.xi == key.xi) {
      if (from_cache) *from_cache = true;
      return sol;
    }
  }
  if (from_cache) *from_cache = false;
  const auto res = minimize_alg(key.xi, key.options);
  GridConfig grid = key.options.grid;
  auto sol = make_solution(key.xi, res.mu, grid, key.options.eta);
  sol.converged = res.converged;
  std::filesystem::create_directories(dir);
  write_table(table, sol);

  nlohmann::json j;
  j["xi"] = std::vector<double>(key.xi.weights().begin(), key.xi.weights().end());
  j["pieces"] = key.options.pieces;
  j["eta"] = key.options.eta;
  j["mu_breakpoints"] = sol.mu.breakpoints();
  j["mu_values"] = sol.mu.values();
  j["search_value"] = res.value;
  j["functional_value"] = sol.functional_value;
  j["converged"] = res.converged;
  j["iterations"] = res.iterations;
  j["evaluations"] = res.evaluations;
  j["grid"] = {{"dt", sol.grid.dt}, {"dx", sol.grid.dx}, {"x_max", sol.grid.x_max}};
  const auto tmp = meta.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, meta);
  return sol;
}

}  // namespace cspamp
