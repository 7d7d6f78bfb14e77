#include "gw/data/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "gw/core/error.hpp"
#include "gw/fd/solver.hpp"

namespace gw::data {
namespace {

static_assert(std::endian::native == std::endian::little,
              "dataset I/O assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("manifest: bad number for " + key + ": '" + s + "'");
  }
}

std::pair<std::string, std::string> split_pair(const std::string& s, const std::string& sep,
                                               const std::string& key) {
  const auto at = s.find(sep);
  if (at == std::string::npos) throw FormatError("manifest: malformed " + key + ": '" + s + "'");
  return {s.substr(0, at), s.substr(at + sep.size())};
}

}  // namespace

void DatasetConfig::validate() const {
  grid.validate();
  if (n_samples == 0) throw ConfigError("n_samples must be > 0");
  if (well_count_min < 0 || well_count_max < well_count_min) {
    throw ConfigError("empty well count range");
  }
  const auto interior = static_cast<std::size_t>(grid.height - 2) * (grid.width - 2);
  if (static_cast<std::size_t>(well_count_max) > interior) {
    throw ConfigError("more wells than interior cells");
  }
  if (!(boundary_head > 0.0 && boundary_head <= 1.0)) {
    throw ConfigError("boundary head outside (0, 1]");
  }
  if (!(well_head_min > 0.0 && well_head_min < well_head_max && well_head_max <= boundary_head)) {
    throw ConfigError("well head range must be a non-empty subset of (0, boundary_head]");
  }
  grf::GrfConfig{grid, correlation_length, class_values, 0}.validate();
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

ScenarioSpec sample_scenario(std::mt19937_64& rng, const DatasetConfig& config) {
  const GridSpec& g = config.grid;
  ScenarioSpec s;
  s.grid = g;
  s.boundary_head = config.boundary_head;
  const int n_wells =
      std::uniform_int_distribution<int>(config.well_count_min, config.well_count_max)(rng);
  const int interior_w = g.width - 2;
  const int interior = (g.height - 2) * interior_w;
  // Partial Fisher-Yates over the interior cells via a sparse swap map.
  std::map<int, int> swapped;
  auto slot = [&](int i) {
    const auto it = swapped.find(i);
    return it == swapped.end() ? i : it->second;
  };
  std::uniform_real_distribution<double> head_dist(config.well_head_min, config.well_head_max);
  for (int w = 0; w < n_wells; ++w) {
    const int j = std::uniform_int_distribution<int>(w, interior - 1)(rng);
    const int pick = slot(j);
    swapped[j] = slot(w);
    swapped[w] = pick;
    double head = head_dist(rng);
    // uniform_real_distribution may round up to the open end.
    if (head >= config.well_head_max) head = std::nextafter(config.well_head_max, 0.0);
    s.wells.push_back({1 + pick / interior_w, 1 + pick % interior_w, head});
  }
  return s;
}

Sample encode_sample(const ScenarioSpec& scenario, const ConductivityField& k,
                     const HeadField& head) {
  const GridSpec& g = scenario.grid;
  if (!(k.grid == g) || !(head.grid == g)) throw ShapeError("encode_sample: grid mismatch");
  const CellMask mask = build_fixed_mask(scenario, static_cast<int>(scenario.wells.size()));
  const auto fixed = scenario.fixed_heads();
  const std::size_t n = g.cells();
  Sample s{g, std::vector<float>(3 * n), std::vector<float>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    // Solver roundoff can leave a head a few ulps outside the fixed range.
    constexpr double kSlack = 1e-9;
    if (!(head.values[i] >= -kSlack && head.values[i] <= 1.0 + kSlack)) {
      throw ValidationError("encoding error: head " + fmt_double(head.values[i]) +
                            " outside [0,1] at cell " + std::to_string(i));
    }
    s.input[i] = mask.flags[i] ? static_cast<float>(fixed[i]) : 0.0f;
    s.input[n + i] = mask.flags[i] ? 1.0f : 0.0f;
    s.input[2 * n + i] = static_cast<float>(k.values[i]);
    s.target[i] = static_cast<float>(std::clamp(head.values[i], 0.0, 1.0));
  }
  return s;
}

DecodedInput decode_sample(const Sample& sample) {
  const GridSpec& g = sample.grid;
  const std::size_t n = g.cells();
  DecodedInput d{CellMask{g, std::vector<std::uint8_t>(n)}, std::vector<double>(n),
                 ConductivityField{g, std::vector<double>(n)}};
  auto head = sample.channel(0);
  auto mask = sample.channel(1);
  auto cond = sample.channel(2);
  for (std::size_t i = 0; i < n; ++i) {
    d.mask.flags[i] = mask[i] != 0.0f ? 1 : 0;
    d.fixed_heads[i] = head[i];
    d.conductivity.values[i] = cond[i];
  }
  return d;
}

Sample generate_sample(const DatasetConfig& config, std::size_t index) {
  std::mt19937_64 rng(derive_seed(config.seed, index));
  const ScenarioSpec scenario = sample_scenario(rng, config);
  const grf::GrfConfig grf_config{config.grid, config.correlation_length, config.class_values,
                                  rng()};
  const ConductivityField k = grf::sample_conductivity(grf_config);
  try {
    const HeadField head = fd::solve_steady_state(k, scenario, 1e-10, nullptr,
                                                  config.well_count_max);
    return encode_sample(scenario, k, head);
  } catch (const ConvergenceError& e) {
    throw ConvergenceError("sample " + std::to_string(index) + ": " + e.what(), e.iterations(),
                           e.residual());
  }
}

Dataset generate_dataset(const DatasetConfig& config, unsigned workers) {
  config.validate();
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, config.n_samples));

  Dataset ds{config, std::vector<Sample>(config.n_samples)};
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::size_t err_index = config.n_samples;
  std::exception_ptr err;

  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < config.n_samples;) {
      try {
        ds.samples[i] = generate_sample(config, i);
      } catch (...) {
        std::lock_guard lock(err_mutex);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (err) std::rethrow_exception(err);
  return ds;
}

std::filesystem::path manifest_path(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  return p.replace_extension(".manifest");
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  const GridSpec& g = ds.config.grid;
  const std::size_t n = g.cells();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  os.write(kDatasetMagic, 4);
  put_u32(os, kDatasetVersion);
  put_u32(os, static_cast<std::uint32_t>(g.height));
  put_u32(os, static_cast<std::uint32_t>(g.width));
  put_u32(os, static_cast<std::uint32_t>(ds.samples.size()));
  put_u32(os, Sample::kInputChannels);
  put_u32(os, Sample::kOutputChannels);
  for (std::size_t k = 0; k < ds.samples.size(); ++k) {
    const Sample& s = ds.samples[k];
    if (!(s.grid == g) || s.input.size() != 3 * n || s.target.size() != n) {
      throw FormatError("sample " + std::to_string(k) + " does not match dataset grid");
    }
    os.write(reinterpret_cast<const char*>(s.input.data()),
             static_cast<std::streamsize>(s.input.size() * sizeof(float)));
    os.write(reinterpret_cast<const char*>(s.target.data()),
             static_cast<std::streamsize>(s.target.size() * sizeof(float)));
  }
  if (!os) throw FormatError("write failed for '" + path.string() + "'");
  DatasetConfig recorded = ds.config;
  recorded.n_samples = ds.samples.size();
  write_manifest(recorded, manifest_path(path));
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path.string() + "'");
  char header[kDatasetHeaderBytes];
  is.read(header, kDatasetHeaderBytes);
  if (is.gcount() != static_cast<std::streamsize>(kDatasetHeaderBytes)) {
    throw FormatError("truncated header at offset " + std::to_string(is.gcount()));
  }
  if (std::memcmp(header, kDatasetMagic, 4) != 0) throw FormatError("bad magic at offset 0");
  if (get_u32(header + 4) != kDatasetVersion) {
    throw FormatError("version mismatch at offset 4: " + std::to_string(get_u32(header + 4)));
  }
  const auto h = get_u32(header + 8);
  const auto w = get_u32(header + 12);
  const auto count = get_u32(header + 16);
  if (get_u32(header + 20) != Sample::kInputChannels ||
      get_u32(header + 24) != Sample::kOutputChannels) {
    throw FormatError("unexpected channel counts at offset 20");
  }
  if (h == 0 || w == 0 || h > 1u << 14 || w > 1u << 14) {
    throw FormatError("implausible grid at offset 8");
  }

  Dataset ds;
  const auto mp = manifest_path(path);
  if (std::filesystem::exists(mp)) {
    std::ifstream ms(mp);
    std::stringstream text;
    text << ms.rdbuf();
    ds.config = parse_manifest(text.str());
  }
  ds.config.grid = GridSpec{static_cast<int>(h), static_cast<int>(w)};
  ds.config.n_samples = count;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  ds.samples.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    Sample s{ds.config.grid, std::vector<float>(3 * n), std::vector<float>(n)};
    is.read(reinterpret_cast<char*>(s.input.data()),
            static_cast<std::streamsize>(3 * n * sizeof(float)));
    if (is) {
      is.read(reinterpret_cast<char*>(s.target.data()),
              static_cast<std::streamsize>(n * sizeof(float)));
    }
    if (!is) {
      const std::size_t offset = kDatasetHeaderBytes + k * 4 * n * sizeof(float);
      throw FormatError("truncated at sample " + std::to_string(k) + " (offset " +
                        std::to_string(offset) + ")");
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::string manifest_text(const DatasetConfig& c, const std::vector<std::string>& extra_lines) {
  std::ostringstream os;
  os << "seed=" << c.seed << "\n";
  os << "grid=" << c.grid.height << "x" << c.grid.width << "\n";
  os << "n_samples=" << c.n_samples << "\n";
  os << "well_count_range=" << c.well_count_min << ".." << c.well_count_max << "\n";
  os << "well_head_range=" << fmt_double(c.well_head_min) << ".." << fmt_double(c.well_head_max)
     << "\n";
  os << "boundary_head=" << fmt_double(c.boundary_head) << "\n";
  os << "grf.correlation_length=" << fmt_double(c.correlation_length) << "\n";
  os << "grf.class_values=";
  for (std::size_t i = 0; i < c.class_values.size(); ++i) {
    os << (i ? "," : "") << fmt_double(c.class_values[i]);
  }
  os << "\n";
  os << "generator_version=" << kGeneratorVersion << "\n";
  for (const auto& line : extra_lines) os << line << "\n";
  return os.str();
}

void write_manifest(const DatasetConfig& config, const std::filesystem::path& path,
                    const std::vector<std::string>& extra_lines) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  os << manifest_text(config, extra_lines);
}

DatasetConfig parse_manifest(const std::string& text) {
  DatasetConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "seed") {
      c.seed = std::stoull(val);
    } else if (key == "grid") {
      const auto [a, b] = split_pair(val, "x", key);
      c.grid = GridSpec{std::stoi(a), std::stoi(b)};
    } else if (key == "n_samples") {
      c.n_samples = std::stoull(val);
    } else if (key == "well_count_range") {
      const auto [a, b] = split_pair(val, "..", key);
      c.well_count_min = std::stoi(a);
      c.well_count_max = std::stoi(b);
    } else if (key == "well_head_range") {
      const auto [a, b] = split_pair(val, "..", key);
      c.well_head_min = parse_double(a, key);
      c.well_head_max = parse_double(b, key);
    } else if (key == "boundary_head") {
      c.boundary_head = parse_double(val, key);
    } else if (key == "grf.correlation_length") {
      c.correlation_length = parse_double(val, key);
    } else if (key == "grf.class_values") {
      c.class_values.clear();
      std::istringstream vs(val);
      std::string item;
      while (std::getline(vs, item, ',')) c.class_values.push_back(parse_double(item, key));
    }
  }
  return c;
}

}  // namespace gw::data
