#include "prdf/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "prdf/rng.hpp"

namespace prdf {

std::string dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::gauss2:
      return "gauss2";
    case DatasetKind::rings:
      return "rings";
    case DatasetKind::bars:
      return "bars";
  }
  return "gauss2";
}

DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "gauss2") return DatasetKind::gauss2;
  if (s == "rings") return DatasetKind::rings;
  if (s == "bars") return DatasetKind::bars;
  throw std::invalid_argument("unknown dataset kind '" + s + "'");
}

std::vector<Example> Dataset::subset(const std::vector<std::size_t>& idx) const {
  std::vector<Example> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(examples.at(i));
  return out;
}

void Dataset::validate() const {
  std::vector<char> seen(examples.size(), 0);
  for (const auto* split : {&train, &test})
    for (std::size_t i : *split) {
      if (i >= examples.size()) throw std::runtime_error("Dataset: split index out of range");
      if (seen[i]++) throw std::runtime_error("Dataset: splits overlap");
    }
  for (const auto& e : examples) {
    if (e.x.size() != dim) throw std::runtime_error("Dataset: example with wrong dimension");
    if (e.y >= num_classes) throw std::runtime_error("Dataset: label out of range");
    if (!in_unit_cube(e.x)) throw std::runtime_error("Dataset: example outside the unit cube");
  }
}

namespace {

Vec gauss2_point(Label y, std::size_t dim, double spread, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double mean = y == 0 ? 0.35 : 0.65;
  Vec x(dim);
  for (double& v : x) v = std::clamp(mean + spread * n(rng), 0.0, 1.0);
  return x;
}

Vec rings_point(Label y, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = y == 0 ? 0.1 + 0.1 * u(rng) : 0.3 + 0.1 * u(rng);
  const double a = 2.0 * std::numbers::pi * u(rng);
  return {std::clamp(0.5 + r * std::cos(a), 0.0, 1.0), std::clamp(0.5 + r * std::sin(a), 0.0, 1.0)};
}

Vec bars_point(Label y, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, 3);
  const int line = pick(rng);
  Vec x(16);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      const bool on = y == 0 ? r == line : c == line;
      const double base = on ? 0.9 : 0.1;
      x[r * 4 + c] = std::clamp(base + 0.1 * (2.0 * u(rng) - 1.0), 0.0, 1.0);
    }
  return x;
}

}  // namespace

Dataset gen_dataset(DatasetKind kind, std::size_t n_per_class, std::size_t dim, std::uint64_t seed, double spread,
                    std::size_t test_every) {
  Dataset d;
  d.kind = kind;
  d.seed = seed;
  d.num_classes = 2;
  d.dim = kind == DatasetKind::rings ? 2 : kind == DatasetKind::bars ? 16 : dim;
  if (d.dim == 0) throw std::invalid_argument("gen_dataset: dim must be >= 1");
  if (test_every == 0) throw std::invalid_argument("gen_dataset: test_every must be >= 1");
  Rng rng = derive_stream(seed, "dataset");
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (Label y = 0; y < 2; ++y) {
      Example e;
      e.y = y;
      switch (kind) {
        case DatasetKind::gauss2:
          e.x = gauss2_point(y, d.dim, spread, rng);
          break;
        case DatasetKind::rings:
          e.x = rings_point(y, rng);
          break;
        case DatasetKind::bars:
          e.x = bars_point(y, rng);
          break;
      }
      const std::size_t idx = d.examples.size();
      d.examples.push_back(std::move(e));
      (i % test_every == test_every - 1 ? d.test : d.train).push_back(idx);
    }
  }
  return d;
}

namespace {

void write_values(std::ostream& out, const Vec& v) {
  char buf[32];
  for (double x : v) {
    std::snprintf(buf, sizeof buf, " %.17g", x);
    out << buf;
  }
}

}  // namespace

void save_dataset(const Dataset& d, std::ostream& out) {
  out << "PRDS v1\n";
  out << dataset_kind_name(d.kind) << ' ' << d.seed << ' ' << d.dim << ' ' << d.num_classes << ' '
      << d.examples.size() << '\n';
  std::vector<const char*> split(d.examples.size(), "none");
  for (std::size_t i : d.train) split[i] = "train";
  for (std::size_t i : d.test) split[i] = "test";
  for (std::size_t i = 0; i < d.examples.size(); ++i) {
    out << split[i] << ' ' << d.examples[i].y;
    write_values(out, d.examples[i].x);
    out << '\n';
  }
}

Dataset load_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "PRDS v1") throw std::runtime_error("load_dataset: expected 'PRDS v1'");
  Dataset d;
  std::size_t count = 0;
  {
    std::getline(in, line);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind >> d.seed >> d.dim >> d.num_classes >> count))
      throw std::runtime_error("load_dataset: bad header");
    d.kind = parse_dataset_kind(kind);
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("load_dataset: truncated file");
    std::istringstream ls(line);
    std::string split;
    Example e;
    if (!(ls >> split >> e.y)) throw std::runtime_error("load_dataset: bad example line " + std::to_string(i + 3));
    e.x.resize(d.dim);
    for (double& v : e.x)
      if (!(ls >> v)) throw std::runtime_error("load_dataset: short example line " + std::to_string(i + 3));
    if (split == "train")
      d.train.push_back(i);
    else if (split == "test")
      d.test.push_back(i);
    else if (split != "none")
      throw std::runtime_error("load_dataset: unknown split '" + split + "'");
    d.examples.push_back(std::move(e));
  }
  d.validate();
  return d;
}

void save_dataset_file(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  save_dataset(d, out);
}

Dataset load_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return load_dataset(in);
}

void save_paired(std::ostream& out, const std::vector<std::size_t>& ids, const std::vector<Example>& originals,
                 const std::vector<Vec>& robustified) {
  out << "PRDS-PAIRED v1\n";
  const std::size_t dim = originals.empty() ? 0 : originals.front().x.size();
  out << dim << ' ' << originals.size() << '\n';
  for (std::size_t i = 0; i < originals.size(); ++i) {
    out << ids[i] << ' ' << originals[i].y;
    write_values(out, originals[i].x);
    write_values(out, robustified[i]);
    out << '\n';
  }
}

PairedSet load_paired(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "PRDS-PAIRED v1")
    throw std::runtime_error("load_paired: expected 'PRDS-PAIRED v1'");
  std::size_t dim = 0, count = 0;
  if (!(in >> dim >> count)) throw std::runtime_error("load_paired: bad header");
  PairedSet p;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t id = 0;
    Example e;
    Vec r(dim);
    e.x.resize(dim);
    if (!(in >> id >> e.y)) throw std::runtime_error("load_paired: truncated file");
    for (double& v : e.x)
      if (!(in >> v)) throw std::runtime_error("load_paired: short line");
    for (double& v : r)
      if (!(in >> v)) throw std::runtime_error("load_paired: short line");
    p.ids.push_back(id);
    p.originals.push_back(std::move(e));
    p.robustified.push_back(std::move(r));
  }
  return p;
}

PairedSet load_paired_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_paired(in);
}

}  // namespace prdf
