#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "prdf/vec.hpp"

namespace prdf {

struct Example {
  Vec x;
  Label y = 0;
};

enum class DatasetKind { gauss2, rings, bars };

std::string dataset_kind_name(DatasetKind k);
DatasetKind parse_dataset_kind(const std::string& s);

/// Labeled points in the unit cube with disjoint train/test splits.
struct Dataset {
  DatasetKind kind = DatasetKind::gauss2;
  std::uint64_t seed = 0;
  std::size_t dim = 0;
  std::size_t num_classes = 2;
  std::vector<Example> examples;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  std::vector<Example> subset(const std::vector<std::size_t>& idx) const;
  void validate() const;
};

/// gauss2: blobs with per-coordinate means 0.35 / 0.65, std `spread` (0.08 by default), clipped.
/// rings: concentric annuli in the unit square (dim forced to 2).
/// bars: 4x4 horizontal vs vertical bars plus uniform noise of amplitude 0.1 (dim forced to 16).
/// Every `test_every`-th example of each class goes to the test split.
Dataset gen_dataset(DatasetKind kind, std::size_t n_per_class, std::size_t dim, std::uint64_t seed,
                    double spread = 0.08, std::size_t test_every = 4);

/// Text format `PRDS v1`: header, `kind seed dim num_classes count`, then one
/// line per example `split label x_1 .. x_dim` (split is `train` or `test`).
void save_dataset(const Dataset& d, std::ostream& out);
Dataset load_dataset(std::istream& in);
void save_dataset_file(const Dataset& d, const std::string& path);
Dataset load_dataset_file(const std::string& path);

/// Originals paired with robustified points: `PRDS-PAIRED v1`, one line per
/// example `id label original... robustified...`.
void save_paired(std::ostream& out, const std::vector<std::size_t>& ids, const std::vector<Example>& originals,
                 const std::vector<Vec>& robustified);

struct PairedSet {
  std::vector<std::size_t> ids;
  std::vector<Example> originals;
  std::vector<Vec> robustified;
};

PairedSet load_paired(std::istream& in);
PairedSet load_paired_file(const std::string& path);

}  // namespace prdf
