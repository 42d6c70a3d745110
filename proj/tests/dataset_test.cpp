#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "vofm/dataset.hpp"
#include "vofm/digest.hpp"

using namespace vofm;
using namespace vofm::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() /
                   ("vofm_test_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++))) {}
  ~TempDir() { fs::remove_all(path); }
  static inline int counter = 0;
};

double in_disc_rms(const SurfaceGrid& g) {
  double acc = 0.0;
  long long n = 0;
  for (int r = 0; r < g.size; ++r)
    for (int c = 0; c < g.size; ++c)
      if (in_disc(r, c, g.size)) {
        acc += g.at(r, c) * g.at(r, c);
        ++n;
      }
  return std::sqrt(acc / static_cast<double>(n));
}

}  // namespace

TEST_CASE("sampled difference topographies hit the requested rms band") {
  SamplingParams sp;
  for (uint64_t i = 0; i < 20; ++i) {
    SurfaceGrid g = sample_delta_topography(11, i, 64, sp);
    double rms = in_disc_rms(g);
    CHECK(rms >= sp.scale_min_nm * 0.999);
    CHECK(rms <= sp.scale_max_nm * 1.001);
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c)
        if (!in_disc(r, c, 64)) CHECK(g.at(r, c) == 0.0);
  }
  // per-index streams are independent of each other and reproducible
  SurfaceGrid a = sample_delta_topography(11, 3, 64, sp);
  SurfaceGrid b = sample_delta_topography(11, 3, 64, sp);
  CHECK(a.values == b.values);
  SurfaceGrid c = sample_delta_topography(11, 4, 64, sp);
  CHECK(a.values != c.values);
}

TEST_CASE("dataset generation is deterministic and worker-independent") {
  optics::ForwardConfig cfg = optics::default_config("freeform", 32);
  Dataset d1 = generate_dataset("freeform", 6, 500, cfg, {}, 1);
  Dataset d2 = generate_dataset("freeform", 6, 500, cfg, {}, 3);
  CHECK(d1.meta.content_digest == d2.meta.content_digest);
  CHECK(d1.inputs == d2.inputs);
  CHECK(d1.targets == d2.targets);
  Dataset d3 = generate_dataset("freeform", 6, 501, cfg, {}, 1);
  CHECK(d1.meta.content_digest != d3.meta.content_digest);
}

TEST_CASE("split is a seeded disjoint exhaustive partition") {
  optics::ForwardConfig cfg = optics::default_config("freeform", 16);
  Dataset ds = generate_dataset("freeform", 50, 9, cfg, {}, 2);
  auto [train, test] = split_dataset(ds, 0.10, 42);
  CHECK(train.meta.sample_count == 45);
  CHECK(test.meta.sample_count == 5);

  auto sample_digest = [](const Dataset& d, int i) {
    Fnv1a h;
    h.update(d.target(i), d.target_sample_stride() * sizeof(float));
    h.update(d.input(i), d.input_sample_stride() * sizeof(float));
    return h.hex();
  };
  std::multiset<std::string> original, pieces;
  for (int i = 0; i < 50; ++i) original.insert(sample_digest(ds, i));
  for (int i = 0; i < 45; ++i) pieces.insert(sample_digest(train, i));
  for (int i = 0; i < 5; ++i) pieces.insert(sample_digest(test, i));
  CHECK(original == pieces);

  // same seed, same split; different seed, different membership
  auto [train2, test2] = split_dataset(ds, 0.10, 42);
  CHECK(test2.content_digest() == test.content_digest());
  auto [train3, test3] = split_dataset(ds, 0.10, 43);
  CHECK(test3.content_digest() != test.content_digest());
}

TEST_CASE("normalization statistics summarize the training set") {
  optics::ForwardConfig cfg = optics::default_config("asphere", 32);
  Dataset ds = generate_dataset("asphere", 8, 77, cfg, {}, 2);
  NormStats ns = compute_norm_stats(ds);
  REQUIRE(ns.input_mean.size() == 4);
  REQUIRE(ns.input_std.size() == 4);
  for (double s : ns.input_std) CHECK(s > 0.0);
  CHECK(ns.target_std > 0.0);
  // an all-zero channel cannot be normalized
  Dataset degenerate = ds;
  size_t plane = static_cast<size_t>(32) * 32;
  for (int i = 0; i < 8; ++i)
    std::fill_n(degenerate.inputs.begin() + i * degenerate.input_sample_stride(),
                plane, 0.0f);
  CHECK_THROWS_AS(compute_norm_stats(degenerate), Error);
}

TEST_CASE("datasets round-trip through the directory format") {
  TempDir tmp;
  optics::ForwardConfig cfg = optics::default_config("freeform", 32);
  Dataset ds = generate_dataset("freeform", 4, 3, cfg, {}, 1);
  save_dataset(ds, tmp.path.string());
  Dataset back = load_dataset(tmp.path.string());
  CHECK(back.inputs == ds.inputs);
  CHECK(back.targets == ds.targets);
  CHECK(back.meta.content_digest == ds.meta.content_digest);
  CHECK(back.forward_config().digest() == cfg.digest());
}

TEST_CASE("loader rejects corrupted directories") {
  TempDir tmp;
  optics::ForwardConfig cfg = optics::default_config("freeform", 16);
  Dataset ds = generate_dataset("freeform", 4, 3, cfg, {}, 1);
  save_dataset(ds, tmp.path.string());

  SUBCASE("missing file") {
    fs::remove(tmp.path / "targets.bin");
    CHECK_THROWS_AS(load_dataset(tmp.path.string()), Error);
  }
  SUBCASE("truncated payload") {
    fs::resize_file(tmp.path / "inputs.bin",
                    fs::file_size(tmp.path / "inputs.bin") - 8);
    CHECK_THROWS_AS(load_dataset(tmp.path.string()), Error);
  }
  SUBCASE("flipped payload byte changes the digest") {
    std::fstream f(tmp.path / "targets.bin",
                   std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(10);
    f.put('\x7f');
    f.close();
    CHECK_THROWS_AS(load_dataset(tmp.path.string()), Error);
  }
  SUBCASE("unknown metadata version") {
    auto meta_path = tmp.path / "meta";
    std::ifstream in(meta_path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    in.close();
    // the embedded forward config carries its own version field; the
    // dataset's own version is the later, top-level occurrence
    auto pos = text.rfind("\"format_version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 19, "\"format_version\": 9");
    std::ofstream out(meta_path, std::ios::trunc);
    out << text;
    out.close();
    CHECK_THROWS_AS(load_dataset(tmp.path.string()), Error);
  }
}
