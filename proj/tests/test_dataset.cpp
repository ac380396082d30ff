// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "rgnet/dataset.hpp"
#include "rgnet/error.hpp"
#include "test_util.hpp"

using namespace rgnet;
using namespace rgnet::testing;
namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string expect_data_error(const std::string& text) {
  try {
    parse_annotations(text, LoadOptions{3, 32}, {}, "ann.json");
  } catch (const DataError& e) {
    return e.what();
  }
  ADD_FAILURE() << "no DataError for " << text;
  return {};
}

const char* kGood = R"([
{"id": "a", "image": "synthetic:5", "persons": [[0.1, 0.1, 0.3, 0.4], [0.5, 0.5, 0.8, 0.9]], "relations": [[1, 0, 2]]},
{"id": "b", "image": "synthetic:6", "persons": [[-0.2, 0.0, 0.3, 1.4], [0.5, 0.5, 0.8, 0.9], [0.0, 0.6, 0.2, 0.9]],
 "relations": [[0, 1, 0], [2, 1, 1]]}
]
)";

}  // namespace

TEST(Synthetic, SameSeedSameDataset) {
  SyntheticConfig cfg;
  cfg.seed = 42;
  const auto a = generate_synthetic(cfg), b = generate_synthetic(cfg);
  EXPECT_EQ(to_annotation_json(a), to_annotation_json(b));
  ASSERT_EQ(a.images.size(), 16u);
  for (std::size_t k = 0; k < a.images.size(); ++k) EXPECT_TRUE(bit_equal(a.images[k].image, b.images[k].image));
  cfg.seed = 43;
  EXPECT_NE(to_annotation_json(generate_synthetic(cfg)), to_annotation_json(a));
}

TEST(Synthetic, FrozenAnnotationHash) {
  SyntheticConfig cfg;
  cfg.seed = 7;
  cfg.images = 20;
  EXPECT_EQ(fnv1a(to_annotation_json(generate_synthetic(cfg))), 7229689912581281018ull);
}

TEST(Synthetic, LabelsFollowColourRule) {
  SyntheticConfig cfg;
  cfg.seed = 3;
  cfg.images = 50;
  cfg.max_persons = 6;
  const auto ds = generate_synthetic(cfg);
  for (const auto& im : ds.images) {
    const std::uint64_t s = std::stoull(im.source.substr(10));
    EXPECT_GE(im.persons.size(), 2u);
    EXPECT_LE(im.persons.size(), 6u);
    EXPECT_FALSE(im.relations.empty());
    for (const auto& r : im.relations) {
      EXPECT_LT(r.i, r.j);
      const auto& a = im.persons[r.i];
      const auto& b = im.persons[r.j];
      const double dx = (a.x1 + a.x2 - b.x1 - b.x2) / 2, dy = (a.y1 + a.y2 - b.y1 - b.y2) / 2;
      const std::size_t near = std::sqrt(dx * dx + dy * dy) < kNearDistance ? 1 : 0;
      // The rule is symmetric in (i, j), so one stored direction covers both.
      EXPECT_EQ(r.cls, (synthetic_colour(s, r.i, 6) + synthetic_colour(s, r.j, 6) + near) % 6);
    }
    EXPECT_TRUE(bit_equal(im.image, render_synthetic(s, im.persons, 32, 6)));
  }
}

TEST(Synthetic, ProfileControlsMarginals) {
  SyntheticConfig cfg;
  cfg.classes = 3;
  cfg.profile = {0.5, 0.3, 0.2};
  cfg.images = 3000;
  cfg.max_persons = 5;
  cfg.seed = 11;
  const auto stats = compute_stats(generate_synthetic(cfg));
  ASSERT_GE(stats.pairs, 10000u);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(static_cast<double>(stats.class_counts[c]) / stats.pairs, cfg.profile[c], 0.02) << c;
  }
}

TEST(Synthetic, RejectsInfeasibleConfigs) {
  SyntheticConfig cfg;
  cfg.profile = {0.5, 0.5};
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg.classes = 2;
  cfg.profile = {0.5, 0.6};
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg.profile = {1.0, 0.0};
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg.profile.clear();
  cfg.min_persons = 1;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg.min_persons = 3;
  cfg.max_persons = 7;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
}

TEST(Annotations, RoundTripThroughFile) {
  SyntheticConfig cfg;
  cfg.seed = 9;
  const auto ds = generate_synthetic(cfg);
  const auto path = fs::temp_directory_path() / "rgnet_ann_test.json";
  save_annotations(ds, path);
  const auto back = load_annotations(path, LoadOptions{6, 32});
  EXPECT_EQ(to_annotation_json(back), to_annotation_json(ds));
  for (std::size_t k = 0; k < ds.images.size(); ++k) EXPECT_TRUE(bit_equal(back.images[k].image, ds.images[k].image));
  fs::remove(path);
}

TEST(Annotations, ParsesClampsAndCanonicalizes) {
  const auto ds = parse_annotations(kGood, LoadOptions{3, 32});
  ASSERT_EQ(ds.images.size(), 2u);
  EXPECT_EQ(ds.images[0].relations[0].i, 0u);
  EXPECT_EQ(ds.images[0].relations[0].j, 1u);
  EXPECT_EQ(ds.images[0].relations[0].cls, 2u);
  EXPECT_EQ(ds.images[1].persons[0], (PersonBox{0.0, 0.0, 0.3, 1.0}));
  EXPECT_EQ(ds.images[1].relations[1].i, 1u);
  EXPECT_EQ(ds.images[1].image.shape(), (Shape{3, 32, 32}));
}

TEST(Annotations, ErrorsNameLineAndImage) {
  std::string bad = kGood;
  bad.replace(bad.find("[[0, 1, 0]"), 10, "[[1, 1, 0]");
  const auto self = expect_data_error(bad);
  EXPECT_NE(self.find("ann.json:3:"), std::string::npos) << self;
  EXPECT_NE(self.find("image 'b'"), std::string::npos) << self;
  EXPECT_NE(self.find("self-pair"), std::string::npos) << self;

  std::string range = kGood;
  range.replace(range.find("[[1, 0, 2]"), 10, "[[1, 0, 3]");
  EXPECT_NE(expect_data_error(range).find("ann.json:2: image 'a': relation [1,0,3] has class out of range"),
            std::string::npos);

  std::string missing = kGood;
  missing.replace(missing.find("[[1, 0, 2]"), 10, "[[1, 5, 2]");
  EXPECT_NE(expect_data_error(missing).find("missing person"), std::string::npos);

  std::string dup = kGood;
  dup.replace(dup.find("[2, 1, 1]"), 9, "[1, 0, 1]");
  EXPECT_NE(expect_data_error(dup).find("labelled more than once"), std::string::npos);

  std::string empty_box = kGood;
  empty_box.replace(empty_box.find("[0.0, 0.6, 0.2, 0.9]"), 20, "[1.2, 0.6, 1.5, 0.9]");
  EXPECT_NE(expect_data_error(empty_box).find("empty after clamping"), std::string::npos);

  std::string dup_id = kGood;
  dup_id.replace(dup_id.find("\"id\": \"b\""), 9, "\"id\": \"a\"");
  EXPECT_NE(expect_data_error(dup_id).find("duplicate id"), std::string::npos);

  EXPECT_NE(expect_data_error("[\n{\"id\": \"x\",\n").find("ann.json:"), std::string::npos);
  EXPECT_NE(expect_data_error("[{\"id\": \"x\"}]").find("missing field 'image'"), std::string::npos);
}

TEST(Annotations, PpmSourcesResolveRelativeToFile) {
  const auto dir = fs::temp_directory_path() / "rgnet_ppm_test";
  fs::create_directories(dir / "images");
  const auto img = render_synthetic(5, {PersonBox{0.1, 0.1, 0.4, 0.4}}, 32, 3);
  write_ppm(dir / "images" / "a.ppm", img);
  EXPECT_TRUE(bit_equal(read_ppm(dir / "images" / "a.ppm"), img));
  std::ofstream(dir / "ann.json")
      << R"([{"id": "a", "image": "images/a.ppm", "persons": [[0.1, 0.1, 0.4, 0.4], [0.5, 0.5, 0.9, 0.9]], "relations": [[0, 1, 1]]}])";
  const auto ds = load_annotations(dir / "ann.json", LoadOptions{3, 32});
  EXPECT_TRUE(bit_equal(ds.images[0].image, img));
  EXPECT_THROW(load_annotations(dir / "ann.json", LoadOptions{3, 64}), DataError);
  std::ofstream(dir / "bad.ppm") << "P3\n1 1\n255\n0 0 0\n";
  EXPECT_THROW(read_ppm(dir / "bad.ppm"), DataError);
  fs::remove_all(dir);
}

TEST(Stats, HandCase) {
  Dataset ds;
  ds.classes = 2;
  AnnotatedImage a;
  a.id = "a";
  a.persons.resize(3);
  a.relations = {{0, 1, 0}, {0, 2, 0}, {1, 2, 1}};
  AnnotatedImage b;
  b.id = "b";
  b.persons.resize(2);
  ds.images = {a, b};
  const auto s = compute_stats(ds);
  EXPECT_EQ(s.class_counts, (std::vector<std::size_t>{2, 1}));
  EXPECT_EQ(s.unique_histogram, (std::vector<std::size_t>{1, 0, 1}));
  EXPECT_EQ(s.persons_histogram, (std::vector<std::size_t>{0, 0, 1, 1}));
  const auto kv = format_stats_key_values(s);
  EXPECT_NE(kv.find("weight.0 = 3\n"), std::string::npos) << kv;
  EXPECT_NE(kv.find("weight.1 = 6\n"), std::string::npos) << kv;
  EXPECT_NE(format_stats_table(s).find("unique labels per image"), std::string::npos);
  EXPECT_THROW(compute_stats(Dataset{}), DataError);
}

TEST(Stats, MatchesCountingOracle) {
  SyntheticConfig cfg;
  cfg.seed = 21;
  cfg.images = 200;
  cfg.max_persons = 5;
  const auto ds = generate_synthetic(cfg);
  const auto s = compute_stats(ds);
  std::map<std::size_t, std::size_t> counts;
  std::size_t pairs = 0;
  for (const auto& im : ds.images)
    for (const auto& r : im.relations) {
      ++counts[r.cls];
      ++pairs;
    }
  EXPECT_EQ(s.pairs, pairs);
  EXPECT_EQ(s.images, 200u);
  for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(s.class_counts[c], counts[c]);
  std::size_t hist_total = 0;
  for (std::size_t n : s.unique_histogram) hist_total += n;
  EXPECT_EQ(hist_total, 200u);
}

TEST(Split, TailGoesToTest) {
  SyntheticConfig cfg;
  const auto ds = generate_synthetic(cfg);
  const auto [train, test] = split_tail(ds, 4);
  EXPECT_EQ(train.images.size(), 12u);
  EXPECT_EQ(test.images.front().id, "img00012");
  EXPECT_THROW(split_tail(ds, 16), ConfigError);
}
