#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fairgo/data.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

using namespace fairgo;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("fairgo_data_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string write(const std::string& name, const std::string& content) {
    auto p = (path / name).string();
    std::ofstream out(p);
    out << content;
    return p;
  }
};

} // namespace

TEST_CASE("movielens parsing maps ids, genders, ages, occupations") {
  TempDir dir;
  auto users = dir.write("users.dat",
                         "10::F::1::5::55117\n"
                         "20::M::56::13::70072\n"
                         "30::M::25::0::55105\n");
  auto ratings = dir.write("ratings.dat",
                           "10::101::5::978300760\n"
                           "20::101::3::978302109\n"
                           "20::102::1::978301968\n"
                           "30::103::4::978300275\n");
  auto [store, attrs] = parse_movielens(ratings, users);

  CHECK(store.user_count == 3);
  CHECK(store.item_count == 3);
  REQUIRE(store.triples.size() == 4);
  // users indexed in file order; items in first-appearance order
  CHECK(store.triples[0].user == 0);
  CHECK(store.triples[0].item == 0);
  CHECK(store.triples[0].rating == 5.0);
  CHECK(store.triples[2].user == 1);
  CHECK(store.triples[2].item == 1);
  CHECK(store.triples[3].item == 2);

  CHECK(attrs.attribute_count == 3);
  CHECK(attrs.names == std::vector<std::string>{"gender", "age", "occupation"});
  CHECK(attrs.cardinalities == std::vector<int>{2, 7, 21});
  CHECK(attrs.values[0] == std::vector<int>{0, 0, 5});  // F, age code 1, occ 5
  CHECK(attrs.values[1] == std::vector<int>{1, 6, 13}); // M, age code 56
  CHECK(attrs.values[2] == std::vector<int>{1, 2, 0});  // M, age code 25
}

TEST_CASE("movielens error paths") {
  TempDir dir;
  auto users = dir.write("users.dat", "1::F::1::5::55117\n");

  CHECK_THROWS_WITH_AS(parse_movielens(dir.write("r.dat", ""), users),
                       doctest::Contains("MissingData"), DataError);
  CHECK_THROWS_WITH_AS(parse_movielens((dir.path / "absent.dat").string(), users),
                       doctest::Contains("MissingFile"), DataError);

  auto bad_line = dir.write("bad.dat", "1::7::4::9\n1::8\n");
  CHECK_THROWS_WITH_AS(parse_movielens(bad_line, users),
                       doctest::Contains(":2:"), DataError);

  auto dup = dir.write("dup.dat", "1::7::4::9\n1::7::3::9\n");
  CHECK_THROWS_WITH_AS(parse_movielens(dup, users),
                       doctest::Contains("duplicate"), DataError);

  auto bad_age = dir.write("users2.dat", "1::F::17::5::55117\n");
  auto ok = dir.write("ok.dat", "1::7::4::9\n");
  CHECK_THROWS_WITH_AS(parse_movielens(ok, bad_age),
                       doctest::Contains("UnknownAgeCode"), DataError);
}

TEST_CASE("lastfm parsing: gender, age bins, play normalization") {
  TempDir dir;
  auto profile = dir.write("profile.tsv",
                           "u1\tf\t20\tGermany\tFeb 1, 2007\n"
                           "u2\tm\t30\tUS\tJan 1, 2007\n"
                           "u3\t\t50\t\t\n"
                           "u4\tm\t\t\t\n");
  auto plays = dir.write("plays.tsv",
                         "u1\ta1\tArtist One\t10\n"
                         "u1\ta2\tArtist Two\t100\n"
                         "u2\ta1\tArtist One\t40\n"
                         "u3\ta3\tArtist Three\t7\n");
  auto [store, attrs] = parse_lastfm(plays, profile);

  CHECK(store.user_count == 4);
  CHECK(store.item_count == 3);
  REQUIRE(store.triples.size() == 4);
  for (const auto& t : store.triples) {
    CHECK(t.rating >= 1.0);
    CHECK(t.rating <= 5.0);
  }
  // min count -> 1.0, max count -> 5.0
  CHECK(store.triples[3].rating == doctest::Approx(1.0));
  CHECK(store.triples[1].rating == doctest::Approx(5.0));

  CHECK(attrs.values[0] == std::vector<int>{0, 0}); // f, age 20 -> bin 0
  CHECK(attrs.values[1] == std::vector<int>{1, 1}); // m, age 30 -> bin 1
  CHECK(attrs.values[2][0] == AttributeTable::kMissing);
  CHECK(attrs.values[2][1] == 2); // age 50 -> bin 2
  CHECK(attrs.values[3][1] == AttributeTable::kMissing);

  auto bad = dir.write("bad_plays.tsv", "u1\ta1\tArtist\t0\n");
  CHECK_THROWS_WITH_AS(parse_lastfm(bad, profile),
                       doctest::Contains("NonPositivePlayCount"), DataError);
}

TEST_CASE("log normalization endpoints and degenerate cases") {
  auto r = log_normalize_plays({3, 9, 100});
  CHECK(r[0] == doctest::Approx(1.0));
  CHECK(r[2] == doctest::Approx(5.0));

  auto same = log_normalize_plays({8, 8, 8});
  for (double v : same) CHECK(v == doctest::Approx(3.0));

  // count whose ln(1+c) is midway between min and max -> 3.0
  // ln(1+c) = (ln(1+1) + ln(1+99)) / 2 => c = sqrt(200) - 1
  std::int64_t mid = 13; // ln(14) = (ln 2 + ln 100)/2 within rounding
  auto midway = log_normalize_plays({1, mid, 99});
  CHECK(midway[1] == doctest::Approx(3.0).epsilon(0.02));

  CHECK_THROWS_AS(log_normalize_plays({5, 0}), DataError);
}

TEST_CASE("split ratios, determinism, and preservation") {
  RatingStore store;
  store.user_count = 5;
  store.item_count = 2;
  for (int i = 0; i < 10; ++i)
    store.triples.push_back({i % 5, i % 2, 3.0, Split::Train});

  split_ratings(store, 0.9, 0.0, 0.1, 7);
  CHECK(store.count_split(Split::Train) == 9);
  CHECK(store.count_split(Split::Validation) == 0);
  CHECK(store.count_split(Split::Test) == 1);

  RatingStore again = store;
  split_ratings(store, 0.6, 0.2, 0.2, 99);
  split_ratings(again, 0.6, 0.2, 0.2, 99);
  for (std::size_t i = 0; i < store.triples.size(); ++i)
    CHECK(store.triples[i].split == again.triples[i].split);

  CHECK_THROWS_WITH_AS(split_ratings(store, 0.5, 0.2, 0.2, 1),
                       doctest::Contains("RatioSumInvalid"), DataError);
}

TEST_CASE("adjacency: single edge, empty, symmetry, train-only") {
  RatingStore store;
  store.user_count = 1;
  store.item_count = 1;
  store.triples.push_back({0, 0, 5.0, Split::Train});
  auto adj = build_adjacency(store);
  REQUIRE(adj.node_count() == 2);
  REQUIRE(adj.neighbors[0].size() == 1);
  CHECK(adj.neighbors[0][0] == std::pair<int, double>{1, 5.0});
  CHECK(adj.neighbors[1][0] == std::pair<int, double>{0, 5.0});
  CHECK(adj.weight_sums[0] == 5.0);

  store.triples[0].split = Split::Test;
  auto empty = build_adjacency(store);
  CHECK(empty.neighbors[0].empty());
  CHECK(empty.neighbors[1].empty());

  RatingStore bigger;
  bigger.user_count = 3;
  bigger.item_count = 4;
  bigger.triples = {{0, 1, 4.0, Split::Train},
                    {1, 1, 2.0, Split::Train},
                    {2, 3, 1.0, Split::Train},
                    {0, 2, 5.0, Split::Test}};
  auto a = build_adjacency(bigger);
  for (int i = 0; i < a.node_count(); ++i)
    for (auto [j, w] : a.neighbors[i]) {
      bool found = false;
      for (auto [back, bw] : a.neighbors[j])
        if (back == i && bw == w) found = true;
      CHECK(found);
    }
  CHECK(a.neighbors[0].size() == 1); // the test triple is excluded
}

TEST_CASE("ego neighborhoods by hop") {
  // users 0,1; items 2,3 (nodes). 0-2 (w 4), 0-3 (w 2), 1-2 (w 5).
  RatingStore store;
  store.user_count = 2;
  store.item_count = 2;
  store.triples = {{0, 0, 4.0, Split::Train},
                   {0, 1, 2.0, Split::Train},
                   {1, 0, 5.0, Split::Train}};
  auto adj = build_adjacency(store);
  auto hops = ego_neighbors(adj, 0, 2);
  REQUIRE(hops.size() == 2);
  CHECK(hops[0] == std::vector<std::pair<int, double>>{{2, 4.0}, {3, 2.0}});
  // hop 2: users reachable through items 2 and 3: user 0 (4+2) and user 1 (5)
  CHECK(hops[1] == std::vector<std::pair<int, double>>{{0, 6.0}, {1, 5.0}});

  // isolated node
  RatingStore lonely;
  lonely.user_count = 2;
  lonely.item_count = 1;
  lonely.triples = {{0, 0, 3.0, Split::Train}};
  auto ladj = build_adjacency(lonely);
  auto lhops = ego_neighbors(ladj, 1, 3);
  for (const auto& hop : lhops) CHECK(hop.empty());

  CHECK_THROWS_AS(ego_neighbors(adj, 99, 1), DataError);
}

TEST_CASE("store and attribute csv roundtrips are exact") {
  TempDir dir;
  RatingStore store;
  store.user_count = 2;
  store.item_count = 3;
  store.triples = {{0, 2, 1.2345678901234567, Split::Train},
                   {1, 0, 5.0, Split::Validation},
                   {1, 1, 2.5, Split::Test}};
  auto spath = (dir.path / "store.csv").string();
  save_store_csv(store, spath);
  auto back = load_store_csv(spath);
  CHECK(back.user_count == store.user_count);
  CHECK(back.item_count == store.item_count);
  REQUIRE(back.triples.size() == store.triples.size());
  for (std::size_t i = 0; i < store.triples.size(); ++i) {
    CHECK(back.triples[i].user == store.triples[i].user);
    CHECK(back.triples[i].item == store.triples[i].item);
    CHECK(back.triples[i].rating == store.triples[i].rating); // bit-exact
    CHECK(back.triples[i].split == store.triples[i].split);
  }

  AttributeTable attrs;
  attrs.attribute_count = 2;
  attrs.names = {"gender", "age"};
  attrs.cardinalities = {2, 3};
  attrs.values = {{0, 2}, {1, AttributeTable::kMissing}};
  auto apath = (dir.path / "attrs.csv").string();
  save_attributes_csv(attrs, apath);
  auto aback = load_attributes_csv(apath);
  CHECK(aback.attribute_count == 2);
  CHECK(aback.names == attrs.names);
  CHECK(aback.cardinalities == attrs.cardinalities);
  CHECK(aback.values == attrs.values);
}
