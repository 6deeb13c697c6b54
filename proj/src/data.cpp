#include "fairgo/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace fairgo {

std::vector<const RatingTriple*> RatingStore::by_split(Split s) const {
  std::vector<const RatingTriple*> out;
  for (const auto& t : triples)
    if (t.split == s) out.push_back(&t);
  return out;
}

std::size_t RatingStore::count_split(Split s) const {
  std::size_t n = 0;
  for (const auto& t : triples)
    if (t.split == s) ++n;
  return n;
}

namespace {

std::vector<std::string> split_fields(const std::string& line, const std::string& delim) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = line.find(delim, pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + delim.size();
  }
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, '\t')) out.push_back(field);
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

[[noreturn]] void malformed(const std::string& path, std::size_t line_no, const std::string& what) {
  throw DataError("MalformedLine: " + path + ":" + std::to_string(line_no) + ": " + what);
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("MissingFile: " + path);
  return in;
}

// MovieLens-1M age codes.
int movielens_age_class(int code) {
  switch (code) {
    case 1: return 0;
    case 18: return 1;
    case 25: return 2;
    case 35: return 3;
    case 45: return 4;
    case 50: return 5;
    case 56: return 6;
    default: throw DataError("UnknownAgeCode: " + std::to_string(code));
  }
}

} // namespace

std::pair<RatingStore, AttributeTable>
parse_movielens(const std::string& ratings_path, const std::string& users_path) {
  auto ratings_in = open_or_throw(ratings_path);
  auto users_in = open_or_throw(users_path);

  // First pass over users.dat establishes the user index map in file order.
  std::unordered_map<long, int> user_index;
  struct RawUser { int gender, age, occupation; };
  std::vector<RawUser> raw_users;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(users_in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto f = split_fields(line, "::");
    if (f.size() < 5) malformed(users_path, line_no, "expected 5 `::` fields");
    long ext_id;
    int age_code, occ;
    try {
      ext_id = std::stol(f[0]);
      age_code = std::stoi(f[2]);
      occ = std::stoi(f[3]);
    } catch (const std::exception&) {
      malformed(users_path, line_no, "non-numeric field");
    }
    int gender;
    if (f[1] == "F") gender = 0;
    else if (f[1] == "M") gender = 1;
    else malformed(users_path, line_no, "gender must be F or M");
    if (occ < 0 || occ > 20) malformed(users_path, line_no, "occupation out of range");
    if (user_index.count(ext_id)) malformed(users_path, line_no, "duplicate user id");
    user_index[ext_id] = static_cast<int>(raw_users.size());
    raw_users.push_back({gender, movielens_age_class(age_code), occ});
  }
  if (raw_users.empty()) throw DataError("MissingData: no users in " + users_path);

  RatingStore store;
  store.user_count = static_cast<int>(raw_users.size());
  std::unordered_map<long, int> item_index;
  line_no = 0;
  std::set<std::pair<int, int>> seen;
  while (std::getline(ratings_in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto f = split_fields(line, "::");
    if (f.size() < 4) malformed(ratings_path, line_no, "expected 4 `::` fields");
    long ext_u, ext_v;
    double r;
    try {
      ext_u = std::stol(f[0]);
      ext_v = std::stol(f[1]);
      r = std::stod(f[2]);
    } catch (const std::exception&) {
      malformed(ratings_path, line_no, "non-numeric field");
    }
    auto uit = user_index.find(ext_u);
    if (uit == user_index.end())
      malformed(ratings_path, line_no, "rating for unknown user " + f[0]);
    if (r < 1.0 || r > 5.0) malformed(ratings_path, line_no, "rating outside [1,5]");
    auto [vit, inserted] = item_index.try_emplace(ext_v, static_cast<int>(item_index.size()));
    (void)inserted;
    if (!seen.insert({uit->second, vit->second}).second)
      malformed(ratings_path, line_no, "duplicate (user,item) pair");
    store.triples.push_back({uit->second, vit->second, r, Split::Train});
  }
  if (store.triples.empty()) throw DataError("MissingData: no ratings in " + ratings_path);
  store.item_count = static_cast<int>(item_index.size());

  AttributeTable attrs;
  attrs.attribute_count = 3;
  attrs.names = {"gender", "age", "occupation"};
  attrs.cardinalities = {2, 7, 21};
  attrs.values.resize(store.user_count);
  for (int u = 0; u < store.user_count; ++u)
    attrs.values[u] = {raw_users[u].gender, raw_users[u].age, raw_users[u].occupation};
  return {std::move(store), std::move(attrs)};
}

std::vector<double> log_normalize_plays(const std::vector<std::int64_t>& counts) {
  std::vector<double> logs(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 1)
      throw DataError("NonPositivePlayCount: " + std::to_string(counts[i]));
    logs[i] = std::log1p(static_cast<double>(counts[i]));
  }
  if (logs.empty()) return {};
  auto [mn_it, mx_it] = std::minmax_element(logs.begin(), logs.end());
  double mn = *mn_it, mx = *mx_it;
  std::vector<double> out(logs.size());
  if (mx - mn <= 0.0) {
    std::fill(out.begin(), out.end(), 3.0); // degenerate range: midpoint
    return out;
  }
  for (std::size_t i = 0; i < logs.size(); ++i)
    out[i] = 1.0 + 4.0 * (logs[i] - mn) / (mx - mn);
  return out;
}

std::pair<RatingStore, AttributeTable>
parse_lastfm(const std::string& plays_path, const std::string& profile_path) {
  auto plays_in = open_or_throw(plays_path);
  auto profile_in = open_or_throw(profile_path);

  // Profile first: users are indexed in profile order, matching the
  // usersha1-profile file of the Lastfm-360K distribution.
  std::unordered_map<std::string, int> user_index;
  std::vector<int> genders, ages; // kMissing when absent
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(profile_in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.empty() || f[0].empty()) malformed(profile_path, line_no, "missing user id");
    if (user_index.count(f[0])) malformed(profile_path, line_no, "duplicate user id");
    user_index[f[0]] = static_cast<int>(genders.size());
    int gender = AttributeTable::kMissing;
    if (f.size() > 1) {
      if (f[1] == "f") gender = 0;
      else if (f[1] == "m") gender = 1;
    }
    int age_class = AttributeTable::kMissing;
    if (f.size() > 2 && !f[2].empty()) {
      try {
        int age = std::stoi(f[2]);
        if (age >= 1) age_class = age <= 24 ? 0 : (age <= 34 ? 1 : 2);
      } catch (const std::exception&) {
        // unparseable age: treated as missing
      }
    }
    genders.push_back(gender);
    ages.push_back(age_class);
  }
  if (genders.empty()) throw DataError("MissingData: no profiles in " + profile_path);

  RatingStore store;
  store.user_count = static_cast<int>(genders.size());
  std::unordered_map<std::string, int> item_index;
  std::vector<std::int64_t> counts;
  line_no = 0;
  std::set<std::pair<int, int>> seen;
  while (std::getline(plays_in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() < 2) malformed(plays_path, line_no, "expected tab-separated fields");
    auto uit = user_index.find(f[0]);
    if (uit == user_index.end())
      malformed(plays_path, line_no, "plays for unknown user");
    // Layout: user \t artist-id \t [artist-name \t] plays. The count is the
    // last field; the artist key is the second.
    std::int64_t plays;
    try {
      plays = std::stoll(f.back());
    } catch (const std::exception&) {
      malformed(plays_path, line_no, "non-numeric play count");
    }
    if (plays < 1) throw DataError("NonPositivePlayCount: " + plays_path + ":" +
                                   std::to_string(line_no));
    auto [vit, inserted] = item_index.try_emplace(f[1], static_cast<int>(item_index.size()));
    (void)inserted;
    if (!seen.insert({uit->second, vit->second}).second)
      malformed(plays_path, line_no, "duplicate (user,artist) pair");
    store.triples.push_back({uit->second, vit->second, 0.0, Split::Train});
    counts.push_back(plays);
  }
  if (store.triples.empty()) throw DataError("MissingData: no plays in " + plays_path);
  store.item_count = static_cast<int>(item_index.size());

  auto normalized = log_normalize_plays(counts);
  for (std::size_t i = 0; i < normalized.size(); ++i)
    store.triples[i].rating = normalized[i];

  AttributeTable attrs;
  attrs.attribute_count = 2;
  attrs.names = {"gender", "age"};
  attrs.cardinalities = {2, 3};
  attrs.values.resize(store.user_count);
  for (int u = 0; u < store.user_count; ++u)
    attrs.values[u] = {genders[u], ages[u]};
  return {std::move(store), std::move(attrs)};
}

void split_ratings(RatingStore& store, double train_ratio, double validation_ratio,
                   double test_ratio, std::uint64_t seed) {
  double sum = train_ratio + validation_ratio + test_ratio;
  if (std::abs(sum - 1.0) > 1e-9)
    throw DataError("RatioSumInvalid: ratios sum to " + std::to_string(sum));
  if (train_ratio < 0 || validation_ratio < 0 || test_ratio < 0)
    throw DataError("RatioSumInvalid: negative ratio");

  std::size_t n = store.triples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(validation_ratio * static_cast<double>(n)));
  if (n_train + n_val > n) n_val = n - n_train;
  for (std::size_t i = 0; i < n; ++i) {
    Split s = i < n_train ? Split::Train
            : i < n_train + n_val ? Split::Validation
                                  : Split::Test;
    store.triples[order[i]].split = s;
  }
}

BipartiteAdjacency build_adjacency(const RatingStore& store) {
  BipartiteAdjacency adj;
  adj.user_count = store.user_count;
  adj.item_count = store.item_count;
  adj.neighbors.resize(adj.node_count());
  adj.weight_sums.assign(adj.node_count(), 0.0);
  for (const auto& t : store.triples) {
    if (t.split != Split::Train) continue;
    int ui = t.user;
    int vi = adj.item_node(t.item);
    adj.neighbors[ui].push_back({vi, t.rating});
    adj.neighbors[vi].push_back({ui, t.rating});
    adj.weight_sums[ui] += t.rating;
    adj.weight_sums[vi] += t.rating;
  }
  return adj;
}

std::vector<std::vector<std::pair<int, double>>>
ego_neighbors(const BipartiteAdjacency& adj, int node, int order) {
  if (node < 0 || node >= adj.node_count())
    throw DataError("NodeOutOfRange: " + std::to_string(node));
  if (order < 1) throw DataError("NodeOutOfRange: order must be >= 1");

  std::vector<std::vector<std::pair<int, double>>> hops;
  std::vector<int> frontier = {node};
  for (int l = 0; l < order; ++l) {
    std::unordered_map<int, double> next;
    for (int p : frontier)
      for (const auto& [j, w] : adj.neighbors[p]) next[j] += w;
    std::vector<std::pair<int, double>> hop(next.begin(), next.end());
    std::sort(hop.begin(), hop.end());
    frontier.clear();
    for (const auto& [j, w] : hop) frontier.push_back(j);
    hops.push_back(std::move(hop));
  }
  return hops;
}

// --- CSV serialization -----------------------------------------------------

void save_store_csv(const RatingStore& store, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("MissingFile: cannot write " + path);
  out << "# fairgo-store v1\n";
  out << store.user_count << "," << store.item_count << "\n";
  out.precision(17);
  for (const auto& t : store.triples)
    out << t.user << "," << t.item << "," << t.rating << ","
        << static_cast<int>(t.split) << "\n";
}

RatingStore load_store_csv(const std::string& path) {
  auto in = open_or_throw(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# fairgo-store v1", 0) != 0)
    throw DataError("MalformedLine: " + path + ": bad header");
  RatingStore store;
  char comma;
  if (!std::getline(in, line)) throw DataError("MalformedLine: " + path + ": missing sizes");
  {
    std::istringstream ss(line);
    ss >> store.user_count >> comma >> store.item_count;
  }
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    std::istringstream ss(line);
    RatingTriple t;
    int split_tag;
    ss >> t.user >> comma >> t.item >> comma >> t.rating >> comma >> split_tag;
    if (!ss) malformed(path, line_no, "bad triple");
    t.split = static_cast<Split>(split_tag);
    store.triples.push_back(t);
  }
  return store;
}

void save_attributes_csv(const AttributeTable& attrs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("MissingFile: cannot write " + path);
  out << "# fairgo-attrs v1\n";
  out << attrs.attribute_count << "\n";
  for (int k = 0; k < attrs.attribute_count; ++k)
    out << attrs.names[k] << "," << attrs.cardinalities[k] << "\n";
  for (const auto& row : attrs.values) {
    for (std::size_t k = 0; k < row.size(); ++k)
      out << (k ? "," : "") << row[k];
    out << "\n";
  }
}

AttributeTable load_attributes_csv(const std::string& path) {
  auto in = open_or_throw(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# fairgo-attrs v1", 0) != 0)
    throw DataError("MalformedLine: " + path + ": bad header");
  AttributeTable attrs;
  if (!std::getline(in, line)) throw DataError("MalformedLine: " + path);
  attrs.attribute_count = std::stoi(line);
  for (int k = 0; k < attrs.attribute_count; ++k) {
    if (!std::getline(in, line)) throw DataError("MalformedLine: " + path);
    strip_cr(line);
    auto pos = line.rfind(',');
    attrs.names.push_back(line.substr(0, pos));
    attrs.cardinalities.push_back(std::stoi(line.substr(pos + 1)));
  }
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    std::vector<int> row;
    std::istringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) row.push_back(std::stoi(field));
    if (static_cast<int>(row.size()) != attrs.attribute_count)
      throw DataError("MalformedLine: " + path + ": wrong attribute arity");
    attrs.values.push_back(std::move(row));
  }
  return attrs;
}

} // namespace fairgo
