#ifndef FAIRGO_DATA_HPP
#define FAIRGO_DATA_HPP

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairgo {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Split : std::uint8_t { Train = 0, Validation = 1, Test = 2 };

struct RatingTriple {
  int user;
  int item;
  double rating;  // in [1,5] after normalization
  Split split = Split::Train;
};

/// Sparse (user, item, rating) triples with split tags. Indices are dense
/// and 0-based; external dataset IDs are remapped at parse time.
struct RatingStore {
  int user_count = 0;
  int item_count = 0;
  std::vector<RatingTriple> triples;

  std::vector<const RatingTriple*> by_split(Split s) const;
  std::size_t count_split(Split s) const;
};

/// Per-user class indices for K sensitive attributes. A value of
/// kMissing marks a user excluded from that attribute.
struct AttributeTable {
  static constexpr int kMissing = -1;

  int attribute_count = 0;
  std::vector<std::string> names;       // size K
  std::vector<int> cardinalities;       // size K, each >= 2
  std::vector<std::vector<int>> values; // user_count rows of K entries

  bool has_label(int user, int k) const {
    return values[user][k] != kMissing;
  }
};

/// Symmetric rating-weighted adjacency over M user nodes followed by N item
/// nodes, stored as per-node neighbor lists. Edges exist only between a user
/// and an item (block form [[0, R], [R^T, 0]]).
struct BipartiteAdjacency {
  int user_count = 0;
  int item_count = 0;
  std::vector<std::vector<std::pair<int, double>>> neighbors; // size M+N
  std::vector<double> weight_sums;                            // size M+N

  int node_count() const { return user_count + item_count; }
  int item_node(int item) const { return user_count + item; }
};

// --- Parsing -------------------------------------------------------------

/// MovieLens-1M: `::`-delimited ratings.dat (UserID::MovieID::Rating::Timestamp)
/// and users.dat (UserID::Gender::Age::Occupation::Zip). Gender maps F->0,
/// M->1; the seven age codes map to classes 0..6; occupation is 0..20.
std::pair<RatingStore, AttributeTable>
parse_movielens(const std::string& ratings_path, const std::string& users_path);

/// Lastfm-360K: tab-separated play counts (user, artist-id, artist-name, plays)
/// and profile (user, gender, age, ...). Play counts are log-normalized into
/// [1,5]. Age classes: [1,24] -> 0, [25,34] -> 1, [35,inf) -> 2. Users with a
/// missing gender or age stay in the RatingStore but carry the missing marker
/// for that attribute.
std::pair<RatingStore, AttributeTable>
parse_lastfm(const std::string& plays_path, const std::string& profile_path);

/// r_c = 1 + 4 * (ln(1+c) - m) / (Mx - m) over the dataset's min/max of
/// ln(1+c). All-equal counts map to 3.0.
std::vector<double> log_normalize_plays(const std::vector<std::int64_t>& counts);

// --- Splitting and graph construction ------------------------------------

/// Uniform random assignment of triples to train/validation/test by ratio.
/// Ratios must sum to 1; a zero ratio disables that split. Deterministic
/// given the seed.
void split_ratings(RatingStore& store, double train_ratio, double validation_ratio,
                   double test_ratio, std::uint64_t seed);

/// Builds the symmetric bipartite adjacency from training triples only.
BipartiteAdjacency build_adjacency(const RatingStore& store);

/// Per-hop neighbor lists with weights. Hop 1 holds direct neighbors with
/// edge weights; hop l holds the union of neighbors of hop-(l-1) nodes, each
/// weighted by the summed edge weight from its hop-(l-1) parents.
std::vector<std::vector<std::pair<int, double>>>
ego_neighbors(const BipartiteAdjacency& adj, int node, int order);

// --- Serialization --------------------------------------------------------

void save_store_csv(const RatingStore& store, const std::string& path);
RatingStore load_store_csv(const std::string& path);

void save_attributes_csv(const AttributeTable& attrs, const std::string& path);
AttributeTable load_attributes_csv(const std::string& path);

} // namespace fairgo

#endif
