#include "fairgo/pipeline.hpp"

#include "fairgo/base_models.hpp"
#include "fairgo/data.hpp"
#include "fairgo/fairness.hpp"
#include "fairgo/metrics.hpp"
#include "fairgo/nn.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace fairgo {

// --- RunConfig ----------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string field;
  while (std::getline(ss, field, ',')) {
    field = trim(field);
    if (!field.empty()) out.push_back(field);
  }
  return out;
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t kFnvBasis = 0xCBF29CE484222325ULL;

} // namespace

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("ConfigInvalid: cannot read " + path);
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("ConfigInvalid: " + path + ":" + std::to_string(line_no) +
                        ": expected key = value");
    cfg.values[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return cfg;
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : std::stod(it->second);
}

int RunConfig::get_int(const std::string& key, int fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : std::stoi(it->second);
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : std::stoull(it->second);
}

std::vector<int> RunConfig::get_int_list(const std::string& key,
                                         const std::vector<int>& fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  std::vector<int> out;
  for (const auto& f : split_commas(it->second)) out.push_back(std::stoi(f));
  return out;
}

std::vector<double> RunConfig::get_double_list(const std::string& key,
                                               const std::vector<double>& fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  std::vector<double> out;
  for (const auto& f : split_commas(it->second)) out.push_back(std::stod(f));
  return out;
}

std::uint64_t RunConfig::hash() const {
  std::uint64_t h = kFnvBasis;
  for (const auto& [k, v] : values) { // std::map: canonical order
    h = fnv1a(h, k.data(), k.size());
    h = fnv1a(h, "=", 1);
    h = fnv1a(h, v.data(), v.size());
    h = fnv1a(h, "\n", 1);
  }
  return h;
}

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("MissingPrerequisite: cannot hash " + path);
  std::uint64_t h = kFnvBasis;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a(h, buf, static_cast<std::size_t>(in.gcount()));
  return h;
}

// --- Stage plumbing --------------------------------------------------------------

namespace {

struct StageLock {
  explicit StageLock(const fs::path& dir) : path_(dir / ".fairgo.lock") {
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream probe(path_, std::ios::out | std::ios::app);
    // One stage at a time per output directory.
    if (fs::exists(path_) && fs::file_size(path_) > 0)
      throw ConfigError("ConfigInvalid: lock file present at " + path_.string());
    std::ofstream out(path_);
    out << "locked\n";
  }
  ~StageLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  fs::path path_;
};

void update_manifest(const fs::path& out_dir, const std::vector<std::string>& artifacts) {
  fs::path manifest_path = out_dir / "manifest.json";
  json manifest;
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    in >> manifest;
  }
  for (const auto& name : artifacts) {
    std::ostringstream hex;
    hex << std::hex << fnv1a_file((out_dir / name).string());
    manifest["artifacts"][name] = "fnv1a:" + hex.str();
  }
  std::ofstream out(manifest_path);
  out << manifest.dump(2) << "\n";
}

std::string hash_string(std::uint64_t h) {
  std::ostringstream hex;
  hex << std::hex << h;
  return hex.str();
}

void require_hash(const std::string& found, std::uint64_t expected,
                  const std::string& artifact) {
  if (found != hash_string(expected))
    throw ConfigError("MissingPrerequisite: " + artifact +
                      " was produced under a different config (hash " + found +
                      " != " + hash_string(expected) + ")");
}

struct StageContext {
  RunConfig config;
  fs::path out_dir;
  std::uint64_t seed;
  std::uint64_t config_hash;
};

AttributeTable subset_attributes(const AttributeTable& attrs,
                                 const std::vector<std::string>& wanted) {
  if (wanted.empty()) return attrs;
  AttributeTable out;
  std::vector<int> cols;
  for (const auto& name : wanted) {
    auto it = std::find(attrs.names.begin(), attrs.names.end(), name);
    if (it == attrs.names.end())
      throw ConfigError("ConfigInvalid: unknown attribute " + name);
    cols.push_back(static_cast<int>(it - attrs.names.begin()));
  }
  out.attribute_count = static_cast<int>(cols.size());
  for (int c : cols) {
    out.names.push_back(attrs.names[c]);
    out.cardinalities.push_back(attrs.cardinalities[c]);
  }
  out.values.reserve(attrs.values.size());
  for (const auto& row : attrs.values) {
    std::vector<int> sub;
    for (int c : cols) sub.push_back(row[c]);
    out.values.push_back(std::move(sub));
  }
  return out;
}

// --- ingest ---

void stage_ingest(const StageContext& ctx) {
  std::string dataset = ctx.config.get("dataset", "");
  RatingStore store;
  AttributeTable attrs;
  double def_train = 0.8, def_val = 0.1, def_test = 0.1;
  if (dataset == "movielens") {
    std::tie(store, attrs) = parse_movielens(ctx.config.get("ratings_path", ""),
                                             ctx.config.get("users_path", ""));
    // The stated 9:1 split has no validation part; 5% of train is carved out
    // for checkpoint selection.
    def_train = 0.855;
    def_val = 0.045;
    def_test = 0.1;
  } else if (dataset == "lastfm") {
    std::tie(store, attrs) = parse_lastfm(ctx.config.get("plays_path", ""),
                                          ctx.config.get("profile_path", ""));
    def_train = 0.7;
    def_val = 0.1;
    def_test = 0.2;
  } else if (dataset == "synthetic") {
    auto ratings = ctx.config.get("synthetic_ratings_path",
                                  (ctx.out_dir / "synth_ratings.csv").string());
    auto attributes = ctx.config.get("synthetic_attributes_path",
                                     (ctx.out_dir / "synth_attrs.csv").string());
    store = load_store_csv(ratings);
    attrs = load_attributes_csv(attributes);
  } else {
    throw ConfigError("ConfigInvalid: dataset must be movielens|lastfm|synthetic");
  }

  attrs = subset_attributes(attrs, split_commas(ctx.config.get("attributes", "")));
  split_ratings(store, ctx.config.get_double("split_train", def_train),
                ctx.config.get_double("split_validation", def_val),
                ctx.config.get_double("split_test", def_test),
                ctx.config.get_u64("split_seed", ctx.seed));

  save_store_csv(store, (ctx.out_dir / "store.csv").string());
  save_attributes_csv(attrs, (ctx.out_dir / "attrs.csv").string());
  json meta;
  meta["config_hash"] = hash_string(ctx.config_hash);
  meta["dataset"] = dataset;
  meta["users"] = store.user_count;
  meta["items"] = store.item_count;
  meta["ratings"] = store.triples.size();
  std::ofstream out(ctx.out_dir / "ingest.json");
  out << meta.dump(2) << "\n";
  update_manifest(ctx.out_dir, {"store.csv", "attrs.csv", "ingest.json"});
}

json load_stage_meta(const fs::path& path) {
  if (!fs::exists(path))
    throw ConfigError("MissingPrerequisite: " + path.string());
  std::ifstream in(path);
  json meta;
  in >> meta;
  return meta;
}

// --- train-base ---

BaseTrainConfig base_config_from(const StageContext& ctx) {
  BaseTrainConfig cfg;
  cfg.embedding_dim = ctx.config.get_int("base_dim", 64);
  cfg.epochs = ctx.config.get_int("base_epochs", 50);
  cfg.batch_size = ctx.config.get_int("base_batch", 1024);
  cfg.learning_rate = ctx.config.get_double("base_lr", 0.005);
  cfg.l2_weight = ctx.config.get_double("base_l2", 1e-4);
  cfg.gcn_layers = ctx.config.get_int("base_gcn_layers", 2);
  cfg.seed = ctx.config.get_u64("base_seed", ctx.seed);
  return cfg;
}

void stage_train_base(const StageContext& ctx) {
  auto ingest_meta = load_stage_meta(ctx.out_dir / "ingest.json");
  require_hash(ingest_meta["config_hash"], ctx.config_hash, "ingest.json");

  auto store = load_store_csv((ctx.out_dir / "store.csv").string());
  auto cfg = base_config_from(ctx);
  std::string model_kind = ctx.config.get("base_model", "pmf");

  EmbeddingMatrix embeddings;
  if (model_kind == "pmf") {
    embeddings = train_pmf(store, cfg);
  } else if (model_kind == "gcn") {
    auto adjacency = build_adjacency(store);
    embeddings = train_gcn(store, adjacency, cfg);
  } else {
    throw ConfigError("ConfigInvalid: base_model must be pmf|gcn");
  }

  nn::Checkpoint ckpt;
  ckpt.meta["config_hash"] = hash_string(ctx.config_hash);
  ckpt.meta["model"] = model_kind;
  ckpt.meta["seed"] = std::to_string(cfg.seed);
  ckpt.meta["user_count"] = std::to_string(store.user_count);
  ckpt.meta["item_count"] = std::to_string(store.item_count);
  ckpt.tensors["embeddings"] = embeddings;
  ckpt.save((ctx.out_dir / "base_embeddings.ckpt").string());
  update_manifest(ctx.out_dir, {"base_embeddings.ckpt"});
}

// --- train-fair ---

SummaryConfig summary_config_from(const StageContext& ctx) {
  SummaryConfig cfg;
  std::string variant = ctx.config.get("summary_variant", "first_order");
  if (variant == "first_order") cfg.variant = SummaryVariant::FirstOrder;
  else if (variant == "value_aggregation") cfg.variant = SummaryVariant::ValueAggregation;
  else if (variant == "learned") cfg.variant = SummaryVariant::Learned;
  else throw ConfigError("ConfigInvalid: summary_variant");
  cfg.order = ctx.config.get_int("summary_order",
                                 cfg.variant == SummaryVariant::FirstOrder ? 1 : 2);
  cfg.layer_weights = ctx.config.get_double_list("summary_weights", {0.8, 0.2});
  cfg.layer_weights.resize(cfg.order, 0.0);
  cfg.aggregator_hidden = ctx.config.get_int_list("summary_agg_hidden", {64, 64});
  cfg.neighbor_cap = ctx.config.get_int("summary_neighbor_cap", 512);
  return cfg;
}

FairTrainConfig fair_config_from(const StageContext& ctx) {
  FairTrainConfig cfg;
  cfg.lambda = ctx.config.get_double("fair_lambda", 0.1);
  cfg.epochs = ctx.config.get_int("fair_epochs", 30);
  cfg.batch_size = ctx.config.get_int("fair_batch", 1024);
  cfg.filter_lr = ctx.config.get_double("fair_filter_lr", 0.005);
  cfg.discriminator_lr = ctx.config.get_double("fair_disc_lr", 0.005);
  cfg.discriminator_steps = ctx.config.get_int("fair_disc_steps", 1);
  cfg.discriminators_enabled = ctx.config.get_int("fair_discriminators_enabled", 1) != 0;
  cfg.filter_hidden = ctx.config.get_int_list("fair_filter_hidden", {128, 64});
  cfg.discriminator_hidden = ctx.config.get_int_list("fair_disc_hidden", {16, 8});
  cfg.leak_slope = ctx.config.get_double("fair_leak_slope", 0.01);
  cfg.seed = ctx.config.get_u64("fair_seed", ctx.seed);
  return cfg;
}

void stage_train_fair(const StageContext& ctx) {
  auto store = load_store_csv((ctx.out_dir / "store.csv").string());
  auto attrs = load_attributes_csv((ctx.out_dir / "attrs.csv").string());
  auto base = nn::Checkpoint::load((ctx.out_dir / "base_embeddings.ckpt").string());
  require_hash(base.meta.at("config_hash"), ctx.config_hash, "base_embeddings.ckpt");

  auto adjacency = build_adjacency(store);
  auto fair_cfg = fair_config_from(ctx);
  auto summary_cfg = summary_config_from(ctx);

  std::vector<TrainCurvePoint> curve;
  auto model = train_adversarial(base.tensors.at("embeddings"), adjacency, store,
                                 attrs, fair_cfg, summary_cfg, &curve);

  {
    std::ofstream out(ctx.out_dir / "curve.csv");
    out << "epoch,V_R,V_N,V_S,validation_rmse\n";
    out.precision(12);
    for (const auto& pt : curve)
      out << pt.epoch << "," << pt.rating_value << "," << pt.node_value << ","
          << pt.graph_value << "," << pt.validation_rmse << "\n";
  }

  nn::Checkpoint ckpt;
  ckpt.meta["config_hash"] = hash_string(ctx.config_hash);
  ckpt.meta["lambda"] = std::to_string(fair_cfg.lambda);
  ckpt.meta["summary_variant"] = ctx.config.get("summary_variant", "first_order");
  ckpt.meta["summary_order"] = std::to_string(summary_cfg.order);
  ckpt.meta["seed"] = std::to_string(fair_cfg.seed);
  ckpt.meta["filter_count"] = std::to_string(model.filters.count());
  for (int k = 0; k < model.filters.count(); ++k)
    ckpt.put_mlp("filter." + std::to_string(k), model.filters.subfilters[k]);
  for (std::size_t k = 0; k < model.discriminators.nets.size(); ++k)
    ckpt.put_mlp("disc." + std::to_string(k), model.discriminators.nets[k]);
  if (model.aggregator) ckpt.put_mlp("aggregator", *model.aggregator);
  ckpt.tensors["filtered_embeddings"] =
      model.filters.apply_all(base.tensors.at("embeddings"));
  ckpt.save((ctx.out_dir / "fair_model.ckpt").string());
  update_manifest(ctx.out_dir, {"fair_model.ckpt", "curve.csv"});
}

// --- audit ---

std::vector<std::uint64_t> attacker_seeds(const StageContext& ctx) {
  int n = ctx.config.get_int("eval_attacker_seeds", 5);
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n; ++i)
    seeds.push_back(ctx.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(i + 1)));
  return seeds;
}

void stage_audit(const StageContext& ctx) {
  auto store = load_store_csv((ctx.out_dir / "store.csv").string());
  auto attrs = load_attributes_csv((ctx.out_dir / "attrs.csv").string());
  auto base = nn::Checkpoint::load((ctx.out_dir / "base_embeddings.ckpt").string());
  auto fair = nn::Checkpoint::load((ctx.out_dir / "fair_model.ckpt").string());
  require_hash(base.meta.at("config_hash"), ctx.config_hash, "base_embeddings.ckpt");
  require_hash(fair.meta.at("config_hash"), ctx.config_hash, "fair_model.ckpt");

  const auto& base_emb = base.tensors.at("embeddings");
  const auto& filtered = fair.tensors.at("filtered_embeddings");
  auto adjacency = build_adjacency(store);
  auto seeds = attacker_seeds(ctx);
  int eval_orders = ctx.config.get_int("eval_orders", 0);

  MetricsReport report;
  report.metadata["config_hash"] = hash_string(ctx.config_hash);
  report.metadata["seed"] = std::to_string(ctx.seed);
  report.metadata["attacker_seed_count"] = std::to_string(seeds.size());

  // Rating accuracy on the test split, filtered and base.
  auto test = store.by_split(Split::Test);
  if (!test.empty()) {
    std::vector<double> pred, truth, base_pred;
    for (const auto* t : test) {
      pred.push_back(filtered.col(t->user).dot(filtered.col(adjacency.item_node(t->item))));
      base_pred.push_back(
          base_emb.col(t->user).dot(base_emb.col(adjacency.item_node(t->item))));
      truth.push_back(t->rating);
    }
    report.rmse_value = rmse(pred, truth);
    report.metadata["base_rmse"] = std::to_string(rmse(base_pred, truth));
  }

  // Leakage audits: per attribute, on base and filtered user embeddings and
  // optionally on l-th order summaries of each.
  auto audit_features = [&](const std::string& tag, const nn::Matrix& user_features) {
    for (int k = 0; k < attrs.attribute_count; ++k) {
      std::vector<int> labels(store.user_count);
      for (int u = 0; u < store.user_count; ++u) labels[u] = attrs.values[u][k];
      report.leakage[attrs.names[k] + ":" + tag] =
          leakage_audit_mean(user_features, labels, attrs.cardinalities[k], seeds);
    }
  };
  audit_features("base", base_emb.leftCols(store.user_count));
  audit_features("filtered", filtered.leftCols(store.user_count));
  if (eval_orders > 0) {
    auto base_orders = propagate_orders(adjacency, base_emb, eval_orders);
    auto filt_orders = propagate_orders(adjacency, filtered, eval_orders);
    for (int l = 0; l < eval_orders; ++l) {
      audit_features("base_h" + std::to_string(l + 1),
                     base_orders[l].leftCols(store.user_count));
      audit_features("filtered_h" + std::to_string(l + 1),
                     filt_orders[l].leftCols(store.user_count));
    }
  }

  // Group-fairness metrics over observed test ratings.
  if (!test.empty()) {
    std::vector<ScoredPair> pairs;
    for (const auto* t : test)
      pairs.push_back({t->user, t->item,
                       filtered.col(t->user).dot(filtered.col(adjacency.item_node(t->item))),
                       t->rating});
    for (int k = 0; k < attrs.attribute_count; ++k) {
      std::vector<int> groups(store.user_count);
      for (int u = 0; u < store.user_count; ++u) groups[u] = attrs.values[u][k];
      try {
        report.parity[attrs.names[k]] =
            statistical_parity(pairs, groups, attrs.cardinalities[k]);
        report.opportunity[attrs.names[k]] =
            equal_opportunity(pairs, groups, attrs.cardinalities[k]);
      } catch (const MetricError&) {
        // no item had raters from every group; metric omitted
      }
    }
  }

  std::ofstream out(ctx.out_dir / "metrics.json");
  out << report.to_json();
  out.close();
  update_manifest(ctx.out_dir, {"metrics.json"});
}

// --- report ---

void stage_report(const StageContext& ctx) {
  auto metrics = load_stage_meta(ctx.out_dir / "metrics.json");
  auto attrs = load_attributes_csv((ctx.out_dir / "attrs.csv").string());

  json out;
  out["metrics"] = metrics;
  json& summary = out["summary"];
  summary["rmse"] = metrics["rmse"];
  for (int k = 0; k < attrs.attribute_count; ++k) {
    const auto& name = attrs.names[k];
    std::string key = name + ":filtered";
    if (metrics["leakage"].contains(key)) {
      std::string metric = metrics["leakage"][key]["metric"];
      summary[name + "_" + (metric == "auc" ? "auc" : "f1")] =
          metrics["leakage"][key]["value"];
    }
    if (metrics["statistical_parity"].contains(name))
      summary["statistical_parity_" + name] =
          metrics["statistical_parity"][name]["value"];
    if (metrics["equal_opportunity"].contains(name))
      summary["equal_opportunity_" + name] =
          metrics["equal_opportunity"][name]["value"];
  }
  if (fs::exists(ctx.out_dir / "manifest.json"))
    out["manifest"] = load_stage_meta(ctx.out_dir / "manifest.json");

  std::ofstream file(ctx.out_dir / "report.json");
  file << out.dump(2) << "\n";
  file.close();
  update_manifest(ctx.out_dir, {"report.json"});

  std::cout << "metric                          value\n";
  std::cout << "------------------------------  ----------\n";
  for (auto it = summary.begin(); it != summary.end(); ++it) {
    std::ostringstream row;
    row.setf(std::ios::left);
    row.width(32);
    row << it.key();
    std::cout << row.str() << it.value().dump() << "\n";
  }
}

} // namespace

// --- synthetic dataset -------------------------------------------------------------

void generate_synthetic(const RunConfig& config, const std::string& out_dir) {
  int users = config.get_int("synth_users", 500);
  int items = config.get_int("synth_items", 300);
  double density = config.get_double("synth_density", 0.05);
  double strength = config.get_double("synth_strength", 1.0);
  int latent = config.get_int("synth_latent_dim", 8);
  std::uint64_t seed = config.get_u64("seed", 1);

  if (users <= 0 || items <= 0 || latent <= 0 || density <= 0.0 || density > 1.0)
    throw ConfigError("ParamInvalid: synthetic sizes must be positive, density in (0,1]");
  if (strength < 0.0 || strength > 1.0)
    throw ConfigError("ParamInvalid: synth_strength must be in [0,1]");

  nn::SeededRng rng(seed);
  double group_scale = config.get_double("synth_group_weight", 0.3);
  double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(latent));

  // User factors: `latent` isotropic preference coordinates plus one extra
  // coordinate that linearly encodes the planted class with the configured
  // strength. Items load on every coordinate, so the class explains a
  // strength-controlled slice of the rating variance rather than all of it.
  std::vector<int> classes(users);
  nn::Matrix user_factors(latent + 1, users);
  for (int u = 0; u < users; ++u) {
    classes[u] = static_cast<int>(rng.below(2));
    double sign = classes[u] == 1 ? 1.0 : -1.0;
    for (int d = 0; d < latent; ++d)
      user_factors(d, u) = inv_sqrt_d * rng.normal();
    user_factors(latent, u) = strength * group_scale * sign;
  }
  nn::Matrix item_factors(latent + 1, items);
  for (int v = 0; v < items; ++v) {
    for (int d = 0; d < latent; ++d) item_factors(d, v) = inv_sqrt_d * rng.normal();
    item_factors(latent, v) = rng.normal();
  }

  auto target = static_cast<std::size_t>(
      std::llround(density * static_cast<double>(users) * static_cast<double>(items)));
  std::set<std::pair<int, int>> chosen;
  while (chosen.size() < target) {
    int u = static_cast<int>(rng.below(static_cast<std::uint64_t>(users)));
    int v = static_cast<int>(rng.below(static_cast<std::uint64_t>(items)));
    chosen.insert({u, v});
  }

  std::vector<double> raw;
  raw.reserve(chosen.size());
  for (const auto& [u, v] : chosen)
    raw.push_back(user_factors.col(u).dot(item_factors.col(v)));
  double mean = std::accumulate(raw.begin(), raw.end(), 0.0) /
                static_cast<double>(raw.size());
  double var = 0.0;
  for (double x : raw) var += (x - mean) * (x - mean);
  double sd = std::sqrt(var / static_cast<double>(raw.size()));
  if (sd <= 0.0) sd = 1.0;

  RatingStore store;
  store.user_count = users;
  store.item_count = items;
  std::size_t i = 0;
  for (const auto& [u, v] : chosen) {
    double r = 3.0 + 1.5 * (raw[i++] - mean) / sd;
    store.triples.push_back({u, v, std::clamp(r, 1.0, 5.0), Split::Train});
  }

  AttributeTable attrs;
  attrs.attribute_count = 1;
  attrs.names = {"group"};
  attrs.cardinalities = {2};
  attrs.values.resize(users);
  for (int u = 0; u < users; ++u) attrs.values[u] = {classes[u]};

  fs::create_directories(out_dir);
  save_store_csv(store, (fs::path(out_dir) / "synth_ratings.csv").string());
  save_attributes_csv(attrs, (fs::path(out_dir) / "synth_attrs.csv").string());
}

// --- run_stage ----------------------------------------------------------------------

int run_stage(const std::string& command, const std::string& config_path,
              std::optional<std::uint64_t> seed_override,
              std::optional<std::string> out_override) {
  try {
    StageContext ctx{RunConfig::load(config_path), {}, 0, 0};
    if (seed_override) ctx.config.values["seed"] = std::to_string(*seed_override);
    if (out_override) ctx.config.values["out_dir"] = *out_override;
    ctx.seed = ctx.config.get_u64("seed", 1);
    ctx.out_dir = ctx.config.get("out_dir", "fairgo_out");
    ctx.config_hash = ctx.config.hash();
    fs::create_directories(ctx.out_dir);
    StageLock lock(ctx.out_dir);

    if (command == "ingest") stage_ingest(ctx);
    else if (command == "train-base") stage_train_base(ctx);
    else if (command == "train-fair") stage_train_fair(ctx);
    else if (command == "audit") stage_audit(ctx);
    else if (command == "report") stage_report(ctx);
    else if (command == "synth") generate_synthetic(ctx.config, ctx.out_dir.string());
    else {
      std::cerr << "unknown stage: " << command << "\n";
      return 2;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "fairgo " << command << ": " << e.what() << "\n";
    return 1;
  }
}

} // namespace fairgo
