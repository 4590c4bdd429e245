// simexplain command-line front end. Every subcommand resolves a RunConfig
// (defaults < --config file < flags), echoes it next to its output and exits
// 0 on success, 2 on invalid input, 3 when a computation fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "simexplain/attrmodel.hpp"
#include "simexplain/config.hpp"
#include "simexplain/discovery.hpp"
#include "simexplain/error.hpp"
#include "simexplain/eval.hpp"
#include "simexplain/explain.hpp"
#include "simexplain/io.hpp"
#include "simexplain/parallel.hpp"
#include "simexplain/pipeline.hpp"
#include "simexplain/synth.hpp"

using namespace simexplain;
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool json = false;
  bool quiet = false;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool out_required = true) {
  app->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "seed for every stage");
  app->add_option("--threads", c.threads, "worker threads (0 = all cores)");
  app->add_flag("--json", c.json, "machine-readable output on stdout");
  app->add_flag("-q,--quiet", c.quiet, "only warnings on stderr");
  auto* o = app->add_option("--out", c.out, "output path");
  if (out_required) o->required();
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  cfg.propagate_seed();
  cfg.validate();
  set_threads(cfg.threads);
  spdlog::set_level(c.quiet || c.json ? spdlog::level::warn : spdlog::level::info);
  return cfg;
}

// Directory outputs get config.json inside; file outputs get
// <name>.config.json beside them.
void echo_config(const RunConfig& cfg, const fs::path& out, bool is_dir) {
  if (is_dir) {
    fs::create_directories(out);
    io::write_file(out / "config.json", cfg.to_json());
    return;
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::write_file(fs::path(out.string() + ".config.json"), cfg.to_json());
}

Dataset open_dataset(const std::string& path) {
  fs::path p(path);
  if (fs::is_directory(p)) p /= "manifest.json";
  return load_dataset(p);
}

std::pair<std::string, std::string> split_pair(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == s.size())
    throw InvalidArgument("pair must be query:reference, got '" + s + "'");
  return {s.substr(0, colon), s.substr(colon + 1)};
}

PhiWeights phi_from_arg(const std::string& s) {
  if (fs::exists(s)) return load_phi(s);
  std::vector<double> v;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      v.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ParseError("--phi", "not a number: " + tok);
    }
  }
  if (v.size() != 3) throw ParseError("--phi", "expected phi1,phi2,phi3 or a phi.json path");
  PhiWeights w{v[0], v[1], v[2]};
  w.validate();
  return w;
}

void emit(const Common& c, const ordered_json& j, const std::string& text) {
  if (c.json)
    std::cout << j.dump() << '\n';
  else
    std::cout << text;
}

std::string fmt_fixed(double v, int prec = 3) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(prec);
  s << v;
  return s.str();
}

Grid preview(const SaliencyMap& m, int h, int w) {
  return resize_map(normalize_map(m.to_grid()).grid, h, w, ResizeMode::Bilinear);
}

Grid luminance(const ImageTensor& img) {
  Grid g(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double s = 0.0;
      for (int ch = 0; ch < img.channels(); ++ch) s += img.at(y, x, ch);
      g(y, x) = s / img.channels();
    }
  return g;
}

// One row per cluster, up to `per_row` patches of its members.
Grid montage(const ClusterAssignment& a, const Dataset& ds, int patch, int per_row) {
  const int gap = 2;
  Grid out(a.n_clusters * (patch + gap), per_row * (patch + gap), 1.0);
  std::vector<int> filled(a.n_clusters, 0);
  for (const auto& p : a.patches) {
    if (p.cluster < 0 || filled[p.cluster] >= per_row) continue;
    const auto lum = luminance(ds.images[p.image]);
    const int oy = p.cluster * (patch + gap), ox = filled[p.cluster]++ * (patch + gap);
    for (int y = 0; y < p.rect.size; ++y)
      for (int x = 0; x < p.rect.size; ++x) out(oy + y, ox + x) = lum(p.rect.y + y, p.rect.x + x);
  }
  return out;
}

int cmd_synth(const Common& c, std::optional<int> n_images) {
  RunConfig cfg = resolve(c);
  if (n_images) cfg.synth.n_images = *n_images;
  echo_config(cfg, c.out, true);
  const auto ds = synth_generate(cfg.synth, c.out);
  ordered_json j{{"out", c.out},
                 {"images", ds.num_images()},
                 {"attributes", ds.num_attributes()},
                 {"pairs", ds.pairs.size()}};
  emit(c, j,
       "wrote " + std::to_string(ds.num_images()) + " images, " + std::to_string(ds.pairs.size()) +
           " pairs to " + c.out + "\n");
  return 0;
}

struct SaliencyArgs {
  std::string dataset, method;
  bool fixed = false, dual = false, bank = false;
  std::vector<std::string> pairs;
  std::string split;
};

int cmd_saliency(const Common& c, const SaliencyArgs& a) {
  RunConfig cfg = resolve(c);
  if (!a.method.empty()) cfg.saliency.method = parse_method(a.method);
  if (a.dual) cfg.saliency.fixed_reference = false;
  if (a.fixed) cfg.saliency.fixed_reference = true;
  cfg.validate();
  const fs::path out(c.out);
  echo_config(cfg, out, true);
  const auto ds = open_dataset(a.dataset);
  const auto scorer = make_scorer(cfg, ds);

  if (a.bank) {
    const auto bank = build_bank(*scorer, ds, cfg);
    save_bank(out, bank);
    std::size_t maps = 0;
    for (const auto& [id, v] : bank) maps += v.size();
    emit(c, {{"out", c.out}, {"images", bank.size()}, {"maps", maps}},
         "bank: " + std::to_string(maps) + " maps for " + std::to_string(bank.size()) + " images\n");
    return 0;
  }

  std::vector<ImagePair> pairs;
  for (const auto& p : a.pairs) {
    auto [q, r] = split_pair(p);
    ds.index_of(q);
    ds.index_of(r);
    pairs.push_back({q, r, Split::Test});
  }
  if (!a.split.empty()) {
    const auto more = ds.pairs_in(parse_split(a.split));
    pairs.insert(pairs.end(), more.begin(), more.end());
  }
  if (pairs.empty()) throw InvalidArgument("saliency: give --pair q:r, --split or --bank");
  const auto maps = pair_saliency(*scorer, ds, pairs, cfg.saliency);
  ordered_json list = ordered_json::array();
  std::string text;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string stem = pairs[i].query_id + "_" + pairs[i].reference_id;
    const auto& q = ds.image(pairs[i].query_id);
    io::save_saliency(out / (stem + ".smap"), maps[i]);
    io::write_pgm(out / (stem + ".pgm"), preview(maps[i], q.height(), q.width()));
    list.push_back({{"query", pairs[i].query_id},
                    {"reference", pairs[i].reference_id},
                    {"path", stem + ".smap"},
                    {"degenerate", maps[i].degenerate()}});
    text += stem + ".smap\n";
  }
  emit(c, {{"out", c.out}, {"method", std::string(method_name(cfg.saliency.method))},
           {"fixed_reference", cfg.saliency.fixed_reference}, {"maps", list}},
       text);
  return 0;
}

int cmd_train(const Common& c, const std::string& dataset, const std::string& maps,
              std::optional<double> lambda) {
  RunConfig cfg = resolve(c);
  if (lambda) cfg.train.lambda = *lambda;
  cfg.validate();
  echo_config(cfg, c.out, false);
  const auto ds = open_dataset(dataset);
  const SaliencyBank bank = maps.empty() ? SaliencyBank{} : load_bank(maps);
  const auto r = train_attribute_model(ds, bank, cfg.train);
  save_model(c.out, r.model);
  emit(c,
       {{"out", c.out},
        {"best_epoch", r.best_epoch},
        {"best_val_map", r.best_val_map},
        {"heatmap_term_used", r.heatmap_term_used},
        {"skipped_unlabeled", r.skipped_unlabeled}},
       "model " + c.out + ": best epoch " + std::to_string(r.best_epoch) + ", val mAP " +
           fmt_fixed(r.best_val_map, 4) + "\n");
  return 0;
}

std::vector<PairCase> val_cases(const RunConfig& cfg, const Dataset& ds, const AttributeModel& model) {
  const auto scorer = make_scorer(cfg, ds);
  const auto val = ds.pairs_in(Split::Val);
  if (val.empty()) throw InvalidArgument("dataset has no validation pairs");
  return build_cases(model, ds, val, pair_saliency(*scorer, ds, val, cfg.saliency));
}

int cmd_prior(const Common& c, const std::string& dataset, const std::string& model_path) {
  const RunConfig cfg = resolve(c);
  echo_config(cfg, c.out, false);
  const auto ds = open_dataset(dataset);
  const auto model = load_model(model_path);
  const auto pr = estimate_prior(val_cases(cfg, ds, model), model.n_attributes);
  io::write_file(c.out, prior_to_json(pr, ds.catalog));
  std::string text;
  for (std::size_t a = 0; a < pr.prior.p.size(); ++a)
    text += ds.catalog.name(a) + " " + fmt_fixed(pr.prior.p[a], 4) + "\n";
  emit(c, ordered_json::parse(prior_to_json(pr, ds.catalog)), text);
  return 0;
}

int cmd_fit(const Common& c, const std::string& dataset, const std::string& model_path,
            const std::string& prior_path) {
  const RunConfig cfg = resolve(c);
  echo_config(cfg, c.out, false);
  const auto ds = open_dataset(dataset);
  const auto model = load_model(model_path);
  const auto prior = load_prior(prior_path, ds.num_attributes());
  const auto fit = fit_phi(val_cases(cfg, ds, model), prior, cfg.explain.phi_step);
  io::write_file(c.out, phi_to_json(fit));
  emit(c, ordered_json::parse(phi_to_json(fit)),
       "phi " + fmt_fixed(fit.phi.phi1, 2) + "," + fmt_fixed(fit.phi.phi2, 2) + "," +
           fmt_fixed(fit.phi.phi3, 2) + "  val top-1 " + fmt_fixed(fit.accuracy) + "\n");
  return 0;
}

int cmd_explain(const Common& c, const std::string& dataset, const std::string& model_path,
                const std::string& prior_path, const std::string& pair, const std::string& phi_arg) {
  RunConfig cfg = resolve(c);
  if (!phi_arg.empty()) cfg.explain.phi = phi_from_arg(phi_arg);
  echo_config(cfg, c.out, false);
  const auto ds = open_dataset(dataset);
  const auto model = load_model(model_path);
  const Prior prior = prior_path.empty() ? prior_from_counts(std::vector<std::size_t>(ds.num_attributes(), 0))
                                         : load_prior(prior_path, ds.num_attributes());
  const auto [q, r] = split_pair(pair);
  const auto scorer = make_scorer(cfg, ds);
  const auto res = explain_pair(*scorer, model, ds.catalog, ds.image(r), ds.image(q), prior,
                                cfg.explain.phi, cfg.saliency);
  const fs::path out(c.out);
  const fs::path smap = out.parent_path() / (out.stem().string() + ".smap");
  io::save_saliency(smap, res.saliency);
  const auto body = res.to_json(smap.filename().string());
  io::write_file(out, body);
  std::string text;
  for (const auto& ra : res.ranked)
    text += ra.name + "  " + fmt_fixed(ra.score, 4) + "  (conf " + fmt_fixed(ra.confidence) + ", match " +
            fmt_fixed(ra.map_match) + ")\n";
  emit(c, ordered_json::parse(body), text);
  return 0;
}

int cmd_eval(const Common& c, const std::string& dataset, const std::string& model_path,
             const std::string& baseline_path, const std::string& prior_path, const std::string& phi_arg,
             const std::string& suite_arg) {
  RunConfig cfg = resolve(c);
  std::set<std::string> suite;
  {
    std::stringstream in(suite_arg);
    std::string tok;
    const std::set<std::string> known{"insertion", "deletion", "map", "top1", "removal"};
    while (std::getline(in, tok, ',')) {
      if (!known.count(tok)) throw InvalidArgument("unknown suite entry '" + tok + "'");
      suite.insert(tok);
    }
  }
  if (!suite.count("insertion") && !suite.count("deletion")) cfg.eval.curve_methods.clear();
  echo_config(cfg, c.out, false);
  const auto ds = open_dataset(dataset);
  const auto scorer = make_scorer(cfg, ds);
  const auto sane = load_model(model_path);
  std::optional<AttributeModel> baseline;
  if (!baseline_path.empty()) baseline = load_model(baseline_path);

  EvalInputs in;
  in.cfg = &cfg;
  in.ds = &ds;
  in.scorer = scorer.get();
  in.sane = &sane;
  in.classifier = baseline ? &*baseline : nullptr;
  in.prior = prior_path.empty() ? prior_from_counts(std::vector<std::size_t>(ds.num_attributes(), 0))
                                : load_prior(prior_path, ds.num_attributes());
  in.phi = phi_arg.empty() ? cfg.explain.phi : phi_from_arg(phi_arg);
  auto rep = evaluate(in);
  if (!suite.count("map")) rep.map.clear();
  if (!suite.count("top1")) rep.top1.clear();
  if (!suite.count("removal")) {
    rep.removal.clear();
    rep.removal_skipped.clear();
  }
  rep.fit["phi1"] = in.phi.phi1;
  rep.fit["phi2"] = in.phi.phi2;
  rep.fit["phi3"] = in.phi.phi3;
  const auto body = rep.to_json();
  io::write_file(c.out, body);

  std::ostringstream t;
  if (!rep.saliency.empty()) {
    t << "method            insertion      deletion\n";
    for (const auto& [k, v] : rep.saliency)
      t << std::left << std::setw(16) << k << "  " << fmt_fixed(v.insertion, 1) << " +- " << fmt_fixed(v.insertion_se, 1)
        << "   " << fmt_fixed(v.deletion, 1) << " +- " << fmt_fixed(v.deletion_se, 1) << "\n";
  }
  for (const auto& [k, v] : rep.map) t << "mAP " << k << "  " << fmt_fixed(v, 4) << "\n";
  for (const auto& [k, v] : rep.top1) t << "top-1 " << k << "  " << fmt_fixed(v) << "\n";
  for (const auto& [k, v] : rep.removal) t << "removal " << k << "  " << fmt_fixed(v, 2) << "\n";
  emit(c, ordered_json::parse(body), t.str());
  return 0;
}

int cmd_discover(const Common& c, const std::string& dataset, std::optional<int> k,
                 std::optional<int> clusters, std::optional<int> top_n, std::optional<int> patch) {
  RunConfig cfg = resolve(c);
  if (k) cfg.discovery.k_nn = *k;
  if (clusters) cfg.discovery.n_clusters = *clusters;
  if (top_n) cfg.discovery.top_n = *top_n;
  if (patch) cfg.discovery.patch = *patch;
  cfg.validate();
  echo_config(cfg, c.out, false);
  const auto ds = open_dataset(dataset);
  const auto scorer = make_scorer(cfg, ds);
  std::vector<std::size_t> pool(ds.num_images());
  std::iota(pool.begin(), pool.end(), 0);
  const auto a = discover(ds, pool, *scorer, cfg.discovery);
  const auto rem = removal_eval_discovered(a, ds, pool, *scorer, ds.pairs_in(Split::Test), cfg.discovery);

  ordered_json j;
  j["format"] = "simexplain-clusters";
  j["version"] = 1;
  j["n_clusters"] = a.n_clusters;
  j["centroids"] = a.centroids;
  auto patches = ordered_json::array();
  for (const auto& p : a.patches)
    patches.push_back({{"image", ds.ids[p.image]},
                       {"query", ds.ids[p.query]},
                       {"rect", {p.rect.y, p.rect.x, p.rect.size}},
                       {"cluster", p.cluster}});
  j["patches"] = patches;
  j["removal"] = {{"patch", 100.0 * rem.patch}, {"random", 100.0 * rem.random}, {"full_frame", 100.0 * rem.full_frame}};
  if (!ds.placements.empty()) j["purity"] = cluster_purity(a, ds);
  io::write_file(c.out, j.dump(2) + "\n");
  const fs::path out(c.out);
  io::write_pgm(out.parent_path() / (out.stem().string() + "_montage.pgm"), montage(a, ds, cfg.discovery.patch, 8));

  std::string text = std::to_string(a.patches.size()) + " patches in " + std::to_string(a.n_clusters) +
                     " clusters\nremoval delta x100: patch " + fmt_fixed(100.0 * rem.patch, 2) + ", random " +
                     fmt_fixed(100.0 * rem.random, 2) + ", full-frame " + fmt_fixed(100.0 * rem.full_frame, 2) + "\n";
  if (j.contains("purity")) text += "purity " + fmt_fixed(j["purity"].get<double>()) + "\n";
  emit(c, {{"out", c.out}, {"patches", a.patches.size()}, {"removal", j["removal"]},
           {"purity", j.contains("purity") ? j["purity"] : ordered_json()}},
       text);
  return 0;
}

int cmd_bench(const Common& c, const std::string& dataset, int n_pairs) {
  RunConfig cfg = resolve(c);
  if (n_pairs < 1) throw InvalidArgument("--pairs must be >= 1");
  if (!c.out.empty()) echo_config(cfg, c.out, false);
  const Dataset ds = dataset.empty() ? synth_generate(cfg.synth) : open_dataset(dataset);
  const auto scorer = make_scorer(cfg, ds);
  auto pairs = ds.pairs_in(Split::Test);
  if (pairs.empty()) pairs = ds.pairs;
  if (pairs.size() > static_cast<std::size_t>(n_pairs)) pairs.resize(n_pairs);

  ordered_json rows = ordered_json::array();
  std::ostringstream t;
  t << "Method            fixed-ref (s)   dual (s)\n";
  for (Method m : {Method::SlidingWindow, Method::RISE, Method::LIME, Method::Mask}) {
    ordered_json row{{"method", std::string(method_name(m))}};
    t << std::left << std::setw(18) << method_name(m);
    for (bool fixed : {true, false}) {
      const char* key = fixed ? "fixed" : "dual";
      if (m == Method::LIME && !fixed) {
        row[key] = nullptr;
        t << std::setw(16) << "-";
        continue;
      }
      SaliencyConfig sc = cfg.saliency;
      sc.method = m;
      sc.fixed_reference = fixed;
      const auto t0 = std::chrono::steady_clock::now();
      for (const auto& p : pairs) generate(*scorer, ds.image(p.reference_id), ds.image(p.query_id), sc);
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / pairs.size();
      row[key] = s;
      t << std::setw(16) << fmt_fixed(s, 4);
    }
    t << "\n";
    rows.push_back(row);
  }
  ordered_json j{{"pairs", pairs.size()}, {"seconds_per_map", rows}};
  if (!c.out.empty()) io::write_file(c.out, j.dump(2) + "\n");
  emit(c, j, t.str());
  return 0;
}

int cmd_pipeline(const Common& c) {
  const RunConfig cfg = resolve(c);
  const auto res = run_pipeline(cfg, c.out);
  ordered_json j = ordered_json::parse(res.report.to_json());
  j["seconds"] = res.seconds;
  std::ostringstream t;
  for (const auto& [k, v] : res.report.map) t << "mAP " << k << "  " << fmt_fixed(v, 4) << "\n";
  for (const auto& [k, v] : res.report.top1) t << "top-1 " << k << "  " << fmt_fixed(v) << "\n";
  for (const auto& [k, v] : res.report.removal) t << "removal " << k << "  " << fmt_fixed(v, 2) << "\n";
  double total = 0.0;
  for (const auto& [k, v] : res.seconds) total += v;
  t << "wrote " << c.out << "/report.json in " << fmt_fixed(total, 1) << "s\n";
  emit(c, j, t.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Similarity-model explanations: saliency, attribute explanations and evaluation"};
  app.require_subcommand(1);
  Common common;

  auto* synth = app.add_subcommand("synth", "generate the synthetic motif dataset");
  std::optional<int> n_images;
  add_common(synth, common);
  synth->add_option("--n-images", n_images, "number of images");

  SaliencyArgs sa;
  auto* sal = app.add_subcommand("saliency", "saliency maps for pairs, or the training bank");
  add_common(sal, common);
  sal->add_option("--dataset", sa.dataset, "dataset directory or manifest")->required();
  sal->add_option("--method", sa.method, "sliding, rise, lime or mask");
  sal->add_flag("--fixed-ref", sa.fixed, "perturb the query only");
  sal->add_flag("--dual", sa.dual, "perturb query and reference");
  sal->add_option("--pair", sa.pairs, "query:reference (repeatable)");
  sal->add_option("--split", sa.split, "every pair of this split");
  sal->add_flag("--bank", sa.bank, "heatmap-loss targets for the training images");

  std::string dataset, maps, model, baseline, prior, phi, pair, suite = "insertion,deletion,map,top1,removal";
  std::optional<double> lambda;
  auto* train = app.add_subcommand("train-attr", "train the attribute explanation model");
  add_common(train, common);
  train->add_option("--dataset", dataset)->required();
  train->add_option("--maps", maps, "saliency bank directory");
  train->add_option("--lambda", lambda, "heatmap loss weight");

  auto* pri = app.add_subcommand("prior", "attribute prior from validation pairs");
  add_common(pri, common);
  pri->add_option("--dataset", dataset)->required();
  pri->add_option("--model", model)->required();

  auto* fit = app.add_subcommand("fit-phi", "grid-search the ranking weights on validation pairs");
  add_common(fit, common);
  fit->add_option("--dataset", dataset)->required();
  fit->add_option("--model", model)->required();
  fit->add_option("--prior", prior)->required();

  auto* expl = app.add_subcommand("explain", "ranked attribute explanation of one pair");
  add_common(expl, common);
  expl->add_option("--dataset", dataset)->required();
  expl->add_option("--model", model)->required();
  expl->add_option("--prior", prior, "prior.json (uniform when absent)");
  expl->add_option("--pair", pair, "query:reference")->required();
  expl->add_option("--phi", phi, "phi1,phi2,phi3 or a phi.json path");

  auto* ev = app.add_subcommand("eval", "evaluation report");
  add_common(ev, common);
  ev->add_option("--dataset", dataset)->required();
  ev->add_option("--model", model)->required();
  ev->add_option("--baseline", baseline, "lambda = 0 model for comparison");
  ev->add_option("--prior", prior);
  ev->add_option("--phi", phi);
  ev->add_option("--suite", suite, "comma list of insertion,deletion,map,top1,removal");

  std::optional<int> k, clusters, top_n, patch;
  auto* disc = app.add_subcommand("discover", "saliency-guided attribute discovery");
  add_common(disc, common);
  disc->add_option("--dataset", dataset)->required();
  disc->add_option("--k", k, "nearest neighbours per query");
  disc->add_option("--clusters", clusters, "number of clusters");
  disc->add_option("--top-n", top_n, "patches kept per query");
  disc->add_option("--patch", patch, "patch side in pixels");

  int bench_pairs = 4;
  auto* bench = app.add_subcommand("bench", "wall time per saliency method");
  add_common(bench, common, false);
  bench->add_option("--dataset", dataset, "dataset (synthesized from the config when absent)");
  bench->add_option("--pairs", bench_pairs, "pairs timed per method");

  auto* pipe = app.add_subcommand("pipeline", "every stage end to end");
  add_common(pipe, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(common, n_images);
    if (sal->parsed()) return cmd_saliency(common, sa);
    if (train->parsed()) return cmd_train(common, dataset, maps, lambda);
    if (pri->parsed()) return cmd_prior(common, dataset, model);
    if (fit->parsed()) return cmd_fit(common, dataset, model, prior);
    if (expl->parsed()) return cmd_explain(common, dataset, model, prior, pair, phi);
    if (ev->parsed()) return cmd_eval(common, dataset, model, baseline, prior, phi, suite);
    if (disc->parsed()) return cmd_discover(common, dataset, k, clusters, top_n, patch);
    if (bench->parsed()) return cmd_bench(common, dataset, bench_pairs);
    if (pipe->parsed()) return cmd_pipeline(common);
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const ComputeError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 3;
  }
  return 2;
}
