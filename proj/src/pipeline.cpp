#include "simexplain/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "simexplain/discovery.hpp"
#include "simexplain/error.hpp"
#include "simexplain/external_scorer.hpp"
#include "simexplain/io.hpp"
#include "simexplain/linear_scorer.hpp"
#include "simexplain/parallel.hpp"
#include "simexplain/rng.hpp"
#include "simexplain/synth.hpp"
#include "simexplain/triplet_scorer.hpp"

namespace simexplain {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Stream ids for the seeded draws made here.
constexpr std::uint64_t kBankStream = 0xb4;
constexpr std::uint64_t kRandomRankStream = 0x3a;
constexpr std::uint64_t kRemovalStream = 0x3b;

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream) {
  auto rng = make_rng(seed, stream);
  return rng();
}

std::vector<double> similarity_row(const Scorer& scorer, const Dataset& ds, std::size_t image,
                                   std::span<const std::size_t> pool) {
  std::vector<double> s(pool.size());
  if (scorer.caps().can_embed) {
    const auto q = scorer.embed(ds.images[image]).data;
    for (std::size_t i = 0; i < pool.size(); ++i) s[i] = cosine(q, scorer.embed(ds.images[pool[i]]).data);
    return s;
  }
  std::vector<ImageTensor> others;
  others.reserve(pool.size());
  for (auto j : pool) others.push_back(ds.images[j]);
  return scorer.score_batch(ds.images[image], others);
}

class Timer {
 public:
  explicit Timer(std::map<std::string, double>& into) : into_(into) {}
  void lap(const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    into_[name] = std::chrono::duration<double>(now - last_).count();
    spdlog::info("{} done in {:.1f}s", name, into_[name]);
    last_ = now;
  }

 private:
  std::map<std::string, double>& into_;
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

std::vector<std::size_t> corpus_ids(const Dataset& ds, const std::vector<PairCase>& cases) {
  std::vector<std::size_t> out;
  for (const auto& c : cases) {
    out.push_back(ds.index_of(c.query_id));
    out.push_back(ds.index_of(c.reference_id));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

std::unique_ptr<Scorer> make_scorer(const RunConfig& cfg, const Dataset& ds) {
  if (ds.images.empty()) throw InvalidArgument("make_scorer: empty dataset");
  switch (cfg.scorer.kind) {
    case ScorerKind::Triplet: {
      TripletConfig tc = cfg.scorer.triplet;
      if (tc.relevant_attributes.empty()) tc.relevant_attributes = cfg.synth.resolved_relevant();
      return std::make_unique<TripletToyScorer>(TripletToyScorer::train(ds, tc));
    }
    case ScorerKind::Linear: {
      LinearToyOptions o;
      o.dim = cfg.scorer.linear_dim;
      o.seed = cfg.seed;
      return std::make_unique<LinearToyScorer>(ds.images.front().shape(), o);
    }
    case ScorerKind::External:
      return std::make_unique<ExternalScorer>(cfg.scorer.command, cfg.scorer.pool);
  }
  throw InvalidArgument("unknown scorer kind");
}

std::vector<std::size_t> most_similar(const Scorer& scorer, const Dataset& ds, std::size_t image,
                                      std::span<const std::size_t> pool, int k) {
  std::vector<std::size_t> cand;
  for (auto j : pool)
    if (j != image) cand.push_back(j);
  const auto s = similarity_row(scorer, ds, image, cand);
  std::vector<std::size_t> order(cand.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s[a] > s[b] || (s[a] == s[b] && cand[a] < cand[b]);
  });
  if (order.size() > static_cast<std::size_t>(std::max(k, 0))) order.resize(std::max(k, 0));
  std::vector<std::size_t> out;
  for (auto o : order) out.push_back(cand[o]);
  return out;
}

SaliencyBank build_bank(const Scorer& scorer, const Dataset& ds, const RunConfig& cfg) {
  const auto train = ds.images_in(Split::Train);
  SaliencyConfig sc = cfg.saliency;
  sc.method = Method::RISE;
  sc.fixed_reference = true;
  sc.rise.n_masks = cfg.bank.n_masks;

  std::vector<std::vector<SaliencyMap>> maps(train.size());
  for_each_chunk(train.size(), 1, default_exec(), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t t = b; t < e; ++t) {
      const std::size_t i = train[t];
      for (auto j : most_similar(scorer, ds, i, train, cfg.train.k)) {
        SaliencyConfig c = sc;
        c.seed = derived_seed(cfg.seed, kBankStream + (static_cast<std::uint64_t>(i) << 8) +
                                            (static_cast<std::uint64_t>(j) << 32));
        maps[t].push_back(generate(scorer, ds.images[j], ds.images[i], c));
      }
    }
  });
  SaliencyBank bank;
  for (std::size_t t = 0; t < train.size(); ++t)
    if (!maps[t].empty()) bank[ds.ids[train[t]]] = std::move(maps[t]);
  return bank;
}

std::vector<SaliencyMap> pair_saliency(const Scorer& scorer, const Dataset& ds,
                                       std::span<const ImagePair> pairs, const SaliencyConfig& cfg) {
  std::vector<SaliencyMap> out(pairs.size());
  for_each_chunk(pairs.size(), 1, default_exec(), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i)
      out[i] = generate(scorer, ds.image(pairs[i].reference_id), ds.image(pairs[i].query_id), cfg);
  });
  return out;
}

SaliencyConfig curve_method_config(const std::string& spec, const SaliencyConfig& base) {
  const auto slash = spec.find('/');
  if (slash == std::string::npos) throw ParseError("eval.curve_methods", "expected <method>/<fixed|dual>, got " + spec);
  const std::string mode = spec.substr(slash + 1);
  if (mode != "fixed" && mode != "dual") throw ParseError("eval.curve_methods", "mode must be fixed or dual: " + spec);
  SaliencyConfig c = base;
  c.method = parse_method(spec.substr(0, slash));
  c.fixed_reference = mode == "fixed";
  if (c.method == Method::LIME && !c.fixed_reference) throw Unsupported("LIME has no dual mode");
  return c;
}

std::string prior_to_json(const PriorResult& prior, const AttributeCatalog& catalog) {
  ordered_json j;
  j["format"] = "simexplain-prior";
  j["version"] = 1;
  j["attributes"] = catalog.names();
  j["p"] = prior.prior.p;
  j["counts"] = prior.counts;
  j["skipped"] = prior.skipped;
  return j.dump(2) + "\n";
}

Prior load_prior(const fs::path& path, std::size_t n_attributes) {
  json j;
  try {
    j = json::parse(io::read_file(path));
    if (j.at("format") != "simexplain-prior") throw ParseError("format", "not a prior file");
    Prior p{j.at("p").get<std::vector<double>>()};
    if (p.p.size() != n_attributes)
      throw InvalidData("prior has " + std::to_string(p.p.size()) + " entries, expected " +
                        std::to_string(n_attributes));
    return p;
  } catch (const json::exception& e) {
    throw ParseError(path.string(), e.what());
  }
}

std::string phi_to_json(const PhiFit& fit) {
  ordered_json j;
  j["format"] = "simexplain-phi";
  j["version"] = 1;
  j["phi"] = {fit.phi.phi1, fit.phi.phi2, fit.phi.phi3};
  j["val_accuracy"] = fit.accuracy;
  return j.dump(2) + "\n";
}

PhiWeights load_phi(const fs::path& path) {
  try {
    const auto j = json::parse(io::read_file(path));
    if (j.at("format") != "simexplain-phi") throw ParseError("format", "not a phi file");
    const auto v = j.at("phi").get<std::vector<double>>();
    if (v.size() != 3) throw ParseError("phi", "expected three weights");
    PhiWeights w{v[0], v[1], v[2]};
    w.validate();
    return w;
  } catch (const json::exception& e) {
    throw ParseError(path.string(), e.what());
  }
}

MetricsReport evaluate(const EvalInputs& in) {
  if (!in.cfg || !in.ds || !in.scorer || !in.sane) throw InvalidArgument("evaluate: missing input");
  const auto& cfg = *in.cfg;
  const auto& ds = *in.ds;
  const auto& scorer = *in.scorer;
  const int A = static_cast<int>(ds.num_attributes());
  MetricsReport rep;

  const auto val_img = ds.images_in(Split::Val);
  const auto test_img = ds.images_in(Split::Test);
  auto add_map = [&](const std::string& name, const AttributeModel& m) {
    std::size_t skipped = 0;
    if (!val_img.empty()) rep.map[name + "/val"] = model_map(m, ds, val_img, &skipped);
    if (!test_img.empty()) rep.map[name + "/test"] = model_map(m, ds, test_img, &skipped);
    rep.map_skipped_attributes = std::max(rep.map_skipped_attributes, skipped);
  };
  add_map("sane", *in.sane);
  if (in.classifier) add_map("classifier", *in.classifier);

  const auto test = ds.pairs_in(Split::Test);
  if (test.empty()) throw InvalidArgument("evaluate: no test pairs");
  const auto maps = in.test_maps.empty() ? pair_saliency(scorer, ds, test, cfg.saliency) : in.test_maps;
  const auto cases = build_cases(*in.sane, ds, test, maps);

  // Cases without ground truth cannot score a top-1 hit.
  std::vector<PairCase> labeled;
  for (const auto& c : cases)
    if (std::any_of(c.gt.begin(), c.gt.end(), [](auto v) { return v != 0; })) labeled.push_back(c);
  rep.pairs_skipped = cases.size() - labeled.size();
  if (labeled.empty()) throw InvalidData("evaluate: no test pair has ground-truth attributes");

  const PhiWeights conf_only{1.0, 0.0, 0.0}, match_only{0.0, 1.0, 0.0};
  std::vector<int> random_pick(labeled.size());
  {
    auto rng = make_rng(cfg.seed, kRandomRankStream);
    std::uniform_int_distribution<int> pick(0, A - 1);
    for (auto& r : random_pick) r = pick(rng);
  }
  auto top_of = [&](const PairCase& c, const PhiWeights& w) {
    return rank_attributes(explanation_scores(c, in.prior, w)).front();
  };
  std::vector<std::vector<std::uint8_t>> rows;
  std::vector<int> p_conf, p_match, p_sane;
  for (const auto& c : labeled) {
    rows.push_back(c.gt);
    p_conf.push_back(top_of(c, conf_only));
    p_match.push_back(top_of(c, match_only));
    p_sane.push_back(top_of(c, in.phi));
  }
  rep.top1["random"] = top1_accuracy(random_pick, rows);
  rep.top1["confidence"] = top1_accuracy(p_conf, rows);
  rep.top1["map_match"] = top1_accuracy(p_match, rows);
  rep.top1["sane"] = top1_accuracy(p_sane, rows);

  // Attribute removal over the test images; the explanation picks the
  // attribute, retrieval must lack it.
  {
    const auto corpus = corpus_ids(ds, labeled);
    std::vector<std::vector<double>> conf_cache;
    if (cfg.eval.removal_confidence_filter) {
      conf_cache.assign(ds.num_images(), {});
      for (auto i : corpus) conf_cache[i] = in.sane->forward(ds.images[i]).confidences;
    }
    auto eligible = [&](std::size_t image, int a) {
      if (ds.labels[image * A + a]) return false;
      return !cfg.eval.removal_confidence_filter || conf_cache[image][a] < 0.5 / A;
    };
    auto rng = make_rng(cfg.seed, kRemovalStream);
    std::uniform_int_distribution<int> pick(0, A - 1);
    auto run = [&](const std::string& name, auto&& choose) {
      std::vector<RemovalItem> items;
      for (std::size_t i = 0; i < labeled.size(); ++i)
        items.push_back({ds.index_of(labeled[i].query_id), ds.index_of(labeled[i].reference_id), choose(i)});
      const auto r = attribute_removal_delta(scorer, ds.images, items, corpus, eligible);
      rep.removal[name] = 100.0 * r.mean_delta;
      rep.removal_skipped[name] = r.skipped;
    };
    run("random", [&](std::size_t) { return pick(rng); });
    run("confidence", [&](std::size_t i) { return p_conf[i]; });
    run("sane", [&](std::size_t i) { return p_sane[i]; });
  }

  // Insertion / deletion on the first curve_pairs test pairs.
  const std::size_t n_curve = cfg.eval.curve_pairs == 0
                                  ? test.size()
                                  : std::min<std::size_t>(test.size(), cfg.eval.curve_pairs);
  for (const auto& spec : cfg.eval.curve_methods) {
    const auto sc = curve_method_config(spec, cfg.saliency);
    std::vector<Curve> ins(n_curve), del(n_curve);
    for_each_chunk(n_curve, 1, default_exec(), [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        const auto& ref = ds.image(test[i].reference_id);
        const auto& q = ds.image(test[i].query_id);
        const auto m = generate(scorer, ref, q, sc);
        ins[i] = insertion_curve(scorer, ref, q, m, cfg.eval.step_frac);
        del[i] = deletion_curve(scorer, ref, q, m, cfg.eval.step_frac);
      }
    });
    rep.saliency[spec] = summarize_curves(ins, del);
  }
  return rep;
}

PipelineResult run_pipeline(const RunConfig& cfg, const fs::path& out) {
  PipelineResult res;
  Timer timer(res.seconds);
  fs::create_directories(out);
  io::write_file(out / "config.json", cfg.to_json());

  const Dataset ds = synth_generate(cfg.synth, out / "dataset");
  timer.lap("synth");

  const auto scorer = make_scorer(cfg, ds);
  timer.lap("scorer");

  const auto bank = build_bank(*scorer, ds, cfg);
  save_bank(out / "bank", bank);
  timer.lap("bank");

  const auto sane = train_attribute_model(ds, bank, cfg.train);
  save_model(out / "model.sane", sane.model);
  std::optional<AttrTrainResult> baseline;
  if (cfg.train_baseline) {
    AttrTrainConfig tc = cfg.train;
    tc.lambda = 0.0;
    baseline = train_attribute_model(ds, bank, tc);
    save_model(out / "model.classifier", baseline->model);
  }
  timer.lap("train");

  const auto val = ds.pairs_in(Split::Val);
  if (val.empty()) throw InvalidArgument("pipeline: no validation pairs");
  const auto val_cases = build_cases(sane.model, ds, val, pair_saliency(*scorer, ds, val, cfg.saliency));
  const auto prior = estimate_prior(val_cases, static_cast<int>(ds.num_attributes()));
  io::write_file(out / "prior.json", prior_to_json(prior, ds.catalog));
  const auto fit = fit_phi(val_cases, prior.prior, cfg.explain.phi_step);
  io::write_file(out / "phi.json", phi_to_json(fit));
  timer.lap("prior_fit");

  const auto test = ds.pairs_in(Split::Test);
  EvalInputs in;
  in.cfg = &cfg;
  in.ds = &ds;
  in.scorer = scorer.get();
  in.sane = &sane.model;
  in.classifier = baseline ? &baseline->model : nullptr;
  in.prior = prior.prior;
  in.phi = fit.phi;
  in.test_maps = pair_saliency(*scorer, ds, test, cfg.saliency);

  fs::create_directories(out / "explanations");
  const auto test_cases = build_cases(sane.model, ds, test, in.test_maps);
  for (std::size_t i = 0; i < test_cases.size(); ++i) {
    const auto stem = std::to_string(i);
    const auto r = explain_case(test_cases[i], ds.catalog, prior.prior, fit.phi);
    io::save_saliency(out / "explanations" / (stem + ".smap"), r.saliency);
    io::write_file(out / "explanations" / (stem + ".json"), r.to_json(stem + ".smap"));
  }
  timer.lap("explain");

  res.report = evaluate(in);
  timer.lap("eval");

  auto& fitsec = res.report.fit;
  fitsec["phi1"] = fit.phi.phi1;
  fitsec["phi2"] = fit.phi.phi2;
  fitsec["phi3"] = fit.phi.phi3;
  fitsec["val_top1"] = fit.accuracy;
  fitsec["prior_skipped"] = static_cast<double>(prior.skipped);
  fitsec["sane_best_epoch"] = sane.best_epoch;
  fitsec["sane_best_val_map"] = sane.best_val_map;
  if (baseline) {
    fitsec["classifier_best_epoch"] = baseline->best_epoch;
    fitsec["classifier_best_val_map"] = baseline->best_val_map;
  }
  std::size_t bank_maps = 0;
  for (const auto& [id, v] : bank) bank_maps += v.size();
  fitsec["bank_maps"] = static_cast<double>(bank_maps);

  if (cfg.run_discovery) {
    std::vector<std::size_t> pool(ds.num_images());
    std::iota(pool.begin(), pool.end(), 0);
    const auto assign = discover(ds, pool, *scorer, cfg.discovery);
    const auto rem = removal_eval_discovered(assign, ds, pool, *scorer, test, cfg.discovery);
    res.report.discovery["patch"] = 100.0 * rem.patch;
    res.report.discovery["random"] = 100.0 * rem.random;
    res.report.discovery["full_frame"] = 100.0 * rem.full_frame;
    res.report.discovery["purity"] = cluster_purity(assign, ds);
    timer.lap("discovery");
  }

  io::write_file(out / "report.json", res.report.to_json());
  ordered_json t = ordered_json::object();
  for (const auto& [k, v] : res.seconds) t[k] = v;
  io::write_file(out / "timings.json", t.dump(2) + "\n");
  return res;
}

}  // namespace simexplain
