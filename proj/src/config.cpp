#include "simexplain/config.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "json.hpp"

#include "simexplain/error.hpp"
#include "simexplain/io.hpp"
#include "simexplain/pipeline.hpp"

namespace simexplain {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads the keys of one JSON object, remembering which were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ParseError(path_.empty() ? "config" : path_, "expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ParseError(name(key), e.what());
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  Section child(const char* key) {
    used_.insert(key);
    return Section(j_.at(key), name(key));
  }

  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.contains(k)) throw ParseError(name(k.c_str()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <class T, class Parse>
void get_enum(Section& s, const char* key, T& out, Parse parse) {
  std::string v;
  if (!s.has(key)) return;
  s.get(key, v);
  try {
    out = parse(v);
  } catch (const ValidationError& e) {
    throw ParseError(s.name(key), e.what());
  }
}

ScorerKind parse_scorer_kind(std::string_view s) {
  if (s == "triplet") return ScorerKind::Triplet;
  if (s == "linear") return ScorerKind::Linear;
  if (s == "external") return ScorerKind::External;
  throw InvalidArgument("unknown scorer kind '" + std::string(s) + "'");
}

void read_saliency(Section s, SaliencyConfig& c) {
  get_enum(s, "method", c.method, parse_method);
  s.get("fixed_reference", c.fixed_reference);
  if (s.has("sliding")) {
    auto t = s.child("sliding");
    t.get("windows_query", c.sliding.windows_query);
    t.get("window_area_frac", c.sliding.window_area_frac);
    t.get("windows_ref", c.sliding.windows_ref);
    t.finish();
  }
  if (s.has("rise")) {
    auto t = s.child("rise");
    t.get("n_masks", c.rise.n_masks);
    t.get("grid", c.rise.grid);
    t.get("keep_prob", c.rise.keep_prob);
    t.get("n_ref_masks", c.rise.n_ref_masks);
    t.finish();
  }
  if (s.has("lime")) {
    auto t = s.child("lime");
    t.get("n_samples", c.lime.n_samples);
    get_enum(t, "segmentation", c.lime.segmentation, parse_segmentation);
    t.get("n_segments", c.lime.n_segments);
    t.get("lasso_alpha", c.lime.lasso_alpha);
    t.get("max_sweeps", c.lime.max_sweeps);
    t.finish();
  }
  if (s.has("mask")) {
    auto t = s.child("mask");
    t.get("grid", c.mask.grid);
    t.get("iters", c.mask.iters);
    t.get("lr", c.mask.lr);
    if (t.has("tv_weight")) {
      // Numbers, or the string "inf" for the constant-mask limit.
      json v;
      t.get("tv_weight", v);
      if (v.is_string() && v.get<std::string>() == "inf")
        c.mask.tv_weight = std::numeric_limits<double>::infinity();
      else if (v.is_number())
        c.mask.tv_weight = v.get<double>();
      else
        throw ParseError(t.name("tv_weight"), "expected a number or \"inf\"");
    }
    t.get("l1_weight", c.mask.l1_weight);
    get_enum(t, "perturb", c.mask.perturb, parse_perturbation);
    t.get("score_sign", c.mask.score_sign);
    t.get("noise_sigma", c.mask.noise_sigma);
    t.get("blur_sigma", c.mask.blur_sigma);
    t.get("finite_difference", c.mask.finite_difference);
    t.get("fd_step", c.mask.fd_step);
    t.finish();
  }
  s.finish();
}

ordered_json saliency_json(const SaliencyConfig& c) {
  return {{"method", std::string(method_name(c.method))},
          {"fixed_reference", c.fixed_reference},
          {"sliding",
           {{"windows_query", c.sliding.windows_query},
            {"window_area_frac", c.sliding.window_area_frac},
            {"windows_ref", c.sliding.windows_ref}}},
          {"rise",
           {{"n_masks", c.rise.n_masks},
            {"grid", c.rise.grid},
            {"keep_prob", c.rise.keep_prob},
            {"n_ref_masks", c.rise.n_ref_masks}}},
          {"lime",
           {{"n_samples", c.lime.n_samples},
            {"segmentation", std::string(segmentation_name(c.lime.segmentation))},
            {"n_segments", c.lime.n_segments},
            {"lasso_alpha", c.lime.lasso_alpha},
            {"max_sweeps", c.lime.max_sweeps}}},
          {"mask",
           {{"grid", c.mask.grid},
            {"iters", c.mask.iters},
            {"lr", c.mask.lr},
            {"tv_weight", std::isinf(c.mask.tv_weight) ? json("inf") : json(c.mask.tv_weight)},
            {"l1_weight", c.mask.l1_weight},
            {"perturb", std::string(perturbation_name(c.mask.perturb))},
            {"score_sign", c.mask.score_sign},
            {"noise_sigma", c.mask.noise_sigma},
            {"blur_sigma", c.mask.blur_sigma},
            {"finite_difference", c.mask.finite_difference},
            {"fd_step", c.mask.fd_step}}}};
}

}  // namespace

std::string_view scorer_kind_name(ScorerKind k) {
  switch (k) {
    case ScorerKind::Triplet: return "triplet";
    case ScorerKind::Linear: return "linear";
    case ScorerKind::External: return "external";
  }
  return "?";
}

void RunConfig::propagate_seed() {
  synth.seed = seed;
  scorer.triplet.seed = seed;
  saliency.seed = seed;
  train.seed = seed;
  discovery.seed = seed;
  discovery.saliency.seed = seed;
}

void RunConfig::validate() const {
  saliency.validate();
  train.validate();
  explain.phi.validate();
  if (!(explain.phi_step > 0 && explain.phi_step <= 1)) throw InvalidArgument("explain.phi_step must be in (0,1]");
  if (!(eval.step_frac > 0 && eval.step_frac <= 1)) throw InvalidArgument("eval.step_frac must be in (0,1]");
  if (eval.curve_pairs < 0) throw InvalidArgument("eval.curve_pairs must be >= 0");
  if (scorer.kind == ScorerKind::External && scorer.command.empty())
    throw InvalidArgument("external scorer needs a command");
  if (scorer.pool < 1) throw InvalidArgument("scorer.pool must be >= 1");
  if (bank.n_masks < 1) throw InvalidArgument("bank.n_masks must be >= 1");
  for (const auto& m : eval.curve_methods) curve_method_config(m, saliency);
  discovery.validate(synth.side, synth.side);
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("config", e.what());
  }
  RunConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("threads", c.threads);
  root.get("run_discovery", c.run_discovery);
  root.get("train_baseline", c.train_baseline);
  if (root.has("synth")) {
    auto s = root.child("synth");
    s.get("n_images", c.synth.n_images);
    s.get("side", c.synth.side);
    s.get("n_attributes", c.synth.n_attributes);
    s.get("min_motifs", c.synth.min_motifs);
    s.get("max_motifs", c.synth.max_motifs);
    s.get("noise", c.synth.noise);
    s.get("background", c.synth.background);
    s.get("relevant_attributes", c.synth.relevant_attributes);
    s.get("pairs_per_query", c.synth.pairs_per_query);
    s.get("train_frac", c.synth.train_frac);
    s.get("val_frac", c.synth.val_frac);
    s.finish();
  }
  if (root.has("scorer")) {
    auto s = root.child("scorer");
    get_enum(s, "kind", c.scorer.kind, parse_scorer_kind);
    s.get("linear_dim", c.scorer.linear_dim);
    s.get("command", c.scorer.command);
    s.get("pool", c.scorer.pool);
    if (s.has("triplet")) {
      auto t = s.child("triplet");
      t.get("dim", c.scorer.triplet.dim);
      t.get("features", c.scorer.triplet.features);
      t.get("margin", c.scorer.triplet.margin);
      t.get("epochs", c.scorer.triplet.epochs);
      t.get("lr", c.scorer.triplet.lr);
      t.get("weight_decay", c.scorer.triplet.weight_decay);
      t.get("triplets_per_epoch", c.scorer.triplet.triplets_per_epoch);
      t.finish();
    }
    s.finish();
  }
  if (root.has("saliency")) read_saliency(root.child("saliency"), c.saliency);
  if (root.has("bank")) {
    auto s = root.child("bank");
    s.get("n_masks", c.bank.n_masks);
    s.finish();
  }
  if (root.has("train")) {
    auto s = root.child("train");
    s.get("epochs", c.train.epochs);
    s.get("lr", c.train.lr);
    s.get("lambda", c.train.lambda);
    s.get("k", c.train.k);
    s.get("batch", c.train.batch);
    s.get("filters", c.train.filters);
    s.get("ksize", c.train.ksize);
    s.finish();
  }
  if (root.has("explain")) {
    auto s = root.child("explain");
    std::vector<double> phi;
    s.get("phi", phi);
    if (!phi.empty()) {
      if (phi.size() != 3) throw ParseError("explain.phi", "expected three weights");
      c.explain.phi = {phi[0], phi[1], phi[2]};
    }
    s.get("phi_step", c.explain.phi_step);
    s.finish();
  }
  if (root.has("eval")) {
    auto s = root.child("eval");
    s.get("step_frac", c.eval.step_frac);
    s.get("curve_methods", c.eval.curve_methods);
    s.get("curve_pairs", c.eval.curve_pairs);
    s.get("removal_confidence_filter", c.eval.removal_confidence_filter);
    s.finish();
  }
  if (root.has("discovery")) {
    auto s = root.child("discovery");
    s.get("k_nn", c.discovery.k_nn);
    s.get("peak_grid", c.discovery.peak_grid);
    s.get("top_n", c.discovery.top_n);
    s.get("patch", c.discovery.patch);
    s.get("n_clusters", c.discovery.n_clusters);
    if (s.has("saliency")) read_saliency(s.child("saliency"), c.discovery.saliency);
    s.finish();
  }
  root.finish();
  c.propagate_seed();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(io::read_file(path));
}

std::string RunConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["threads"] = threads;
  j["run_discovery"] = run_discovery;
  j["train_baseline"] = train_baseline;
  j["synth"] = {{"n_images", synth.n_images},
                {"side", synth.side},
                {"n_attributes", synth.n_attributes},
                {"min_motifs", synth.min_motifs},
                {"max_motifs", synth.max_motifs},
                {"noise", synth.noise},
                {"background", synth.background},
                {"relevant_attributes", synth.resolved_relevant()},
                {"pairs_per_query", synth.pairs_per_query},
                {"train_frac", synth.train_frac},
                {"val_frac", synth.val_frac}};
  j["scorer"] = {{"kind", std::string(scorer_kind_name(scorer.kind))},
                 {"linear_dim", scorer.linear_dim},
                 {"command", scorer.command},
                 {"pool", scorer.pool},
                 {"triplet",
                  {{"dim", scorer.triplet.dim},
                   {"features", scorer.triplet.features},
                   {"margin", scorer.triplet.margin},
                   {"epochs", scorer.triplet.epochs},
                   {"lr", scorer.triplet.lr},
                   {"weight_decay", scorer.triplet.weight_decay},
                   {"triplets_per_epoch", scorer.triplet.triplets_per_epoch}}}};
  j["saliency"] = saliency_json(saliency);
  j["bank"] = {{"n_masks", bank.n_masks}};
  j["train"] = {{"epochs", train.epochs}, {"lr", train.lr},         {"lambda", train.lambda},
                {"k", train.k},           {"batch", train.batch},   {"filters", train.filters},
                {"ksize", train.ksize}};
  j["explain"] = {{"phi", {explain.phi.phi1, explain.phi.phi2, explain.phi.phi3}},
                  {"phi_step", explain.phi_step}};
  j["eval"] = {{"step_frac", eval.step_frac},
               {"curve_methods", eval.curve_methods},
               {"curve_pairs", eval.curve_pairs},
               {"removal_confidence_filter", eval.removal_confidence_filter}};
  j["discovery"] = {{"k_nn", discovery.k_nn},
                    {"peak_grid", discovery.peak_grid},
                    {"top_n", discovery.top_n},
                    {"patch", discovery.patch},
                    {"n_clusters", discovery.n_clusters},
                    {"saliency", saliency_json(discovery.saliency)}};
  return j.dump(2) + "\n";
}

}  // namespace simexplain
