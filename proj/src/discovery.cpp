#include "simexplain/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "simexplain/error.hpp"
#include "simexplain/eval.hpp"
#include "simexplain/parallel.hpp"
#include "simexplain/rng.hpp"

namespace simexplain {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

int nearest_centroid(const std::vector<std::vector<double>>& centroids, const std::vector<double>& p) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(centroids[c], p);
    if (d < bd) {
      bd = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

void normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0)
    for (auto& x : v) x /= n;
}

}  // namespace

void DiscoveryConfig::validate(int height, int width) const {
  if (k_nn < 1 || peak_grid < 1 || top_n < 1 || patch < 1 || n_clusters < 1)
    throw InvalidArgument("discovery config: values must be positive");
  if (patch > height || patch > width)
    throw InvalidArgument("discovery config: patch larger than the image");
  saliency.validate();
}

int peak_bin(const SaliencyMap& map, int grid, bool* degenerate) {
  if (grid < 1 || map.data.empty()) throw InvalidArgument("peak_bin: bad grid or empty map");
  const auto it = std::max_element(map.data.begin(), map.data.end());
  if (degenerate)
    *degenerate = std::all_of(map.data.begin(), map.data.end(), [&](float v) { return v == *it; });
  const auto k = static_cast<int>(it - map.data.begin());
  const int y = k / map.cols, x = k % map.cols;
  const int by = static_cast<int>(static_cast<long long>(y) * grid / map.rows);
  const int bx = static_cast<int>(static_cast<long long>(x) * grid / map.cols);
  return by * grid + bx;
}

std::pair<int, int> peak_pixel(const SaliencyMap& map, int height, int width) {
  const auto k = static_cast<int>(std::max_element(map.data.begin(), map.data.end()) - map.data.begin());
  const int y = k / map.cols, x = k % map.cols;
  const int py = static_cast<int>((y + 0.5) * height / map.rows);
  const int px = static_cast<int>((x + 0.5) * width / map.cols);
  return {std::min(py, height - 1), std::min(px, width - 1)};
}

PatchRect patch_around(int cy, int cx, int size, int height, int width) {
  if (size > height || size > width) throw InvalidArgument("patch larger than the image");
  return {std::clamp(cy - size / 2, 0, height - size), std::clamp(cx - size / 2, 0, width - size), size};
}

ImageTensor crop_and_upsample(const ImageTensor& img, const PatchRect& r) {
  const int h = img.height(), w = img.width(), ch = img.channels();
  std::vector<double> out(img.size());
  for (int c = 0; c < ch; ++c) {
    Grid g(r.size, r.size);
    for (int y = 0; y < r.size; ++y)
      for (int x = 0; x < r.size; ++x) g(y, x) = img.at(r.y + y, r.x + x, c);
    const Grid up = resize_map(g, h, w, ResizeMode::Bilinear);
    for (std::size_t p = 0; p < up.size(); ++p) out[p * ch + c] = std::clamp(up.data[p], 0.0, 1.0);
  }
  return ImageTensor(img.shape(), std::move(out));
}

KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                    int max_iter) {
  const std::size_t n = points.size();
  if (k < 1) throw InvalidArgument("kmeans: k must be >= 1");
  if (n < static_cast<std::size_t>(k))
    throw InvalidArgument("kmeans: " + std::to_string(n) + " points for " + std::to_string(k) +
                          " clusters; use fewer clusters");
  auto rng = make_rng(seed, 0xc1);
  KMeansResult res;
  // k-means++ seeding.
  res.centroids.push_back(points[rng() % n]);
  std::vector<double> d2(n);
  while (res.centroids.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::numeric_limits<double>::infinity();
      for (const auto& c : res.centroids) d2[i] = std::min(d2[i], sq_dist(points[i], c));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0) {
      double u = uniform01(rng) * total;
      for (pick = 0; pick + 1 < n && u >= d2[pick]; ++pick) u -= d2[pick];
    } else {
      pick = rng() % n;
    }
    res.centroids.push_back(points[pick]);
  }

  res.assign.assign(n, -1);
  for (int it = 1; it <= max_iter; ++it) {
    bool changed = false;
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = nearest_centroid(res.centroids, points[i]);
      changed = changed || c != res.assign[i];
      res.assign[i] = c;
      obj += sq_dist(points[i], res.centroids[c]);
    }
    // Reseed empty clusters with the point farthest from its centroid.
    for (int c = 0; c < k; ++c) {
      if (std::find(res.assign.begin(), res.assign.end(), c) != res.assign.end()) continue;
      std::size_t far = 0;
      double fd = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = sq_dist(points[i], res.centroids[res.assign[i]]);
        const bool movable = std::count(res.assign.begin(), res.assign.end(), res.assign[i]) > 1;
        if (movable && d > fd) {
          fd = d;
          far = i;
        }
      }
      obj -= std::max(0.0, fd);
      res.assign[far] = c;
      res.centroids[c] = points[far];
      changed = true;
    }
    res.objective.push_back(obj);
    res.iterations = it;
    // Update step.
    const std::size_t dim = points[0].size();
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[res.assign[i]];
      for (std::size_t d = 0; d < dim; ++d) sums[res.assign[i]][d] += points[i][d];
    }
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0)
        for (std::size_t d = 0; d < dim; ++d) res.centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
    if (!changed) break;
  }
  return res;
}

std::vector<double> unit_embedding(const Scorer& scorer, const ImageTensor& img) {
  auto e = scorer.embed(img).data;
  normalize(e);
  return e;
}

ClusterAssignment discover(const Dataset& ds, std::span<const std::size_t> pool,
                           const Scorer& scorer, const DiscoveryConfig& cfg) {
  if (!scorer.caps().can_embed) throw Unsupported("discovery needs scorer embeddings");
  if (pool.size() < 2) throw InvalidArgument("discovery: pool needs at least two images");
  const auto& shape = ds.images[pool[0]].shape();
  cfg.validate(shape.height, shape.width);

  std::vector<std::vector<double>> emb(pool.size());
  for_each_chunk(pool.size(), 8, default_exec(), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) emb[i] = unit_embedding(scorer, ds.images[pool[i]]);
  });

  // Steps 1-5 per query, collected in query order.
  std::vector<std::vector<DiscoveredPatch>> per_query(pool.size());
  std::vector<std::vector<std::vector<double>>> per_query_emb(pool.size());
  for_each_chunk(pool.size(), 1, default_exec(), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t qi = b; qi < e; ++qi) {
      std::vector<std::pair<double, std::size_t>> sims;
      for (std::size_t j = 0; j < pool.size(); ++j) {
        if (j == qi) continue;
        double s = 0.0;
        for (std::size_t d = 0; d < emb[qi].size(); ++d) s += emb[qi][d] * emb[j][d];
        sims.emplace_back(s, j);
      }
      std::stable_sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
      });
      if (sims.size() > static_cast<std::size_t>(cfg.k_nn)) sims.resize(cfg.k_nn);

      const auto& q = ds.images[pool[qi]];
      std::vector<int> bins;
      for (const auto& [s, j] : sims)
        bins.push_back(peak_bin(generate(scorer, ds.images[pool[j]], q, cfg.saliency), cfg.peak_grid));
      std::map<int, int> freq;
      for (int bn : bins) ++freq[bn];
      int modal = bins.front(), best = 0;
      for (const auto& [bn, f] : freq)
        if (f > best) {
          best = f;
          modal = bn;
        }
      int kept = 0;
      for (std::size_t t = 0; t < sims.size() && kept < cfg.top_n; ++t) {
        if (bins[t] != modal) continue;
        ++kept;
        const std::size_t j = sims[t].second;
        const auto& r = ds.images[pool[j]];
        const auto ref_map = generate(scorer, q, r, cfg.saliency);
        const auto [py, px] = peak_pixel(ref_map, r.height(), r.width());
        const auto rect = patch_around(py, px, cfg.patch, r.height(), r.width());
        per_query[qi].push_back({pool[j], pool[qi], rect, -1});
        per_query_emb[qi].push_back(unit_embedding(scorer, crop_and_upsample(r, rect)));
      }
    }
  });

  ClusterAssignment out;
  out.n_clusters = cfg.n_clusters;
  std::vector<std::vector<double>> points;
  for (std::size_t qi = 0; qi < pool.size(); ++qi) {
    out.patches.insert(out.patches.end(), per_query[qi].begin(), per_query[qi].end());
    points.insert(points.end(), per_query_emb[qi].begin(), per_query_emb[qi].end());
  }
  if (points.size() < static_cast<std::size_t>(cfg.n_clusters))
    throw InvalidArgument("discovery produced " + std::to_string(points.size()) +
                          " patches for " + std::to_string(cfg.n_clusters) +
                          " clusters; lower n_clusters or raise k_nn/top_n");
  const auto km = kmeans(points, cfg.n_clusters, cfg.seed);
  out.centroids = km.centroids;
  out.objective = km.objective;
  out.image_clusters.assign(ds.num_images(), {});
  for (std::size_t i = 0; i < out.patches.size(); ++i) {
    out.patches[i].cluster = km.assign[i];
    out.image_clusters[out.patches[i].image].push_back(km.assign[i]);
  }
  for (auto& v : out.image_clusters) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return out;
}

ClusterAssignment random_assignment(const Dataset& ds, std::span<const std::size_t> pool,
                                    int n_clusters, std::uint64_t seed) {
  if (n_clusters < 1) throw InvalidArgument("random assignment: n_clusters must be >= 1");
  auto rng = make_rng(seed, 0x7a);
  ClusterAssignment out;
  out.n_clusters = n_clusters;
  out.image_clusters.assign(ds.num_images(), {});
  for (auto i : pool) out.image_clusters[i] = {static_cast<int>(rng() % static_cast<std::uint64_t>(n_clusters))};
  return out;
}

ClusterAssignment full_frame_assignment(const Dataset& ds, std::span<const std::size_t> pool,
                                        const Scorer& scorer, int n_clusters, std::uint64_t seed) {
  std::vector<std::vector<double>> points;
  for (auto i : pool) points.push_back(unit_embedding(scorer, ds.images[i]));
  const auto km = kmeans(points, n_clusters, seed);
  ClusterAssignment out;
  out.n_clusters = n_clusters;
  out.centroids = km.centroids;
  out.objective = km.objective;
  out.image_clusters.assign(ds.num_images(), {});
  for (std::size_t k = 0; k < pool.size(); ++k) out.image_clusters[pool[k]] = {km.assign[k]};
  return out;
}

double cluster_purity(const ClusterAssignment& a, const Dataset& ds) {
  if (a.patches.empty()) throw InvalidArgument("cluster_purity: no patches");
  if (ds.placements.empty()) throw InvalidArgument("cluster_purity: dataset has no placements");
  std::map<int, std::map<int, std::size_t>> counts;
  for (const auto& p : a.patches) {
    const int cy = p.rect.y + p.rect.size / 2, cx = p.rect.x + p.rect.size / 2;
    int motif = -1;
    for (const auto& pl : ds.placements[p.image])
      if (pl.contains(cy, cx)) motif = pl.attribute;
    if (motif < 0) {
      // Patch centre may sit between stripes or just off a motif near a
      // border clamp; fall back to the placement overlapping the patch most.
      int best_overlap = 0;
      for (const auto& pl : ds.placements[p.image]) {
        const int oy = std::max(0, std::min(pl.y + pl.h, p.rect.y + p.rect.size) - std::max(pl.y, p.rect.y));
        const int ox = std::max(0, std::min(pl.x + pl.w, p.rect.x + p.rect.size) - std::max(pl.x, p.rect.x));
        if (oy * ox > best_overlap) {
          best_overlap = oy * ox;
          motif = pl.attribute;
        }
      }
    }
    ++counts[p.cluster][motif];
  }
  std::size_t majority = 0;
  for (const auto& [c, m] : counts) {
    std::size_t best = 0;
    for (const auto& [motif, n] : m) best = std::max(best, n);
    majority += best;
  }
  return static_cast<double>(majority) / static_cast<double>(a.patches.size());
}

DiscoveryRemoval removal_eval_discovered(const ClusterAssignment& patch_assignment,
                                         const Dataset& ds, std::span<const std::size_t> pool,
                                         const Scorer& scorer, std::span<const ImagePair> pairs,
                                         const DiscoveryConfig& cfg) {
  const auto random = random_assignment(ds, pool, cfg.n_clusters, cfg.seed);
  const auto full = full_frame_assignment(ds, pool, scorer, cfg.n_clusters, cfg.seed);
  const std::vector<std::size_t> corpus(pool.begin(), pool.end());

  auto run = [&](const ClusterAssignment& a, const std::vector<int>& explained, std::size_t& skipped) {
    std::vector<RemovalItem> items;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (explained[i] < 0) {
        ++skipped;
        continue;
      }
      items.push_back({ds.index_of(pairs[i].query_id), ds.index_of(pairs[i].reference_id), explained[i]});
    }
    auto eligible = [&](std::size_t img, int attr) {
      const auto& cl = a.image_clusters[img];
      return !cl.empty() && !std::binary_search(cl.begin(), cl.end(), attr);
    };
    const auto r = attribute_removal_delta(scorer, ds.images, items, corpus, eligible);
    skipped += r.skipped;
    return r.mean_delta;
  };
  auto own_cluster = [&](const ClusterAssignment& a) {
    std::vector<int> out;
    for (const auto& p : pairs) {
      const auto& cl = a.image_clusters[ds.index_of(p.query_id)];
      out.push_back(cl.empty() ? -1 : cl.front());
    }
    return out;
  };

  std::vector<int> patch_explained(pairs.size());
  for_each_chunk(pairs.size(), 1, default_exec(), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto& q = ds.image(pairs[i].query_id);
      const auto m = generate(scorer, ds.image(pairs[i].reference_id), q, cfg.saliency);
      const auto [py, px] = peak_pixel(m, q.height(), q.width());
      const auto rect = patch_around(py, px, cfg.patch, q.height(), q.width());
      patch_explained[i] = nearest_centroid(patch_assignment.centroids,
                                            unit_embedding(scorer, crop_and_upsample(q, rect)));
    }
  });

  DiscoveryRemoval out;
  out.patch = run(patch_assignment, patch_explained, out.patch_skipped);
  out.random = run(random, own_cluster(random), out.random_skipped);
  out.full_frame = run(full, own_cluster(full), out.full_frame_skipped);
  return out;
}

}  // namespace simexplain
