#include "simexplain/attrmodel.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "simexplain/error.hpp"
#include "simexplain/io.hpp"
#include "simexplain/rng.hpp"

namespace simexplain {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::pair<int, int> cell_range(int i, int extent) {
  const int lo = static_cast<int>(static_cast<long long>(i) * extent / kMatchResolution);
  int hi = static_cast<int>(static_cast<long long>(i + 1) * extent / kMatchResolution);
  return {lo, std::max(hi, lo + 1)};
}

}  // namespace

FeatureExtractor::FeatureExtractor(ImageShape input, int filters, int ksize, std::uint64_t seed)
    : input_(input), filters_(filters), ksize_(ksize), seed_(seed) {
  if (filters < 1 || ksize < 1 || ksize % 2 == 0)
    throw InvalidArgument("extractor: filters >= 1 and odd ksize required");
  if (input.height < kMatchResolution || input.width < kMatchResolution || input.channels < 1)
    throw InvalidArgument("extractor: image smaller than the match resolution");
  auto rng = make_rng(seed, 0xfe);
  const int taps = ksize * ksize * input.channels;
  std::normal_distribution<double> w(0.0, 1.0 / std::sqrt(static_cast<double>(taps)));
  std::uniform_real_distribution<double> b(-0.3, 0.3);
  weight_.resize(static_cast<std::size_t>(filters) * taps);
  for (auto& v : weight_) v = w(rng);
  bias_.resize(filters);
  for (auto& v : bias_) v = b(rng);
}

FeatureGrid FeatureExtractor::extract(const ImageTensor& image) const {
  if (!(image.shape() == input_)) throw InvalidArgument("extractor: image shape mismatch");
  const int h = input_.height, w = input_.width, ch = input_.channels, r = ksize_ / 2;
  const int taps = ksize_ * ksize_ * ch;
  FeatureGrid out{filters_, std::vector<double>(static_cast<std::size_t>(FeatureGrid::kCells) * filters_, 0.0)};
  std::vector<double> patch(taps);
  std::vector<int> cell_of_row(h), cell_of_col(w);
  for (int i = 0; i < kMatchResolution; ++i) {
    auto [y0, y1] = cell_range(i, h);
    for (int y = y0; y < y1; ++y) cell_of_row[y] = i;
    auto [x0, x1] = cell_range(i, w);
    for (int x = x0; x < x1; ++x) cell_of_col[x] = i;
  }
  std::vector<int> cell_pixels(FeatureGrid::kCells, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int t = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = y + dy, xx = x + dx;
          const bool in = yy >= 0 && yy < h && xx >= 0 && xx < w;
          for (int c = 0; c < ch; ++c) patch[t++] = in ? image.at(yy, xx, c) : 0.0;
        }
      const int cell = cell_of_row[y] * kMatchResolution + cell_of_col[x];
      ++cell_pixels[cell];
      double* acc = out.data.data() + static_cast<std::size_t>(cell) * filters_;
      for (int f = 0; f < filters_; ++f) {
        const double* wf = weight_.data() + static_cast<std::size_t>(f) * taps;
        double s = bias_[f];
        for (int k = 0; k < taps; ++k) s += wf[k] * patch[k];
        acc[f] += std::max(0.0, s);
      }
    }
  for (int c = 0; c < FeatureGrid::kCells; ++c)
    for (int f = 0; f < filters_; ++f) out.data[static_cast<std::size_t>(c) * filters_ + f] /= cell_pixels[c];
  return out;
}

FeatureGrid AttributeModel::features(const ImageTensor& image) const {
  auto f = extractor.extract(image);
  const int d = dim();
  for (int c = 0; c < FeatureGrid::kCells; ++c)
    for (int k = 0; k < d; ++k) {
      auto& v = f.data[static_cast<std::size_t>(c) * d + k];
      v = (v - feat_mean[k]) / feat_std[k];
    }
  return f;
}

AttrPrediction AttributeModel::forward_features(const FeatureGrid& f) const {
  const int d = dim();
  if (f.dim != d) throw InvalidArgument("forward: feature dim mismatch");
  AttrPrediction p;
  p.maps.assign(n_attributes, Grid(kMatchResolution, kMatchResolution));
  p.logits.assign(n_attributes, 0.0);
  for (int a = 0; a < n_attributes; ++a) {
    const double* wa = head.data() + static_cast<std::size_t>(a) * d;
    double sum = 0.0;
    for (int c = 0; c < FeatureGrid::kCells; ++c) {
      const double* fc = f.cell(c);
      double s = bias[a];
      for (int k = 0; k < d; ++k) s += wa[k] * fc[k];
      p.maps[a].data[c] = s;
      sum += s;
    }
    p.logits[a] = sum / FeatureGrid::kCells;
  }
  const double mx = *std::max_element(p.logits.begin(), p.logits.end());
  p.confidences.resize(n_attributes);
  double z = 0.0;
  for (int a = 0; a < n_attributes; ++a) z += p.confidences[a] = std::exp(p.logits[a] - mx);
  for (auto& v : p.confidences) v /= z;
  return p;
}

AttrPrediction AttributeModel::forward(const ImageTensor& image) const {
  return forward_features(features(image));
}

void AttributeModel::validate() const {
  const int d = dim();
  if (n_attributes < 1 || d < 1) throw InvalidData("model: empty head");
  if (head.size() != static_cast<std::size_t>(n_attributes) * d || bias.size() != static_cast<std::size_t>(n_attributes) ||
      feat_mean.size() != static_cast<std::size_t>(d) || feat_std.size() != static_cast<std::size_t>(d))
    throw InvalidData("model: parameter sizes do not match dims");
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(head) || !finite(bias) || !finite(feat_mean) || !finite(feat_std))
    throw InvalidData("model: non-finite parameter");
  for (double s : feat_std)
    if (s <= 0) throw InvalidData("model: feature scale must be positive");
}

std::vector<double> scaled_labels(std::span<const std::uint8_t> row) {
  const auto positives = std::count(row.begin(), row.end(), std::uint8_t{1});
  if (positives == 0) return {};
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = row[i] ? 1.0 / static_cast<double>(positives) : 0.0;
  return out;
}

double huber_loss(std::span<const double> conf, std::span<const double> labels) {
  if (conf.size() != labels.size()) throw InvalidArgument("huber_loss: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < conf.size(); ++i) {
    const double d = labels[i] - conf[i];
    total += std::abs(d) <= 1.0 ? 0.5 * d * d : d;
  }
  return total;
}

bool huber_quadratic_only(std::span<const double> conf, std::span<const double> labels) {
  for (std::size_t i = 0; i < conf.size(); ++i)
    if (std::abs(labels[i] - conf[i]) > 1.0) return false;
  return true;
}

double heatmap_loss(std::span<const Grid> saliency, std::span<const Grid> gt_maps) {
  if (saliency.empty() || gt_maps.empty()) return 0.0;
  for (const auto* set : {&saliency, &gt_maps})
    for (const auto& g : *set)
      if (g.rows != saliency[0].rows || g.cols != saliency[0].cols)
        throw InvalidArgument("heatmap_loss: map resolutions differ");
  double total = 0.0;
  for (const auto& m : saliency) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& n : gt_maps) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < m.size(); ++k) d2 += (m.data[k] - n.data[k]) * (m.data[k] - n.data[k]);
      best = std::min(best, std::sqrt(d2));
    }
    total += best;
  }
  return total / static_cast<double>(saliency.size());
}

void AttrTrainConfig::validate() const {
  if (epochs < 1 || k < 1 || batch < 1 || filters < 1 || ksize < 1)
    throw InvalidArgument("train config: counts must be >= 1");
  if (!(lr > 0) || !std::isfinite(lr)) throw InvalidArgument("train config: lr must be > 0");
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw InvalidArgument("train config: lambda must be >= 0");
}

void save_model(const fs::path& path, const AttributeModel& m) {
  m.validate();
  std::string buf = "SANE1";
  const auto in = m.extractor.input();
  io::put_u64(buf, m.extractor.seed());
  for (int v : {in.height, in.width, in.channels, m.extractor.filters(), m.extractor.ksize(), m.n_attributes})
    io::put_u32(buf, static_cast<std::uint32_t>(v));
  for (const auto* v : {&m.feat_mean, &m.feat_std, &m.head, &m.bias})
    for (double x : *v) io::put_f32(buf, static_cast<float>(x));
  io::write_file(path, buf);
}

AttributeModel load_model(const fs::path& path) {
  io::ByteReader r(io::read_file(path), path.string());
  r.expect_magic("SANE1");
  const auto seed = r.u64("seed");
  const int h = static_cast<int>(r.u32("height")), w = static_cast<int>(r.u32("width"));
  const int c = static_cast<int>(r.u32("channels")), f = static_cast<int>(r.u32("filters"));
  const int k = static_cast<int>(r.u32("ksize")), a = static_cast<int>(r.u32("attributes"));
  if (h > 1 << 14 || w > 1 << 14 || c > 64 || f > 1 << 12 || k > 63 || a > 1 << 16)
    throw ParseError("model", "implausible dimensions");
  AttributeModel m;
  m.extractor = FeatureExtractor(ImageShape{h, w, c}, f, k, seed);
  m.n_attributes = a;
  auto read = [&](std::vector<double>& v, std::size_t n, const char* field) {
    v.resize(n);
    for (auto& x : v) x = r.f32(field);
  };
  read(m.feat_mean, f, "feat_mean");
  read(m.feat_std, f, "feat_std");
  read(m.head, static_cast<std::size_t>(a) * f, "head");
  read(m.bias, a, "bias");
  r.expect_end();
  m.validate();
  return m;
}

void save_bank(const fs::path& dir, const SaliencyBank& bank) {
  fs::create_directories(dir);
  json index = {{"format", "simexplain-bank"}, {"version", 1}, {"entries", json::array()}};
  for (const auto& [id, maps] : bank) {
    json files = json::array();
    for (std::size_t j = 0; j < maps.size(); ++j) {
      const std::string name = id + "_" + std::to_string(j) + ".smap";
      io::save_saliency(dir / name, maps[j]);
      files.push_back(name);
    }
    index["entries"].push_back({{"image", id}, {"maps", files}});
  }
  io::write_file(dir / "index.json", index.dump(2) + "\n");
}

SaliencyBank load_bank(const fs::path& dir) {
  json index;
  try {
    index = json::parse(io::read_file(dir / "index.json"));
  } catch (const json::exception& e) {
    throw ParseError("bank index", e.what());
  }
  if (index.value("format", std::string()) != "simexplain-bank")
    throw ParseError("format", "expected \"simexplain-bank\"");
  SaliencyBank bank;
  try {
    for (const auto& e : index.at("entries")) {
      auto& maps = bank[e.at("image").get<std::string>()];
      for (const auto& f : e.at("maps")) maps.push_back(io::load_saliency(dir / f.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw ParseError("bank index", e.what());
  }
  return bank;
}

}  // namespace simexplain
