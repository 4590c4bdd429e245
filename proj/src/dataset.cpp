#include "simexplain/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "simexplain/error.hpp"
#include "simexplain/io.hpp"

namespace simexplain {

using nlohmann::json;
namespace fs = std::filesystem;

AttributeCatalog::AttributeCatalog(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw InvalidData("attribute catalog must not be empty");
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw InvalidData("attribute names must be nonempty");
    if (!seen.insert(n).second) throw InvalidData("duplicate attribute name '" + n + "'");
  }
}

std::optional<std::size_t> AttributeCatalog::find(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ParseError("split", "unknown split '" + std::string(s) + "'");
}

std::size_t Dataset::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw IntegrityError("unknown image id '" + id + "'");
  return it->second;
}

std::vector<std::uint8_t> Dataset::label_row(std::size_t i) const {
  const std::size_t a = num_attributes();
  return {labels.begin() + static_cast<std::ptrdiff_t>(i * a),
          labels.begin() + static_cast<std::ptrdiff_t>((i + 1) * a)};
}

std::vector<ImagePair> Dataset::pairs_in(Split s) const {
  std::vector<ImagePair> out;
  std::copy_if(pairs.begin(), pairs.end(), std::back_inserter(out),
               [s](const ImagePair& p) { return p.split == s; });
  return out;
}

std::vector<std::size_t> Dataset::images_in(Split s) const {
  std::vector<std::size_t> out;
  if (!image_splits.empty()) {
    for (std::size_t i = 0; i < image_splits.size(); ++i)
      if (image_splits[i] == s) out.push_back(i);
    return out;
  }
  std::unordered_set<std::size_t> seen;
  for (const auto& p : pairs) {
    if (p.split != s) continue;
    for (const auto* id : {&p.query_id, &p.reference_id}) {
      const auto i = index_of(*id);
      if (seen.insert(i).second) out.push_back(i);
    }
  }
  return out;
}

void Dataset::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!index_.emplace(ids[i], i).second) throw IntegrityError("duplicate image id '" + ids[i] + "'");
  }
}

void Dataset::validate() const {
  if (ids.size() != images.size()) throw IntegrityError("ids/images length mismatch");
  if (labels.size() != images.size() * num_attributes())
    throw IntegrityError("label matrix must be N x A");
  for (auto v : labels)
    if (v > 1) throw InvalidData("label values must be 0 or 1");
  std::vector<std::string> missing;
  for (const auto& p : pairs) {
    for (const auto* id : {&p.query_id, &p.reference_id})
      if (!index_.contains(*id)) missing.push_back(*id);
  }
  if (!missing.empty()) {
    std::string msg = "pairs reference missing image ids:";
    for (const auto& m : missing) msg += " " + m;
    throw IntegrityError(msg);
  }
  std::map<std::pair<std::string, std::string>, Split> seen;
  for (const auto& p : pairs) {
    auto [it, fresh] = seen.emplace(std::make_pair(p.query_id, p.reference_id), p.split);
    if (!fresh && it->second != p.split)
      throw IntegrityError("pair " + p.query_id + "," + p.reference_id + " appears in two splits");
  }
  if (!image_splits.empty() && image_splits.size() != images.size())
    throw IntegrityError("image splits must cover every image");
  if (!placements.empty() && placements.size() != images.size())
    throw IntegrityError("placements must cover every image");
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

template <class T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw ParseError(key, "missing required field");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(key, e.what());
  }
}

}  // namespace

Dataset load_dataset(const fs::path& manifest_path) {
  json m;
  try {
    m = json::parse(io::read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw ParseError("manifest", e.what());
  }
  const fs::path base = manifest_path.parent_path();
  if (m.value("format", std::string()) != "simexplain-dataset")
    throw ParseError("format", "expected \"simexplain-dataset\"");
  if (required<int>(m, "version") != 1) throw ParseError("version", "unsupported version");

  Dataset ds;
  ds.catalog = AttributeCatalog(required<std::vector<std::string>>(m, "attributes"));
  if (!m.contains("images") || !m["images"].is_array()) throw ParseError("images", "expected array");
  std::size_t with_split = 0;
  for (const auto& e : m["images"]) {
    ds.ids.push_back(required<std::string>(e, "id"));
    ds.images.push_back(io::load_image(base / required<std::string>(e, "path")));
    if (e.contains("split")) {
      ds.image_splits.push_back(parse_split(required<std::string>(e, "split")));
      ++with_split;
    }
  }
  if (with_split != 0 && with_split != ds.ids.size())
    throw ParseError("images", "split must be given for every image or for none");
  ds.rebuild_index();

  {
    std::ifstream in(base / required<std::string>(m, "labels"));
    if (!in) throw ParseError("labels", "cannot open label file");
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      if (line.empty() || line == "\r") continue;
      auto cells = split_csv(line);
      if (cells.size() != ds.num_attributes())
        throw ParseError("labels", "row " + std::to_string(row) + " has " +
                                       std::to_string(cells.size()) + " columns, expected " +
                                       std::to_string(ds.num_attributes()));
      for (const auto& c : cells) {
        if (c != "0" && c != "1") throw ParseError("labels", "value '" + c + "' is not 0/1");
        ds.labels.push_back(c == "1" ? 1 : 0);
      }
      ++row;
    }
    if (row != ds.num_images())
      throw ParseError("labels", std::to_string(row) + " rows for " +
                                     std::to_string(ds.num_images()) + " images");
  }
  {
    std::ifstream in(base / required<std::string>(m, "pairs"));
    if (!in) throw ParseError("pairs", "cannot open pair file");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line == "\r") continue;
      auto cells = split_csv(line);
      if (cells.size() != 3) throw ParseError("pairs", "expected query_id,reference_id,split");
      ds.pairs.push_back({cells[0], cells[1], parse_split(cells[2])});
    }
  }
  if (m.contains("placements")) {
    ds.placements.resize(ds.num_images());
    for (const auto& [id, list] : m["placements"].items()) {
      auto& dst = ds.placements[ds.index_of(id)];
      for (const auto& p : list) {
        auto v = p.get<std::vector<int>>();
        if (v.size() != 5) throw ParseError("placements", "expected [attr,y,x,h,w]");
        dst.push_back({v[0], v[1], v[2], v[3], v[4]});
      }
    }
  }
  ds.validate();
  return ds;
}

void save_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir / "images");
  json m;
  m["format"] = "simexplain-dataset";
  m["version"] = 1;
  m["attributes"] = ds.catalog.names();
  m["images"] = json::array();
  for (std::size_t i = 0; i < ds.num_images(); ++i) {
    const std::string rel = "images/" + ds.ids[i] + ".grid";
    io::save_image(dir / rel, ds.images[i]);
    json e = {{"id", ds.ids[i]}, {"path", rel}};
    if (!ds.image_splits.empty()) e["split"] = std::string(split_name(ds.image_splits[i]));
    m["images"].push_back(e);
  }
  m["labels"] = "labels.csv";
  m["pairs"] = "pairs.csv";
  if (!ds.placements.empty()) {
    json pl = json::object();
    for (std::size_t i = 0; i < ds.num_images(); ++i) {
      json list = json::array();
      for (const auto& p : ds.placements[i]) list.push_back({p.attribute, p.y, p.x, p.h, p.w});
      pl[ds.ids[i]] = list;
    }
    m["placements"] = pl;
  }
  io::write_file(dir / "manifest.json", m.dump(2) + "\n");

  std::string labels;
  for (std::size_t i = 0; i < ds.num_images(); ++i) {
    for (std::size_t a = 0; a < ds.num_attributes(); ++a) {
      if (a) labels += ',';
      labels += ds.labels[i * ds.num_attributes() + a] ? '1' : '0';
    }
    labels += '\n';
  }
  io::write_file(dir / "labels.csv", labels);
  std::string pairs;
  for (const auto& p : ds.pairs)
    pairs += p.query_id + "," + p.reference_id + "," + std::string(split_name(p.split)) + "\n";
  io::write_file(dir / "pairs.csv", pairs);
}

}  // namespace simexplain
