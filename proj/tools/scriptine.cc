// tools/scriptine.cc
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scriptine/ensemble.h"
#include "scriptine/error.h"
#include "scriptine/eval.h"
#include "scriptine/harness.h"
#include "scriptine/log.h"
#include "scriptine/pagexml.h"
#include "scriptine/parallel.h"
#include "scriptine/protocol.h"
#include "scriptine/utf8.h"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace scriptine;

namespace {

// Bad invocation that CLI11 cannot detect on its own; exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::string spec{kDefSpec};
  int height = 48;
  int cutoff = 150;
  int augment = 5;
  int jobs = default_jobs();
  std::string binarize = "sauvola";
  int batch_size = 16;
  int max_epochs = 100;
  long min_eval_samples = 1000;
  double val_fraction = 0.1;
  std::vector<std::string> pages;
  std::vector<int> sizes{2, 4, 8};
  bool fs_ensemble = false;
  int voters = 5;
  // Synthetic corpora.
  std::string style = "A";
  int manuscripts = 4;
  int pages_per_ms = 4;
  int lines_per_page = 8;
  int chars_per_line = 12;
  int alphabet_size = 12;
  double jitter = 1.0;
  int eval_pages = 4;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> parse_sizes(const std::string& s) {
  std::vector<int> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ValidationError("bad size '" + item + "'");
    }
  }
  if (out.empty()) throw ValidationError("empty size list");
  return out;
}

void apply_key(RunConfig& c, const std::string& key, const std::string& value) {
  auto as_int = [&] {
    try {
      std::size_t used = 0;
      const long v = std::stol(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::logic_error&) {
      throw ValidationError("config key '" + key + "' needs an integer, got '" + value + "'");
    }
  };
  auto as_double = [&] {
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::logic_error&) {
      throw ValidationError("config key '" + key + "' needs a number, got '" + value + "'");
    }
  };
  auto as_bool = [&] {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ValidationError("config key '" + key + "' needs a boolean, got '" + value + "'");
  };
  if (key == "seed") c.seed = static_cast<std::uint64_t>(as_int());
  else if (key == "spec") c.spec = value;
  else if (key == "height") c.height = static_cast<int>(as_int());
  else if (key == "cutoff") c.cutoff = static_cast<int>(as_int());
  else if (key == "augment") c.augment = static_cast<int>(as_int());
  else if (key == "jobs") c.jobs = static_cast<int>(as_int());
  else if (key == "binarize") c.binarize = value;
  else if (key == "batch_size") c.batch_size = static_cast<int>(as_int());
  else if (key == "max_epochs") c.max_epochs = static_cast<int>(as_int());
  else if (key == "min_eval_samples") c.min_eval_samples = as_int();
  else if (key == "val_fraction") c.val_fraction = as_double();
  else if (key == "pages") c.pages = split_list(value);
  else if (key == "sizes") c.sizes = parse_sizes(value);
  else if (key == "fs_ensemble") c.fs_ensemble = as_bool();
  else if (key == "voters") c.voters = static_cast<int>(as_int());
  else if (key == "style") c.style = value;
  else if (key == "manuscripts") c.manuscripts = static_cast<int>(as_int());
  else if (key == "pages_per_ms") c.pages_per_ms = static_cast<int>(as_int());
  else if (key == "lines_per_page") c.lines_per_page = static_cast<int>(as_int());
  else if (key == "chars_per_line") c.chars_per_line = static_cast<int>(as_int());
  else if (key == "alphabet_size") c.alphabet_size = static_cast<int>(as_int());
  else if (key == "jitter") c.jitter = as_double();
  else if (key == "eval_pages") c.eval_pages = static_cast<int>(as_int());
  else throw ValidationError("unknown config key '" + key + "'");
}

// key=value lines; [section] headers only group keys.
void load_config(RunConfig& c, const std::string& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError("config " + path + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [key, node] : tree) {
    if (node.empty()) {
      apply_key(c, key, node.data());
    } else {
      for (const auto& [sub, leaf] : node) apply_key(c, sub, leaf.data());
    }
  }
}

TrainOptions train_options(const RunConfig& c) {
  if (c.augment < 0) throw ValidationError("augment must be >= 0");
  if (c.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (c.max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  if (c.val_fraction <= 0.0 || c.val_fraction >= 1.0) throw ValidationError("val_fraction must be in (0, 1)");
  TrainOptions o;
  o.augment = c.augment;
  o.batch_size = c.batch_size;
  o.cutoff = c.cutoff;
  o.val_fraction = c.val_fraction;
  o.stop.max_epochs = c.max_epochs;
  o.stop.min_eval_samples = c.min_eval_samples;
  return o;
}

std::uint64_t require_seed(const RunConfig& c) {
  if (!c.seed) throw UsageError("--seed is required for this command");
  return *c.seed;
}

// Manifest: one JSON object per line image.
struct Record {
  std::string manuscript, page, line, image;
  std::u32string text;
  std::string id() const { return manuscript + "/" + page + "/" + line; }
};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void write_file(const std::string& path, const std::string& content) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << content;
}

json parse_json_line(const std::string& line, const std::string& path, std::size_t index) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ":" + std::to_string(index + 1) + ": " + e.what(), e.byte);
  }
}

std::string get_string(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string()) throw ValidationError(where + ": missing string field '" + key + "'");
  return j[key].get<std::string>();
}

std::vector<Record> load_manifest(const std::string& path) {
  std::vector<Record> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto j = parse_json_line(lines[i], path, i);
    const auto where = path + ":" + std::to_string(i + 1);
    Record r{get_string(j, "manuscript", where), get_string(j, "page", where), get_string(j, "line", where),
             get_string(j, "image", where), utf8_decode(get_string(j, "text", where))};
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<Record> filter_pages(std::vector<Record> records, const std::vector<std::string>& pages) {
  if (pages.empty()) return records;
  std::vector<Record> out;
  for (auto& r : records) {
    if (std::find(pages.begin(), pages.end(), r.page) != pages.end()) out.push_back(std::move(r));
  }
  if (out.empty()) throw ValidationError("no manifest lines on the selected pages");
  return out;
}

LineImage load_line(const Record& r, const fs::path& base_dir, const BinarizeMethod& method, int height) {
  LineImage img;
  img.pixels = read_png((base_dir / r.image).string());
  img.source = {r.manuscript, r.page, r.line};
  return normalize_height(binarize(img, method), height);
}

// Transcribed lines grouped by page, in manifest order.
std::vector<PageLines> load_pages(const std::vector<Record>& records, const std::string& manifest,
                                  const BinarizeMethod& method, int height) {
  const auto dir = fs::path(manifest).parent_path();
  std::vector<PageLines> pages;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& r : records) {
    if (r.text.empty()) continue;
    auto [it, fresh] = index.try_emplace({r.manuscript, r.page}, pages.size());
    if (fresh) pages.push_back({r.manuscript, r.page, {}});
    pages[it->second].lines.push_back({load_line(r, dir, method, height), r.text});
  }
  if (pages.empty()) throw ValidationError("manifest " + manifest + " has no transcribed lines");
  return pages;
}

std::function<void(const EvalRecord&)> log_to(std::ofstream* out) {
  if (!out) return {};
  return [out](const EvalRecord& r) {
    *out << eval_record_json(r) << '\n';
    out->flush();
  };
}

std::unique_ptr<std::ofstream> open_log(const std::string& path) {
  if (path.empty()) return nullptr;
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  auto out = std::make_unique<std::ofstream>(path, std::ios::binary);
  if (!*out) throw InputError("cannot write " + path);
  return out;
}

std::string join_logs(const std::vector<EvalRecord>& records) {
  std::string out;
  for (const auto& r : records) out += eval_record_json(r) + '\n';
  return out;
}

// Predictions: one JSON object per line.
json prediction_json(const Prediction& p) {
  json j;
  j["id"] = p.line_ref;
  j["text"] = utf8_encode(p.chars);
  j["confidences"] = p.confidences;
  j["positions"] = p.positions;
  return j;
}

std::vector<Prediction> load_predictions(const std::string& path) {
  std::vector<Prediction> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto j = parse_json_line(lines[i], path, i);
    const auto where = path + ":" + std::to_string(i + 1);
    Prediction p;
    p.line_ref = get_string(j, "id", where);
    p.chars = utf8_decode(get_string(j, "text", where));
    if (j.contains("confidences")) p.confidences = j["confidences"].get<std::vector<double>>();
    else p.confidences.assign(p.chars.size(), 1.0);
    if (j.contains("positions")) p.positions = j["positions"].get<std::vector<int>>();
    else
      for (std::size_t k = 0; k < p.chars.size(); ++k) p.positions.push_back(static_cast<int>(k));
    if (p.confidences.size() != p.chars.size() || p.positions.size() != p.chars.size()) {
      throw ValidationError(where + ": confidences/positions do not match the text length");
    }
    out.push_back(std::move(p));
  }
  return out;
}

// id/text pairs from a manifest or prediction file (or every *.jsonl file of
// a directory, in name order).
std::vector<LineText> load_texts(const std::string& path) {
  std::vector<std::string> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.path().extension() == ".jsonl") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  std::vector<LineText> out;
  for (const auto& file : files) {
    const auto lines = read_lines(file);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto j = parse_json_line(lines[i], file, i);
      const auto where = file + ":" + std::to_string(i + 1);
      std::string id;
      if (j.contains("id")) id = get_string(j, "id", where);
      else id = get_string(j, "manuscript", where) + "/" + get_string(j, "page", where) + "/" +
                get_string(j, "line", where);
      out.push_back({id, utf8_decode(get_string(j, "text", where))});
    }
  }
  return out;
}

std::vector<std::string> collect_xml(const std::vector<std::string>& inputs) {
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : fs::recursive_directory_iterator(in)) {
        if (e.is_regular_file() && e.path().extension() == ".xml") found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(in)) {
      files.push_back(in);
    } else {
      throw InputError("no such file or directory: " + in);
    }
  }
  if (files.empty()) throw InputError("no PAGE XML files found");
  return files;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cmd_ingest(const RunConfig&, const std::vector<std::string>& inputs, const std::string& manuscript,
               const std::string& out) {
  const auto manifest_dir = fs::path(out).parent_path();
  std::string content;
  int lines = 0;
  for (const auto& xml_path : collect_xml(inputs)) {
    const auto page = parse_page(read_file(xml_path));
    const auto xml_dir = fs::path(xml_path).parent_path();
    const auto raster = read_png((xml_dir / page.image_ref).string());
    if (raster.width != page.width || raster.height != page.height) {
      throw ValidationError(xml_path + ": raster is " + std::to_string(raster.width) + "x" +
                            std::to_string(raster.height) + ", page declares " + std::to_string(page.width) +
                            "x" + std::to_string(page.height));
    }
    const std::string ms = manuscript.empty() ? xml_dir.filename().string() : manuscript;
    const auto pid = page_id(page);
    for (const auto& line : page.lines) {
      const auto img = extract_line_image(raster, line);
      const auto rel = fs::path("lines") / ms / (pid + "_" + line.id + ".png");
      fs::create_directories((manifest_dir / rel).parent_path());
      write_png((manifest_dir / rel).string(), img.pixels);
      json j;
      j["id"] = ms + "/" + pid + "/" + line.id;
      j["manuscript"] = ms;
      j["page"] = pid;
      j["line"] = line.id;
      j["image"] = rel.generic_string();
      j["text"] = utf8_encode(line.transcription);
      content += j.dump() + '\n';
      ++lines;
    }
  }
  write_file(out, content);
  std::cout << "ingested " << lines << " lines\n";
  return 0;
}

SynthConfig synth_config(const RunConfig& c, int manuscripts, int pages, const std::string& prefix) {
  SynthConfig s;
  s.n_manuscripts = manuscripts;
  s.pages_per_ms = pages;
  s.lines_per_page = c.lines_per_page;
  if (c.style == "A" || c.style == "a") s.style = SynthStyle::kA;
  else if (c.style == "B" || c.style == "b") s.style = SynthStyle::kB;
  else throw ValidationError("style must be A or B");
  s.alphabet_size = c.alphabet_size;
  s.writer_jitter = c.jitter;
  s.chars_per_line = c.chars_per_line;
  s.line_height = c.height;
  s.name_prefix = prefix;
  return s;
}

int cmd_synth(const RunConfig& c, const std::string& out_dir, const std::string& prefix) {
  RngStream rng = RngStream::keyed(require_seed(c), 0);
  const auto corpus = synth_corpus(synth_config(c, c.manuscripts, c.pages_per_ms, prefix), rng);
  for (const auto& ms : corpus) {
    const auto dir = fs::path(out_dir) / ms.name;
    fs::create_directories(dir);
    for (std::size_t p = 0; p < ms.manuscript.pages.size(); ++p) {
      const auto& page = ms.manuscript.pages[p];
      write_png((dir / page.image_ref).string(), ms.rasters[p]);
      write_file((dir / (page_id(page) + ".xml")).string(), write_page(page));
    }
  }
  std::cout << "wrote " << corpus.size() << " manuscripts to " << out_dir << "\n";
  return 0;
}

int cmd_train(const RunConfig& c, const std::string& manifest, const std::string& base_path,
              const std::string& out, const std::string& log_path) {
  RngStream rng = RngStream::keyed(require_seed(c), 0);
  const auto spec = parse_spec(c.spec);
  std::optional<ModelParams> base;
  int height = c.height;
  if (!base_path.empty()) {
    base = load_model(base_path);
    height = base->input_height;
  }
  const auto pages = load_pages(filter_pages(load_manifest(manifest), c.pages), manifest,
                                parse_binarize(c.binarize), height);
  auto log = open_log(log_path);
  auto opts = train_options(c);
  opts.log = log_to(log.get());
  const auto result = two_stage_train(pages, spec, height, base, rng, opts);
  save_model(out, result.model);
  std::cout << "saved " << out << "\n";
  return 0;
}

int cmd_finetune(const RunConfig& c, const std::string& manifest, const std::string& base_path,
                 const std::string& out, const std::string& log_path) {
  RngStream rng = RngStream::keyed(require_seed(c), 0);
  const auto base = load_model(base_path);
  const auto gt = flatten(load_pages(filter_pages(load_manifest(manifest), c.pages), manifest,
                                     parse_binarize(c.binarize), base.input_height));
  auto log = open_log(log_path);
  auto opts = train_options(c);
  opts.log = log_to(log.get());
  save_model(out, finetune(base, gt, rng, opts));
  std::cout << "saved " << out << "\n";
  return 0;
}

int cmd_recognize(const RunConfig& c, const std::vector<std::string>& model_paths, const std::string& manifest,
                  const std::string& out, std::optional<int> height) {
  std::vector<ModelParams> models;
  for (const auto& p : model_paths) models.push_back(load_model(p));
  const int h = height.value_or(models.front().input_height);
  const auto method = parse_binarize(c.binarize);
  const auto records = filter_pages(load_manifest(manifest), c.pages);
  const auto dir = fs::path(manifest).parent_path();
  std::vector<std::string> rows(records.size());
  parallel_for(records.size(), c.jobs, [&](std::size_t i) {
    const auto img = load_line(records[i], dir, method, h);
    auto p = models.size() == 1 ? recognize(models.front(), img) : recognize_voted(models, img);
    p.line_ref = records[i].id();
    rows[i] = prediction_json(p).dump() + '\n';
  });
  std::string content;
  for (const auto& r : rows) content += r;
  write_file(out, content);
  std::cout << "recognized " << records.size() << " lines\n";
  return 0;
}

int cmd_vote(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<std::vector<Prediction>> voters;
  for (const auto& path : inputs) voters.push_back(load_predictions(path));
  std::vector<std::map<std::string, const Prediction*>> by_id(voters.size());
  for (std::size_t v = 0; v < voters.size(); ++v) {
    for (const auto& p : voters[v]) {
      if (!by_id[v].emplace(p.line_ref, &p).second) throw ValidationError(inputs[v] + ": duplicate id " + p.line_ref);
    }
    if (by_id[v].size() != by_id[0].size()) throw ValidationError(inputs[v] + ": line set differs from " + inputs[0]);
  }
  std::string content;
  for (const auto& p : voters.front()) {
    std::vector<Prediction> column;
    for (std::size_t v = 0; v < voters.size(); ++v) {
      auto it = by_id[v].find(p.line_ref);
      if (it == by_id[v].end()) throw ValidationError(inputs[v] + ": missing id " + p.line_ref);
      column.push_back(*it->second);
    }
    content += prediction_json(confidence_vote(column)).dump() + '\n';
  }
  write_file(out, content);
  return 0;
}

int cmd_evaluate(const std::string& gt_path, const std::string& pred_path, const std::string& out,
                 const std::string& confusion_path, int top_k) {
  const auto gt = load_texts(gt_path);
  const auto pred = load_texts(pred_path);
  const double rate = cer(gt, pred);
  std::map<std::string, std::u32string> pred_by_id;
  for (const auto& p : pred) pred_by_id[p.id] = p.text;
  std::vector<std::pair<std::u32string, std::u32string>> pairs;
  long chars = 0;
  for (const auto& g : gt) {
    pairs.emplace_back(g.text, pred_by_id.at(g.id));
    chars += static_cast<long>(g.text.size());
  }
  const auto table = confusion_table(pairs, static_cast<std::size_t>(std::max(top_k, 0)));
  std::ostringstream report;
  report << "lines\t" << gt.size() << "\nchars\t" << chars << "\nerrors\t" << table.total_errors << "\ncer\t"
         << format_fixed(rate, 2) << "\n";
  if (out.empty()) std::cout << report.str();
  else write_file(out, report.str());
  if (!confusion_path.empty()) write_file(confusion_path, format_confusion_tsv(table));
  return 0;
}

std::string safe_name(std::string s) {
  for (auto& ch : s) {
    if (ch == '/' || ch == '\\') ch = '_';
  }
  return s;
}

void write_ita_outputs(const std::string& out_dir, const std::vector<ItaResultTable>& tables) {
  write_file((fs::path(out_dir) / "result.tsv").string(), format_ita_tsv(tables));
  for (const auto& t : tables) {
    for (const auto& [arm, records] : t.logs) {
      write_file((fs::path(out_dir) / "logs" / (safe_name(t.manuscript) + "_" + arm + ".jsonl")).string(),
                 join_logs(records));
    }
    for (const auto& [arm, table] : t.confusions) {
      write_file((fs::path(out_dir) / "confusion" / (safe_name(t.manuscript) + "_" + arm + ".tsv")).string(),
                 format_confusion_tsv(table));
    }
  }
}

int cmd_ita(const RunConfig& c, const std::string& manifest, const std::string& base_path,
            const std::string& out_dir) {
  const auto seed = require_seed(c);
  RngStream root = RngStream::keyed(seed, 0);
  ItaOptions options;
  options.spec = parse_spec(c.spec);
  options.height = c.height;
  options.train = train_options(c);
  options.fs_ensemble = c.fs_ensemble;
  options.voters = c.voters;
  options.jobs = c.jobs;

  std::optional<ModelParams> base;
  std::map<std::string, std::vector<PageLines>> by_ms;
  if (!manifest.empty()) {
    if (!base_path.empty()) {
      base = load_model(base_path);
      options.height = base->input_height;
    }
    for (auto& p : load_pages(load_manifest(manifest), manifest, parse_binarize(c.binarize), options.height)) {
      by_ms[p.manuscript].push_back(std::move(p));
    }
  } else {
    // Synthetic run: a mixed model over several manuscripts of one style, then
    // the ITA on an unseen manuscript of the same style.
    const auto method = parse_binarize(c.binarize);
    auto base_rng = root.fork(1);
    std::vector<PageLines> base_pages;
    for (const auto& ms : synth_corpus(synth_config(c, c.manuscripts, c.pages_per_ms, "mix"), base_rng)) {
      for (auto& p : prepare_manuscript(ms, method, c.height)) base_pages.push_back(std::move(p));
    }
    auto train_rng = root.fork(3);
    auto base_opts = options.train;
    std::vector<EvalRecord> base_log;
    base_opts.log = [&base_log](const EvalRecord& r) { base_log.push_back(r); };
    base = two_stage_train(base_pages, options.spec, c.height, std::nullopt, train_rng, base_opts).model;
    write_file((fs::path(out_dir) / "logs" / "base.jsonl").string(), join_logs(base_log));

    const int largest = *std::max_element(c.sizes.begin(), c.sizes.end());
    auto held_rng = root.fork(2);
    const auto held = synth_corpus(synth_config(c, 1, largest + c.eval_pages, "ita"), held_rng);
    by_ms[held.front().name] = prepare_manuscript(held.front(), method, c.height);
  }

  std::vector<ItaResultTable> tables;
  std::uint64_t k = 0;
  for (const auto& [name, pages] : by_ms) {
    auto split_rng = root.fork(4).fork(k);
    auto run_rng = root.fork(5).fork(k);
    ++k;
    const auto splits = make_nested_splits(pages.size(), c.sizes, split_rng);
    tables.push_back(run_ita(pages, base, splits, run_rng, options));
  }
  write_ita_outputs(out_dir, tables);
  std::cout << format_ita_tsv(tables);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Handwritten text recognition with pretraining, finetuning and voting ensembles"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  RunConfig config;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> spec, binarize, pages, sizes;
  std::optional<int> cutoff, augment, jobs, height, voters;
  bool fs_ensemble = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI file with key=value settings")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "global random seed");
    sub->add_option("--jobs", jobs, "worker threads");
    sub->add_option("--binarize", binarize, "otsu | sauvola | wolf | graynorm")
        ->check(CLI::IsMember({"otsu", "sauvola", "wolf", "graynorm"}));
  };
  auto add_training = [&](CLI::App* sub) {
    sub->add_option("--spec", spec, "network spec");
    sub->add_option("--cutoff", cutoff, "balanced selection cutoff in lines");
    sub->add_option("--augment", augment, "degraded copies per line");
    sub->add_option("--pages", pages, "comma-separated page ids to use");
  };

  std::vector<std::string> inputs, models;
  std::string out, manifest, base_path, log_path, manuscript, prefix = "ms", gt_path, pred_path, confusion_path;
  int top_k = 10;

  auto* ingest = app.add_subcommand("ingest", "PAGE XML files or directories -> line manifest");
  add_common(ingest);
  ingest->add_option("inputs", inputs, "PAGE XML files or directories")->required();
  ingest->add_option("--manuscript", manuscript, "manuscript id (default: directory name)");
  ingest->add_option("--out", out, "manifest path")->required();

  auto* synth = app.add_subcommand("synth", "generate a synthetic PAGE corpus");
  add_common(synth);
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--prefix", prefix, "manuscript name prefix");
  synth->add_option("--height", height, "line height in pixels");

  auto* train = app.add_subcommand("train", "two-stage training of a mixed model");
  add_common(train);
  add_training(train);
  train->add_option("--manifest", manifest, "line manifest")->required();
  train->add_option("--base", base_path, "start from this model");
  train->add_option("--out", out, "model path")->required();
  train->add_option("--log", log_path, "JSON-lines training log");
  train->add_option("--height", height, "line height in pixels");

  auto* tune = app.add_subcommand("finetune", "adapt a model to a document");
  add_common(tune);
  add_training(tune);
  tune->add_option("--manifest", manifest, "line manifest")->required();
  tune->add_option("--base", base_path, "base model")->required();
  tune->add_option("--out", out, "model path")->required();
  tune->add_option("--log", log_path, "JSON-lines training log");

  auto* recog = app.add_subcommand("recognize", "model(s) + manifest -> predictions");
  add_common(recog);
  recog->add_option("--model", models, "model path; several models vote")->required();
  recog->add_option("--manifest", manifest, "line manifest")->required();
  recog->add_option("--out", out, "prediction file")->required();
  recog->add_option("--pages", pages, "comma-separated page ids to use");
  recog->add_option("--height", height, "line height (default: the model's)");

  auto* vote = app.add_subcommand("vote", "confidence voting over prediction files");
  vote->add_option("inputs", inputs, "prediction files")->required();
  vote->add_option("--out", out, "prediction file")->required();

  auto* evaluate = app.add_subcommand("evaluate", "CER and confusion report");
  evaluate->add_option("--gt", gt_path, "ground truth (manifest, prediction file or directory)")->required();
  evaluate->add_option("--pred", pred_path, "predictions (file or directory)")->required();
  evaluate->add_option("--out", out, "report file (default: stdout)");
  evaluate->add_option("--confusion", confusion_path, "confusion TSV");
  evaluate->add_option("--top", top_k, "confusion rows");

  auto* ita = app.add_subcommand("ita", "iterative training simulation, FS vs PT");
  add_common(ita);
  add_training(ita);
  ita->add_option("--sizes", sizes, "comma-separated training sizes in pages");
  ita->add_option("--manifest", manifest, "line manifest (default: synthetic corpus)");
  ita->add_option("--base", base_path, "pretrained model for the PT arm");
  ita->add_option("--out", out, "output directory")->required();
  ita->add_option("--height", height, "line height in pixels");
  ita->add_flag("--fs-ensemble", fs_ensemble, "train the from-scratch arm as a voting ensemble");
  ita->add_option("--voters", voters, "ensemble size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (!config_path.empty()) load_config(config, config_path);
    if (seed) config.seed = seed;
    if (spec) config.spec = *spec;
    if (binarize) config.binarize = *binarize;
    if (pages) config.pages = split_list(*pages);
    if (sizes) config.sizes = parse_sizes(*sizes);
    if (cutoff) config.cutoff = *cutoff;
    if (augment) config.augment = *augment;
    if (jobs) config.jobs = *jobs;
    if (voters) config.voters = *voters;
    if (fs_ensemble) config.fs_ensemble = true;
    if (height && !recog->parsed()) config.height = *height;
    parse_spec(config.spec);
    parse_binarize(config.binarize);

    if (ingest->parsed()) return cmd_ingest(config, inputs, manuscript, out);
    if (synth->parsed()) return cmd_synth(config, out, prefix);
    if (train->parsed()) return cmd_train(config, manifest, base_path, out, log_path);
    if (tune->parsed()) return cmd_finetune(config, manifest, base_path, out, log_path);
    if (recog->parsed()) return cmd_recognize(config, models, manifest, out, height);
    if (vote->parsed()) return cmd_vote(inputs, out);
    if (evaluate->parsed()) return cmd_evaluate(gt_path, pred_path, out, confusion_path, top_k);
    if (ita->parsed()) return cmd_ita(config, manifest, base_path, out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
