// tests/cli_test.cc
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

#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "scriptine_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

int run(const std::string& args) {
  const std::string cmd = std::string(SCRIPTINE_CLI_PATH) + " " + args + " >" + path("stdout.txt") + " 2>" +
                          path("stderr.txt");
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const std::string& p, const std::string& content) { std::ofstream(p, std::ios::binary) << content; }

int count_lines(const std::string& p) {
  const auto text = slurp(p);
  return static_cast<int>(std::count(text.begin(), text.end(), '\n'));
}

const std::string& config() {
  static const std::string file = [] {
    const auto p = path("tiny.ini");
    write(p,
          "seed = 5\n"
          "spec = conv=4:3x3,pool=2x2,lstm=8,dropout=0.0\n"
          "height = 32\n"
          "\n"
          "[train]\n"
          "augment = 0\n"
          "max_epochs = 1\n"
          "min_eval_samples = 1\n"
          "\n"
          "[synth]\n"
          "manuscripts = 1\n"
          "pages_per_ms = 2\n"
          "lines_per_page = 3\n"
          "chars_per_line = 4\n"
          "alphabet_size = 5\n"
          "eval_pages = 1\n"
          "sizes = 1\n");
    return p;
  }();
  return file;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("synth --out " + path("nos")) == 2);
  CHECK(run("train --manifest x --out y") == 2);
  CHECK(run("evaluate --gt a") == 2);
  CHECK(run("--help") == 0);
}

TEST_CASE("validation errors exit with 1") {
  const auto bad = path("bad.ini");
  write(bad, "colour = blue\n");
  CHECK(run("synth --seed 1 --config " + bad + " --out " + path("bad")) == 1);
  CHECK(slurp(path("stderr.txt")).find("colour") != std::string::npos);
  CHECK(run("train --seed 1 --spec conv=4 --manifest x --out y") == 1);
  CHECK(run("evaluate --gt " + path("missing.jsonl") + " --pred " + path("missing.jsonl")) == 1);
}

TEST_CASE("synth, ingest, train, recognize, vote, evaluate") {
  REQUIRE(run("synth --config " + config() + " --out " + path("corpus")) == 0);
  CHECK(fs::exists(path("corpus/ms0/ms0_p0.xml")));
  CHECK(fs::exists(path("corpus/ms0/ms0_p0.png")));

  const auto manifest = path("data/manifest.jsonl");
  REQUIRE(run("ingest " + path("corpus") + " --out " + manifest) == 0);
  CHECK(count_lines(manifest) == 6);
  CHECK(slurp(manifest).find("\"id\":\"ms0/ms0_p0/l0\"") != std::string::npos);

  const auto model = path("model.scrm");
  REQUIRE(run("train --config " + config() + " --manifest " + manifest + " --out " + model + " --log " +
              path("train.jsonl")) == 0);
  CHECK(fs::exists(model));
  CHECK(count_lines(path("train.jsonl")) >= 1);

  REQUIRE(run("finetune --config " + config() + " --base " + model + " --manifest " + manifest + " --out " +
              path("tuned.scrm")) == 0);

  const auto preds = path("preds.jsonl");
  REQUIRE(run("recognize --model " + model + " --manifest " + manifest + " --out " + preds) == 0);
  CHECK(count_lines(preds) == 6);
  CHECK(run("recognize --model " + model + " --manifest " + manifest + " --out " + preds + " --height 48") == 1);
  CHECK(run("recognize --model " + model + " --model " + path("tuned.scrm") + " --manifest " + manifest +
            " --out " + path("voted_direct.jsonl")) == 0);

  const auto voted = path("voted.jsonl");
  REQUIRE(run("vote " + preds + " " + preds + " --out " + voted) == 0);
  CHECK(count_lines(voted) == 6);
  CHECK(run("evaluate --gt " + preds + " --pred " + voted) == 0);
  CHECK(slurp(path("stdout.txt")).find("cer\t0.00\n") != std::string::npos);

  REQUIRE(run("evaluate --gt " + manifest + " --pred " + preds + " --confusion " + path("conf.tsv")) == 0);
  const auto report = slurp(path("stdout.txt"));
  CHECK(report.find("lines\t6\n") != std::string::npos);
  CHECK(report.find("cer\t") != std::string::npos);
  CHECK(fs::exists(path("conf.tsv")));

  write(path("short.jsonl"), "{\"id\":\"ms0/ms0_p0/l0\",\"text\":\"a\"}\n");
  CHECK(run("vote " + preds + " " + path("short.jsonl") + " --out " + path("x.jsonl")) == 1);
}

TEST_CASE("ita is reproducible") {
  REQUIRE(run("ita --config " + config() + " --out " + path("ita1")) == 0);
  REQUIRE(run("ita --config " + config() + " --jobs 2 --out " + path("ita2")) == 0);
  const auto table = slurp(path("ita1/result.tsv"));
  CHECK(table.rfind("manuscript\tpages\tfs_cer\tpt_cer\timpr_fs\timpr_prev\n", 0) == 0);
  CHECK(count_lines(path("ita1/result.tsv")) == 3);
  CHECK(table == slurp(path("ita2/result.tsv")));
  CHECK(fs::exists(path("ita1/logs/base.jsonl")));
  CHECK(fs::exists(path("ita1/confusion")));
}
