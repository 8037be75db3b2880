#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "gemini/dataset_io.hpp"
#include "gemini/pipeline.hpp"

using namespace gemini;
namespace fs = std::filesystem;

namespace {

int cli(const std::string& args) {
  const int status = std::system((std::string(GEMINI_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("command-line tool") {
  const fs::path dir = fs::temp_directory_path() / "gemini_test_cli";
  fs::remove_all(dir);

  SUBCASE("flags override the preset") {
    REQUIRE(cli("generate --preset tiny5 --num-train 3 --num-test 2 --seed 5 --out " + (dir / "data").string()) == 0);
    const Dataset d = load_dataset(dir / "data");
    CHECK(d.split("train").size() == 3);
    CHECK(d.split("test").size() == 2);

    REQUIRE(cli("train --dataset " + (dir / "data").string() +
                " --preset tiny5 --num-train 3 --num-test 2 --seed 5 --alpha 3 --n 65 --batch-size 8"
                " --iters1 1 --iters2 1 --iters3 1 --out " + (dir / "run").string()) == 0);
    const RunManifest m = read_manifest(dir / "run" / "manifest.json");
    CHECK(m.config.model.subnet2.alpha == 3);
    CHECK(m.config.model.subnet2.recode_dim == 65);
    CHECK(m.config.training.batch_size == 8);
    CHECK(m.config.training.step2.iterations == 1);
    CHECK(m.config.data.seed == 5);
    CHECK(m.config.model.init_seed == 6);
    CHECK(m.config.training.seed == 7);
    CHECK(m.dataset_fingerprint == dataset_fingerprint(load_dataset(dir / "data")));

    REQUIRE(cli("detect --run " + (dir / "run").string() + " --dataset " + (dir / "data").string() + " --out " +
                (dir / "d.jsonl").string()) == 0);
    CHECK(fs::exists(dir / "d.jsonl"));
    REQUIRE(cli("eval --gt-as-detections --dataset " + (dir / "data").string() + " --out " +
                (dir / "gt.csv").string()) == 0);
    CHECK(read_text(dir / "gt.csv").find("mAP,1.000000,1.000000,1.000000") != std::string::npos);
  }
  SUBCASE("usage errors exit with 2") {
    CHECK(cli("train --no-such-flag --out x") == 2);
    CHECK(cli("train --preset tiny5 --alpha 20 --out " + (dir / "bad").string()) == 2);
    CHECK(cli("train --preset tiny5 --batch-size 12 --out " + (dir / "bad").string()) == 2);
    CHECK(cli("sweep --preset tiny5 --alphas 1,x --out " + (dir / "s.csv").string()) == 2);
  }
  fs::remove_all(dir);
}
