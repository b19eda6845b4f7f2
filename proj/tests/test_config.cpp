#include <doctest.h>

#include <fstream>

#include "axloc/config.hpp"
#include "support.hpp"

using namespace axloc;

TEST_SUITE("config") {

TEST_CASE("defaults") {
  const RunConfig rc;
  CHECK(rc.seed == 1);
  CHECK(rc.data.n_train == 100);
  CHECK(rc.data.n_test == 40);
  CHECK(rc.data.extent == 10.0);
  CHECK(rc.train.lr_backbone == 3e-4);
  CHECK(rc.train.lr_other == 1e-3);
  CHECK(rc.model.beta_intra == 3.0);
  CHECK(rc.model.beta_inter == 0.2);
  CHECK(rc.ablate_seeds == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
}

TEST_CASE("text is applied with comments and blank lines") {
  RunConfig rc;
  apply_config_text(rc, "# header\n\nseed = 7\nmodel.use_attention=false  # trailing\n"
                        "model.backbone_widths=4,6,8,8,8\ndata.test_look_at=1,2,0.5\ntrain.epochs=12\n");
  CHECK(rc.seed == 7);
  CHECK_FALSE(rc.model.use_attention);
  CHECK(rc.model.backbone_widths == std::vector<std::size_t>{4, 6, 8, 8, 8});
  CHECK(rc.data.test_path.look_at == Vec3{1, 2, 0.5});
  CHECK(rc.train.epochs == 12);
  CHECK(rc.train_config().seed == 7);
}

TEST_CASE("errors carry line numbers") {
  RunConfig rc;
  try {
    apply_config_text(rc, "seed=1\n\nbogus.key=3\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    CHECK(std::string(e.what()).find("bogus.key") != std::string::npos);
  }
  try {
    apply_config_text(rc, "seed=1\nno equals sign\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_config_text(rc, "seed=abc\n"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(rc, "model.use_auxiliary=maybe\n"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(rc, "data.train_look_at=1,2\n"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(rc, "data.n_train=-3\n"), ConfigError);
  CHECK_THROWS_AS(apply_config_file(rc, "/nonexistent/axloc.cfg"), ConfigError);
}

TEST_CASE("every key round trips through get and set") {
  RunConfig rc;
  apply_config_text(rc, "out.dir=/tmp/x\ndata.dir=/tmp/y\n");
  for (const auto& key : config_keys()) {
    const std::string value = get_config_value(rc, key.name);
    RunConfig copy;
    set_config_value(copy, key.name, value);
    CHECK_MESSAGE(get_config_value(copy, key.name) == value, key.name);
  }
  CHECK(config_reference().find("model.use_attention") != std::string::npos);
}

TEST_CASE("config file") {
  axloc::testing::TempDir dir("cfg");
  {
    std::ofstream(dir / "a.cfg") << "threads=3\nablate.seeds=4,5\n";
  }
  RunConfig rc;
  apply_config_file(rc, dir / "a.cfg");
  CHECK(rc.threads == 3);
  CHECK(rc.ablate_seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(parse_seed_list("1, 2,3") == std::vector<std::uint64_t>{1, 2, 3});
  CHECK_THROWS_AS(parse_seed_list("1,,2"), ConfigError);
}

}  // TEST_SUITE
