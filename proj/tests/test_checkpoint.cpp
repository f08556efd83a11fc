#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "mrsr/checkpoint.hpp"

using namespace mrsr;

TEST_CASE("tensor archive round trip") {
  test::TempDir dir("archive");
  TensorArchive ar;
  ar.metadata["format"] = "test";
  ar.metadata["iteration"] = 17;
  const auto f = test::random_tensor<float>({2, 3, 4, 5}, 1);
  const auto d = test::random_tensor<double>({1, 1, 3, 3}, 2);
  ar.put("a.weight", f);
  ar.put("b.weight", d);
  ar.put_vector<double>("u", {0.5, -0.25, 1e-300});
  ar.save(dir / "x.ckpt");

  const auto back = TensorArchive::load(dir / "x.ckpt");
  CHECK(back.metadata == ar.metadata);
  CHECK(back.names() == std::vector<std::string>{"a.weight", "b.weight", "u"});
  CHECK(back.get_tensor<float>("a.weight").storage() == f.storage());
  CHECK(back.get_tensor<double>("b.weight").storage() == d.storage());
  CHECK(back.get_vector<double>("u") == std::vector<double>{0.5, -0.25, 1e-300});
  CHECK(back.shape_of("u") == std::vector<std::int64_t>{3});

  SUBCASE("rank widening and dtype conversion") {
    const auto u = back.get_tensor<float>("u");
    CHECK(u.shape() == Shape4{3, 1, 1, 1});
    CHECK(u.data()[1] == -0.25f);
    CHECK(back.get_tensor<double>("a.weight").data()[7] == static_cast<double>(f.data()[7]));
  }
  SUBCASE("missing tensors are reported by name") {
    CHECK_THROWS_WITH_AS(back.get_vector<float>("nope"), doctest::Contains("nope"), IoError);
  }
  SUBCASE("save is byte-stable") {
    ar.save(dir / "y.ckpt");
    CHECK(file_fingerprint(dir / "x.ckpt") == file_fingerprint(dir / "y.ckpt"));
  }
}

TEST_CASE("corrupt archives are rejected") {
  test::TempDir dir("archive_bad");
  CHECK_THROWS_AS(TensorArchive::load(dir / "missing.ckpt"), IoError);
  {
    std::ofstream(dir / "junk.ckpt") << "not an archive at all";
  }
  CHECK_THROWS_AS(TensorArchive::load(dir / "junk.ckpt"), IoError);

  TensorArchive ar;
  ar.put("w", test::random_tensor<float>({4, 4, 3, 3}, 3));
  ar.save(dir / "ok.ckpt");
  const auto size = std::filesystem::file_size(dir / "ok.ckpt");
  std::filesystem::resize_file(dir / "ok.ckpt", size - 10);
  CHECK_THROWS_AS(TensorArchive::load(dir / "ok.ckpt"), IoError);
}
