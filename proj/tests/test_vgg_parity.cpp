// Perceptual loss against torchvision's VGG19 on the same weights. The
// reference archive comes from tools/perceptual_reference.py; its location is
// passed in MRSR_VGG_PARITY_DIR.

#include <cstdlib>
#include <filesystem>

#include "doctest.h"
#include "mrsr/checkpoint.hpp"
#include "mrsr/losses.hpp"

using namespace mrsr;

TEST_CASE("perceptual loss matches the torchvision computation") {
  const char* dir = std::getenv("MRSR_VGG_PARITY_DIR");
  REQUIRE_MESSAGE(dir != nullptr, "MRSR_VGG_PARITY_DIR is not set");
  const std::filesystem::path root(dir);
  const auto ex = FeatureExtractor<double>::from_archive(vgg19_spec(), root / "vgg19_random.mrsr");
  const TensorArchive ref = TensorArchive::load(root / "perceptual_reference.mrsr");
  const auto x = Var<double>::constant(ref.get_tensor<double>("x"));
  const auto y = Var<double>::constant(ref.get_tensor<double>("y"));
  const double expected = ref.metadata.at("loss").get<double>();
  const double got = perceptual_loss(ex, x, y).value().item();
  CHECK(std::abs(got - expected) <= 1e-9 * std::abs(expected));
  CHECK(ex.weights_source().find("fnv1a64:") != std::string::npos);
}
