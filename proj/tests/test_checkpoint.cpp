#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "icr/checkpoint.hpp"

using namespace icr;
namespace fs = std::filesystem;

namespace {

struct TempFile {
  fs::path path;
  explicit TempFile(const std::string& name) : path(fs::temp_directory_path() / name) {}
  ~TempFile() { fs::remove(path); }
};

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  SeededRng rng(11);
  ck.arrays["b.bias"] = random_gaussian_matrix(1, 7, rng);
  ck.arrays["a.weight"] = random_gaussian_matrix(3, 4, rng);
  // denormals, negative zero, extreme exponents must survive bit-exactly
  ck.arrays["a.weight"](0, 0) = 5e-324;
  ck.arrays["a.weight"](0, 1) = -0.0;
  ck.arrays["a.weight"](0, 2) = 1e308;
  ck.seed = 42;
  ck.config_hash = "0123456789abcdef";
  ck.config = nlohmann::json{{"experiment", {{"mode", "baseline"}}}, {"vocab_size", 9}};
  return ck;
}

}  // namespace

TEST(Checkpoint, BitExactRoundTrip) {
  TempFile f("icr_ckpt_rt.bin");
  const Checkpoint ck = sample_checkpoint();
  save_checkpoint(ck, f.path.string());
  const Checkpoint back = load_checkpoint(f.path.string());
  EXPECT_EQ(back.seed, ck.seed);
  EXPECT_EQ(back.config_hash, ck.config_hash);
  EXPECT_EQ(back.config, ck.config);
  ASSERT_EQ(back.arrays.size(), ck.arrays.size());
  for (const auto& [name, m] : ck.arrays) {
    const Matrix& b = back.arrays.at(name);
    ASSERT_EQ(b.rows, m.rows);
    ASSERT_EQ(b.cols, m.cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
      // compare representations, not values (NaN/-0.0 safe)
      double x = m.data[i], y = b.data[i];
      EXPECT_EQ(std::memcmp(&x, &y, sizeof(double)), 0) << name << "[" << i << "]";
    }
  }
}

TEST(Checkpoint, RepeatedSaveIsByteIdentical) {
  TempFile a("icr_ckpt_a.bin"), b("icr_ckpt_b.bin");
  const Checkpoint ck = sample_checkpoint();
  save_checkpoint(ck, a.path.string());
  save_checkpoint(ck, b.path.string());
  std::ifstream fa(a.path, std::ios::binary), fb(b.path, std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {});
  const std::string sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
}

TEST(Checkpoint, BadMagicRejected) {
  TempFile f("icr_ckpt_bad.bin");
  std::ofstream(f.path, std::ios::binary) << "NOTACKPTxxxxxxxxxxxx";
  EXPECT_THROW(load_checkpoint(f.path.string()), ParseError);
}

TEST(Checkpoint, TruncatedPayloadRejected) {
  TempFile f("icr_ckpt_trunc.bin");
  save_checkpoint(sample_checkpoint(), f.path.string());
  const auto size = fs::file_size(f.path);
  fs::resize_file(f.path, size - 16);
  EXPECT_THROW(load_checkpoint(f.path.string()), ParseError);
}

TEST(Checkpoint, StoreRoundTripThroughFile) {
  SeededRng rng(13);
  Linear l(3, 2, rng);
  BatchNorm1d bn(2);
  bn.running_mean(0, 0) = 0.75;
  ParameterStore ps;
  l.register_params(ps, "lin");
  bn.register_params(ps, "bn");

  TempFile f("icr_ckpt_store.bin");
  save_checkpoint(checkpoint_from_store(ps, 5, "h", nlohmann::json::object()), f.path.string());

  // wreck the live values, then restore
  l.W.fill(0.0);
  bn.running_mean.fill(0.0);
  load_into_store(load_checkpoint(f.path.string()), ps);
  EXPECT_NE(l.W(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(bn.running_mean(0, 0), 0.75);
}

TEST(Checkpoint, MissingArrayIsDimMismatch) {
  SeededRng rng(17);
  Linear l(3, 2, rng);
  ParameterStore ps;
  l.register_params(ps, "lin");
  Checkpoint ck;  // empty
  EXPECT_THROW(load_into_store(ck, ps), DimMismatch);
}

TEST(Checkpoint, WrongShapeIsDimMismatch) {
  SeededRng rng(19);
  Linear l(3, 2, rng);
  ParameterStore ps;
  l.register_params(ps, "lin");
  Checkpoint ck;
  ck.arrays["lin.W"] = Matrix(2, 2);
  ck.arrays["lin.b"] = Matrix(1, 2);
  EXPECT_THROW(load_into_store(ck, ps), DimMismatch);
}
