#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "prn/checkpoint.hpp"
#include "prn/params.hpp"

using namespace prn;

namespace {

// A couple of named arrays with recognizable values, plus ParamRef views
// over them, shared by the cases below.
struct Fixture {
  std::vector<float> a = {1.0f, -2.5f, 3.25f, 0.0f, 7.5f, -0.125f};
  std::vector<float> b = {42.0f, -42.0f};
  std::vector<ParamRef<float>> refs;

  Fixture() {
    refs.push_back({"fuse.weight", a.data(), nullptr, static_cast<Eigen::Index>(a.size()), {2, 3}, true});
    refs.push_back({"head.bias", b.data(), nullptr, static_cast<Eigen::Index>(b.size()), {2}, false});
  }
};

std::string temp_path(const std::string& name) {
  const std::string dir = "/tmp/prn_test_checkpoint";
  std::filesystem::create_directories(dir);
  return dir + "/" + name;
}

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("values and config round trip bit for bit") {
  Fixture fx;
  const std::string path = temp_path("roundtrip.ckpt");
  // No whitespace: the loader re-renders the stored snapshot compactly.
  const std::string cfg = R"({"steps":200})";
  save_checkpoint(path, fx.refs, cfg);

  CheckpointData data = load_checkpoint(path);
  CHECK(data.config_json == cfg);
  REQUIRE(data.arrays.size() == 2);
  // Records are sorted by name.
  CHECK(data.arrays[0].name == "fuse.weight");
  CHECK(data.arrays[1].name == "head.bias");
  CHECK(data.arrays[0].shape == std::vector<Eigen::Index>{2, 3});
  CHECK(data.arrays[1].shape == std::vector<Eigen::Index>{2});

  std::vector<float> a2(fx.a.size(), 0.0f), b2(fx.b.size(), 0.0f);
  std::vector<ParamRef<float>> into;
  into.push_back({"fuse.weight", a2.data(), nullptr, static_cast<Eigen::Index>(a2.size()), {2, 3}, true});
  into.push_back({"head.bias", b2.data(), nullptr, static_cast<Eigen::Index>(b2.size()), {2}, false});
  restore_arrays(data, into);
  CHECK(a2 == fx.a);
  CHECK(b2 == fx.b);
  std::remove(path.c_str());
}

TEST_CASE("writing the same state twice produces identical bytes") {
  Fixture fx;
  const std::string p1 = temp_path("once.ckpt");
  const std::string p2 = temp_path("twice.ckpt");
  save_checkpoint(p1, fx.refs, "{}");
  save_checkpoint(p2, fx.refs, "{}");
  CHECK(read_bytes(p1) == read_bytes(p2));

  // And a load-then-save cycle reproduces the file as well.
  CheckpointData data = load_checkpoint(p1);
  std::vector<float> a2(fx.a.size(), 0.0f), b2(fx.b.size(), 0.0f);
  std::vector<ParamRef<float>> into;
  into.push_back({"fuse.weight", a2.data(), nullptr, static_cast<Eigen::Index>(a2.size()), {2, 3}, true});
  into.push_back({"head.bias", b2.data(), nullptr, static_cast<Eigen::Index>(b2.size()), {2}, false});
  restore_arrays(data, into);
  const std::string p3 = temp_path("thrice.ckpt");
  save_checkpoint(p3, into, data.config_json);
  CHECK(read_bytes(p1) == read_bytes(p3));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
  std::remove(p3.c_str());
}

TEST_CASE("corruption anywhere in the blob is detected") {
  Fixture fx;
  const std::string path = temp_path("corrupt.ckpt");
  save_checkpoint(path, fx.refs, "{}");
  std::vector<char> bytes = read_bytes(path);

  // Flip one bit in the last blob byte; the checksum must catch it.
  std::vector<char> flipped = bytes;
  flipped.back() = static_cast<char>(flipped.back() ^ 0x01);
  write_bytes(path, flipped);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

  // Wrong magic bytes.
  std::vector<char> bad_magic = bytes;
  bad_magic[0] = 'X';
  write_bytes(path, bad_magic);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

  // Unknown container version (byte 8 of the header).
  std::vector<char> bad_version = bytes;
  bad_version[7] = static_cast<char>(200);
  write_bytes(path, bad_version);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"), CheckpointError);

  // Truncated file.
  std::vector<char> truncated(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2));
  write_bytes(path, truncated);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

  std::remove(path.c_str());
}

TEST_CASE("restore rejects missing names and shape mismatches") {
  Fixture fx;
  const std::string path = temp_path("restore.ckpt");
  save_checkpoint(path, fx.refs, "{}");
  CheckpointData data = load_checkpoint(path);

  std::vector<float> a2(fx.a.size(), 0.0f);
  std::vector<float> extra(4, 0.0f);

  // A live array the checkpoint does not contain.
  {
    std::vector<ParamRef<float>> into;
    into.push_back({"decoder.missing", extra.data(), nullptr, 4, {4}, true});
    CHECK_THROWS_WITH_AS(restore_arrays(data, into), doctest::Contains("decoder.missing"),
                         CheckpointError);
  }

  // Same name, different shape.
  {
    std::vector<ParamRef<float>> into;
    into.push_back({"fuse.weight", a2.data(), nullptr, static_cast<Eigen::Index>(a2.size()), {3, 2}, true});
    CHECK_THROWS_WITH_AS(restore_arrays(data, into), doctest::Contains("fuse.weight"), CheckpointError);
  }

  std::remove(path.c_str());
}

TEST_CASE("loading a nonexistent path fails cleanly") {
  CHECK_THROWS_AS(load_checkpoint("/tmp/prn_test_checkpoint/nope.ckpt"), CheckpointError);
}
