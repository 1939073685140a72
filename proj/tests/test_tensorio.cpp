#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include <json.hpp>

#include "points/tensorio.hpp"

using namespace points::tensorio;
namespace fs = std::filesystem;

namespace {

std::string to_hex(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  char buf[3];
  for (std::uint8_t b : bytes) {
    std::snprintf(buf, sizeof buf, "%02x", b);
    out += buf;
  }
  return out;
}

Tensor tensor(std::vector<std::int64_t> shape, std::vector<double> data) {
  return Tensor{std::move(shape), std::move(data)};
}

// Random tensors with f32-representable values.
TensorMap random_tensors(std::mt19937& rng, int count) {
  TensorMap map;
  std::uniform_real_distribution<float> dist(-100.0f, 100.0f);
  std::uniform_int_distribution<int> dim(1, 6);
  for (int i = 0; i < count; ++i) {
    Tensor t;
    const int rank = 1 + static_cast<int>(rng() % 3);
    for (int d = 0; d < rank; ++d) t.shape.push_back(dim(rng));
    t.data.resize(static_cast<std::size_t>(t.element_count()));
    for (auto& v : t.data) v = static_cast<double>(dist(rng));
    map.emplace("tensor_" + std::to_string(i), std::move(t));
  }
  return map;
}

ErrorKind parse_error_kind(const std::vector<std::uint8_t>& bytes) {
  try {
    parse_container(bytes);
  } catch (const ContainerError& e) {
    return e.kind();
  }
  FAIL("expected ContainerError");
  return ErrorKind::kBadHeader;
}

}  // namespace

TEST_CASE("empty tensor map round-trips") {
  const auto bytes = serialize_container({});
  // 8-byte length, then "{}"
  REQUIRE(bytes.size() == 10);
  CHECK(bytes[0] == 2);
  CHECK(bytes[8] == '{');
  CHECK(bytes[9] == '}');
  CHECK(parse_container(bytes).empty());
}

TEST_CASE("known-bytes golden file") {
  const auto bytes =
      serialize_container({{"w", tensor({2}, {1.0, 2.0})}});
  CHECK(to_hex(bytes) ==
        "37000000000000007b2277223a7b226474797065223a22663332222c226e62797465"
        "73223a382c226f6666736574223a302c227368617065223a5b325d7d7d"
        "0000803f00000040");
}

TEST_CASE("round-trip of random tensors is bit-exact") {
  std::mt19937 rng(41);
  const auto tensors = random_tensors(rng, 100);
  const auto bytes = serialize_container(tensors);
  const auto back = parse_container(bytes);
  REQUIRE(back.size() == tensors.size());
  for (const auto& [name, t] : tensors) {
    REQUIRE(back.count(name) == 1);
    CHECK(back.at(name).shape == t.shape);
    CHECK(back.at(name).data == t.data);
  }
  // Canonical ordering: re-serializing reproduces identical bytes.
  CHECK(serialize_container(back) == bytes);
}

TEST_CASE("file write/read round-trip") {
  std::mt19937 rng(43);
  const auto tensors = random_tensors(rng, 10);
  const auto path = fs::temp_directory_path() / "points_tensorio_test.bin";
  write_container(tensors, path);
  const auto back = read_container(path);
  fs::remove(path);
  CHECK(serialize_container(back) == serialize_container(tensors));
}

TEST_CASE("malformed files are rejected with distinct diagnostics") {
  const auto good = serialize_container({{"a", tensor({2}, {1.0, 2.0})},
                                         {"b", tensor({3}, {3.0, 4.0, 5.0})}});

  SUBCASE("truncated file") {
    auto bytes = good;
    bytes.resize(bytes.size() - 4);
    CHECK(parse_error_kind(bytes) == ErrorKind::kTruncated);
    CHECK(parse_error_kind({0x01, 0x02}) == ErrorKind::kTruncated);
  }
  SUBCASE("header extends past the end") {
    std::vector<std::uint8_t> bytes{0xFF, 0, 0, 0, 0, 0, 0, 0, '{', '}'};
    CHECK(parse_error_kind(bytes) == ErrorKind::kTruncated);
  }
  SUBCASE("bad header JSON") {
    std::vector<std::uint8_t> bytes{2, 0, 0, 0, 0, 0, 0, 0, '{', 'x'};
    CHECK(parse_error_kind(bytes) == ErrorKind::kBadHeader);
  }
  SUBCASE("unknown dtype") {
    const std::string header =
        R"({"a":{"dtype":"f64","nbytes":8,"offset":0,"shape":[1]}})";
    std::vector<std::uint8_t> bytes(8, 0);
    bytes[0] = static_cast<std::uint8_t>(header.size());
    bytes.insert(bytes.end(), header.begin(), header.end());
    bytes.insert(bytes.end(), 8, 0);
    CHECK(parse_error_kind(bytes) == ErrorKind::kUnknownDtype);
  }
  SUBCASE("nbytes does not match shape") {
    const std::string header =
        R"({"a":{"dtype":"f32","nbytes":12,"offset":0,"shape":[2]}})";
    std::vector<std::uint8_t> bytes(8, 0);
    bytes[0] = static_cast<std::uint8_t>(header.size());
    bytes.insert(bytes.end(), header.begin(), header.end());
    bytes.insert(bytes.end(), 12, 0);
    CHECK(parse_error_kind(bytes) == ErrorKind::kShapeMismatch);
  }
  SUBCASE("overlapping regions") {
    const std::string header =
        R"({"a":{"dtype":"f32","nbytes":8,"offset":0,"shape":[2]},)"
        R"("b":{"dtype":"f32","nbytes":8,"offset":4,"shape":[2]}})";
    std::vector<std::uint8_t> bytes(8, 0);
    bytes[0] = static_cast<std::uint8_t>(header.size());
    bytes.insert(bytes.end(), header.begin(), header.end());
    bytes.insert(bytes.end(), 12, 0);
    CHECK(parse_error_kind(bytes) == ErrorKind::kOverlap);
  }
  SUBCASE("trailing bytes the header does not account for") {
    auto bytes = good;
    bytes.insert(bytes.end(), {0xDE, 0xAD});
    CHECK(parse_error_kind(bytes) == ErrorKind::kLengthMismatch);
  }
}

TEST_CASE("serialization rejects invalid tensors") {
  CHECK_THROWS_AS(serialize_container({{"x", tensor({3}, {1.0})}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      serialize_container({{"x", tensor({1}, {std::nan("")})}}),
      std::invalid_argument);
}
