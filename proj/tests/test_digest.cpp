#include <doctest.h>

#include "taskdb/digest.hpp"

using namespace taskdb;

TEST_CASE("sha256 known vectors") {
  CHECK(Sha256::hex(std::string_view("")) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(Sha256::hex(std::string_view("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(Sha256::hex(std::string_view(
            "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")) ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("sha256 streaming matches one-shot") {
  std::string text(1000, 'x');
  Sha256 h;
  h.update(std::string_view(text).substr(0, 13));
  h.update(std::string_view(text).substr(13, 700));
  h.update(std::string_view(text).substr(713));
  CHECK(to_hex(h.finish()) == Sha256::hex(text));
}

TEST_CASE("sha256 differs on single byte flip") {
  std::string a = "the quick brown fox";
  std::string b = a;
  b[5] ^= 1;
  CHECK(Sha256::hex(a) != Sha256::hex(b));
}
