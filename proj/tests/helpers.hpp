#ifndef APA_TESTS_HELPERS_HPP
#define APA_TESTS_HELPERS_HPP

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "apa/error.hpp"

namespace test {

/// Scratch directory removed when the test scope ends.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    auto base = std::filesystem::temp_directory_path();
    path_ = base / ("apa_test_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Runs fn and checks it throws apa::Error with the given code.
template <typename Fn>
void check_error(Fn&& fn, const std::string& code) {
  bool threw = false;
  try {
    fn();
  } catch (const apa::Error& e) {
    threw = true;
    CHECK(e.code() == code);
  }
  CHECK_MESSAGE(threw, "expected error " << code);
}

}  // namespace test

#endif
