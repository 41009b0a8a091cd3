#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mmgcn {

using Scalar = double;

// Every tensor in the engine is a dense 2-D row-major matrix of doubles;
// scalars are 1x1, row vectors 1xd.
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct DataError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

std::string shape_str(const Mat& m);

// Throws NumericError if any entry is NaN/Inf. Non-finite values are treated
// as hard errors everywhere; they never propagate silently.
void require_finite(const Mat& m, const std::string& where);

uint64_t fnv1a64(std::string_view bytes);
uint64_t splitmix64(uint64_t x);

// Deterministic PRNG (xoshiro256**) with hand-rolled distributions so that a
// seed reproduces the exact same stream on any platform. All randomness in
// the project flows from one master seed through named substreams, e.g.
// Rng::substream(seed, "shuffle").
class Rng {
 public:
  explicit Rng(uint64_t seed);

  static Rng substream(uint64_t master_seed, std::string_view name);
  static Rng substream(uint64_t master_seed, std::string_view name, uint64_t index);

  uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal();
  int uniform_int(int n);                // [0, n)

  Mat uniform_mat(Eigen::Index rows, Eigen::Index cols, double lo, double hi);
  Mat normal_mat(Eigen::Index rows, Eigen::Index cols);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (int i = static_cast<int>(items.size()) - 1; i > 0; --i) {
      std::swap(items[static_cast<size_t>(i)], items[static_cast<size_t>(uniform_int(i + 1))]);
    }
  }

 private:
  uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mmgcn
