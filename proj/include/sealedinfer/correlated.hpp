#pragma once

// Correlated randomness for the online phase, as held by ONE party: Beaver
// triples (elementwise and matmul), AND triples over bits, daBits and
// truncation pairs. A CorrelatedStore hands items out strictly in order and
// never twice.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "sealedinfer/bitvec.hpp"
#include "sealedinfer/bytes.hpp"
#include "sealedinfer/prg.hpp"
#include "sealedinfer/ring.hpp"

namespace sealedinfer {

enum class TripleFlavor : std::uint8_t { Elementwise, Matmul };

struct MatmulDims {
  std::size_t m = 0, n = 0, p = 0;
  friend bool operator==(const MatmulDims&, const MatmulDims&) = default;
};

std::string to_string(const MatmulDims& d);

// Party share of `count` elementwise triples: c = a * b per lane.
struct ElementwiseTriples {
  std::vector<RingElement> a, b, c;
  std::size_t size() const noexcept { return a.size(); }
};

// Party share of one matrix triple: C[m x p] = A[m x n] * B[n x p].
struct MatmulTriple {
  MatmulDims dims;
  std::vector<RingElement> a, b, c;
};

// XOR shares of AND triples over bits, 64 gates per word.
struct AndTriples {
  std::vector<std::uint64_t> a, b, c;
  std::size_t words() const noexcept { return a.size(); }
};

// A random bit held as an arithmetic share and an XOR share.
struct DaBits {
  std::vector<RingElement> arith;
  BitVec boolean;
  std::size_t size() const noexcept { return arith.size(); }
};

// Masks for exact truncation by `shift` bits. For a uniform r: shares of r,
// of r >> shift (logical), of msb(r), and XOR shares of the low `shift` bits
// of r packed into one word per lane.
struct TruncPairs {
  int shift = 0;
  std::vector<RingElement> r, r_hi, r_msb;
  std::vector<std::uint64_t> r_low_bits;
  std::size_t size() const noexcept { return r.size(); }
};

// What an online run consumes, in consumption order per kind.
struct Requirements {
  std::size_t elementwise_triples = 0;
  std::vector<MatmulDims> matmul_triples;
  std::size_t and_words = 0;
  std::size_t dabits = 0;
  // (shift, count) runs in order of use.
  std::vector<std::pair<int, std::size_t>> truncpairs;

  void add_truncpairs(int shift, std::size_t count);
  std::size_t truncpair_count() const;
  Requirements& operator+=(const Requirements& other);
  friend bool operator==(const Requirements&, const Requirements&) = default;
};

struct StoreUsage {
  std::size_t elementwise_triples = 0;
  std::size_t matmul_triples = 0;
  std::size_t and_words = 0;
  std::size_t dabits = 0;
  std::size_t truncpairs = 0;
  friend bool operator==(const StoreUsage&, const StoreUsage&) = default;
};

class CorrelatedStore {
 public:
  CorrelatedStore() = default;
  CorrelatedStore(int party, FixedPointConfig cfg, std::uint64_t batch_id = 0)
      : party_(party), cfg_(cfg), batch_id_(batch_id) {}

  int party() const noexcept { return party_; }
  const FixedPointConfig& config() const noexcept { return cfg_; }
  std::uint64_t batch_id() const noexcept { return batch_id_; }
  void set_batch_id(std::uint64_t id) noexcept { batch_id_ = id; }

  void add(ElementwiseTriples t);
  void add(MatmulTriple t);
  void add(AndTriples t);
  void add(DaBits d);
  void add(TruncPairs t);

  // All take_* throw ExhaustedError when the pool cannot serve the request;
  // nothing is consumed in that case.
  ElementwiseTriples take_triples(std::size_t count);
  MatmulTriple take_matmul(const MatmulDims& dims);
  AndTriples take_and(std::size_t words);
  DaBits take_dabits(std::size_t count);
  TruncPairs take_truncpairs(std::size_t count, int shift);

  StoreUsage consumed() const noexcept { return consumed_; }
  StoreUsage remaining() const;
  bool fully_consumed() const { return remaining() == StoreUsage{}; }

  // Section-wise serialization in the .crnd format.
  Bytes serialize() const;
  static CorrelatedStore deserialize(std::span<const std::uint8_t> bytes);

 private:
  int party_ = 0;
  FixedPointConfig cfg_;
  std::uint64_t batch_id_ = 0;

  ElementwiseTriples triples_;
  std::size_t triple_cursor_ = 0;
  std::deque<MatmulTriple> matmuls_;
  std::size_t matmul_cursor_ = 0;
  AndTriples ands_;
  std::size_t and_cursor_ = 0;
  DaBits dabits_;
  std::size_t dabit_cursor_ = 0;
  std::vector<TruncPairs> truncs_;  // one entry per run of equal shift
  std::size_t trunc_run_ = 0;
  std::size_t trunc_cursor_ = 0;

  StoreUsage consumed_;
};

// Share of floor(signed(r) / 2^shift) for lane i, derived linearly from the
// stored r_hi and r_msb shares.
RingElement truncpair_floor_share(const TruncPairs& t, std::size_t i, const FixedPointConfig& cfg);

// Trusted-dealer generation of everything in `req` for both parties. This is
// the weaker third-party trust model; it exists for fast testing.
std::pair<CorrelatedStore, CorrelatedStore> dealer_generate(const Requirements& req,
                                                            const FixedPointConfig& cfg, Prg& prg);

// .crnd files: sections of {magic "CRND", version, k, f, kind, ...} headers
// followed by fixed-width little-endian records.
inline constexpr std::uint16_t kCrndVersion = 1;

std::string crnd_path(const std::string& dir, const std::string& label, int party);
void write_crnd(const std::string& path, const CorrelatedStore& store);
CorrelatedStore read_crnd(const std::string& path);

// Per-kind item counts of a store as "kind=count" lines.
std::string describe_store(const CorrelatedStore& store);

}  // namespace sealedinfer
