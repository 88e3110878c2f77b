#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pnc/image.hpp"
#include "pnc/predictors.hpp"

namespace pnc {

// Adaptive order-0 frequency model over the 511 possible residuals
// (-255..255). Counts start at 1 and are halved (floor, minimum 1) when the
// total reaches 2^16. Encoder and decoder apply identical updates, so their
// states stay in lockstep.
class ResidualModel {
 public:
  static constexpr int kSymbols = 511;
  static constexpr uint32_t kRescaleThreshold = 1u << 16;

  ResidualModel() : counts_(kSymbols, 1), total_(kSymbols) {}

  static int symbol_of(int residual) { return residual + 255; }
  static int residual_of(int symbol) { return symbol - 255; }

  uint32_t total() const { return total_; }
  // cumulative count below `sym` and the count of `sym` itself
  void range_of(int sym, uint32_t& cum_lo, uint32_t& freq) const;
  // symbol whose cumulative interval contains `scaled`
  int find(uint32_t scaled, uint32_t& cum_lo, uint32_t& freq) const;

  void update(int sym);

  bool operator==(const ResidualModel& o) const {
    return counts_ == o.counts_ && total_ == o.total_;
  }

 private:
  std::vector<uint32_t> counts_;
  uint32_t total_;
};

// Integer arithmetic coder, 32-bit range with pending-bit carry handling.
class ArithEncoder {
 public:
  explicit ArithEncoder(std::vector<uint8_t>& out) : out_(out) {}
  void encode(uint32_t cum_lo, uint32_t freq, uint32_t total);
  // Terminates the stream; at most 5 bytes of tail.
  void flush();

 private:
  void emit_bit(uint32_t bit);
  void push_bit(uint32_t bit);

  std::vector<uint8_t>& out_;
  uint64_t low_ = 0;
  uint64_t high_ = 0xFFFFFFFFull;
  uint64_t pending_ = 0;
  uint8_t bit_buf_ = 0;
  int bit_count_ = 0;
};

struct CodecError : std::runtime_error {
  enum class Kind {
    BadMagic,
    BadVersion,
    BadHeader,
    WeightMismatch,
    TruncatedPayload,
    SymbolOutOfRange,
    PayloadCorrupt,
  };
  Kind kind;
  CodecError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

class ArithDecoder {
 public:
  ArithDecoder(const uint8_t* data, size_t size);
  // scaled value to search the model's cumulative ranges with
  uint32_t decode_target(uint32_t total) const;
  void consume(uint32_t cum_lo, uint32_t freq, uint32_t total);

 private:
  uint32_t next_bit();

  const uint8_t* data_;
  size_t size_;
  size_t byte_pos_ = 0;
  int bit_pos_ = 0;
  // Bits read past the physical end of the payload. The final flush makes a
  // few phantom zero bits legal; more than that means truncation.
  int64_t overrun_ = 0;
  uint64_t low_ = 0;
  uint64_t high_ = 0xFFFFFFFFull;
  uint64_t code_ = 0;
};

// Serialized stream layout (little-endian): magic "PRC1", version byte,
// u32 width, u32 height, predictor id byte, u64 weight fingerprint
// (0 for baselines), u32 pixel checksum (FNV-1a over the original samples),
// then the arithmetic-coded residual payload.
struct CodedStream {
  uint32_t width = 0;
  uint32_t height = 0;
  PredictorId predictor = PredictorId::Left;
  uint64_t weight_fingerprint = 0;
  uint32_t pixel_checksum = 0;
  std::vector<uint8_t> payload;

  std::vector<uint8_t> serialize() const;
  static CodedStream parse(const std::vector<uint8_t>& bytes);

  size_t header_bytes() const { return 4 + 1 + 4 + 4 + 1 + 8 + 4; }
};

uint64_t resources_fingerprint(PredictorId id, const PredictorResources& res);

// Raster-scan sequential prediction feeding the adaptive coder. Network
// predictions run pixel-at-a-time in eval mode so the decoder reproduces
// them bit-exactly.
CodedStream encode(const GrayImage& image, PredictorId predictor,
                   const PredictorResources& res = {});

GrayImage decode(const CodedStream& stream, const PredictorResources& res = {});

// File-level wrappers for .prc streams.
void write_stream(const CodedStream& stream, const std::string& path);
CodedStream read_stream(const std::string& path);

}  // namespace pnc
