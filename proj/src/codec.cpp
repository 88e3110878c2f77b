#include "pnc/codec.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "pnc/metrics.hpp"
#include "pnc/model.hpp"

namespace pnc {

namespace {
constexpr uint64_t kHalf = 0x80000000ull;
constexpr uint64_t kQuarter = 0x40000000ull;
constexpr uint64_t kThreeQuarter = 0xC0000000ull;
constexpr uint64_t kMask = 0xFFFFFFFFull;
constexpr char kMagic[4] = {'P', 'R', 'C', '1'};
constexpr uint8_t kVersion = 1;
// A valid stream never reads more than one preload's worth of bits past its
// physical end (the flush tail plus byte padding covers the rest).
constexpr int64_t kMaxPhantomBits = 32;
}  // namespace

// ---------------------------------------------------------------------------
// ResidualModel

void ResidualModel::range_of(int sym, uint32_t& cum_lo, uint32_t& freq) const {
  uint32_t lo = 0;
  for (int i = 0; i < sym; ++i) lo += counts_[i];
  cum_lo = lo;
  freq = counts_[sym];
}

int ResidualModel::find(uint32_t scaled, uint32_t& cum_lo, uint32_t& freq) const {
  if (scaled >= total_)
    throw CodecError(CodecError::Kind::SymbolOutOfRange,
                     "decoded frequency outside model range");
  uint32_t lo = 0;
  for (int i = 0; i < kSymbols; ++i) {
    if (scaled < lo + counts_[i]) {
      cum_lo = lo;
      freq = counts_[i];
      return i;
    }
    lo += counts_[i];
  }
  throw CodecError(CodecError::Kind::SymbolOutOfRange, "model scan overflow");
}

void ResidualModel::update(int sym) {
  counts_[sym] += 1;
  total_ += 1;
  if (total_ >= kRescaleThreshold) {
    uint32_t t = 0;
    for (auto& c : counts_) {
      c = (c + 1) / 2;  // halve, floor at 1
      t += c;
    }
    total_ = t;
  }
}

// ---------------------------------------------------------------------------
// ArithEncoder

void ArithEncoder::push_bit(uint32_t bit) {
  bit_buf_ = static_cast<uint8_t>((bit_buf_ << 1) | bit);
  if (++bit_count_ == 8) {
    out_.push_back(bit_buf_);
    bit_buf_ = 0;
    bit_count_ = 0;
  }
}

void ArithEncoder::emit_bit(uint32_t bit) {
  push_bit(bit);
  for (; pending_ > 0; --pending_) push_bit(bit ^ 1u);
}

void ArithEncoder::encode(uint32_t cum_lo, uint32_t freq, uint32_t total) {
  const uint64_t range = high_ - low_ + 1;
  high_ = low_ + range * (cum_lo + freq) / total - 1;
  low_ = low_ + range * cum_lo / total;
  for (;;) {
    if (high_ < kHalf) {
      emit_bit(0);
    } else if (low_ >= kHalf) {
      emit_bit(1);
      low_ -= kHalf;
      high_ -= kHalf;
    } else if (low_ >= kQuarter && high_ < kThreeQuarter) {
      ++pending_;
      low_ -= kQuarter;
      high_ -= kQuarter;
    } else {
      break;
    }
    low_ <<= 1;
    high_ = (high_ << 1) | 1;
  }
}

void ArithEncoder::flush() {
  ++pending_;
  emit_bit(low_ >= kQuarter ? 1 : 0);
  while (bit_count_ != 0) push_bit(0);
}

// ---------------------------------------------------------------------------
// ArithDecoder

ArithDecoder::ArithDecoder(const uint8_t* data, size_t size)
    : data_(data), size_(size) {
  for (int i = 0; i < 32; ++i) code_ = (code_ << 1) | next_bit();
}

uint32_t ArithDecoder::next_bit() {
  if (byte_pos_ >= size_) {
    if (++overrun_ > kMaxPhantomBits)
      throw CodecError(CodecError::Kind::TruncatedPayload,
                       "arithmetic payload exhausted");
    return 0;
  }
  const uint32_t bit = (data_[byte_pos_] >> (7 - bit_pos_)) & 1u;
  if (++bit_pos_ == 8) {
    bit_pos_ = 0;
    ++byte_pos_;
  }
  return bit;
}

uint32_t ArithDecoder::decode_target(uint32_t total) const {
  const uint64_t range = high_ - low_ + 1;
  return static_cast<uint32_t>(((code_ - low_ + 1) * total - 1) / range);
}

void ArithDecoder::consume(uint32_t cum_lo, uint32_t freq, uint32_t total) {
  const uint64_t range = high_ - low_ + 1;
  high_ = low_ + range * (cum_lo + freq) / total - 1;
  low_ = low_ + range * cum_lo / total;
  for (;;) {
    if (high_ < kHalf) {
      // nothing
    } else if (low_ >= kHalf) {
      low_ -= kHalf;
      high_ -= kHalf;
      code_ -= kHalf;
    } else if (low_ >= kQuarter && high_ < kThreeQuarter) {
      low_ -= kQuarter;
      high_ -= kQuarter;
      code_ -= kQuarter;
    } else {
      break;
    }
    low_ <<= 1;
    high_ = (high_ << 1) | 1;
    code_ = ((code_ << 1) | next_bit()) & kMask;
  }
}

// ---------------------------------------------------------------------------
// Stream container

std::vector<uint8_t> CodedStream::serialize() const {
  std::vector<uint8_t> out;
  out.reserve(header_bytes() + payload.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  auto u32 = [&out](uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  };
  u32(width);
  u32(height);
  out.push_back(static_cast<uint8_t>(predictor));
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<uint8_t>(weight_fingerprint >> (8 * i)));
  u32(pixel_checksum);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

CodedStream CodedStream::parse(const std::vector<uint8_t>& bytes) {
  CodedStream s;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CodecError(CodecError::Kind::BadMagic, "not a coded stream (bad magic)");
  if (bytes[4] != kVersion)
    throw CodecError(CodecError::Kind::BadVersion, "unsupported stream version");
  if (bytes.size() < s.header_bytes())
    throw CodecError(CodecError::Kind::TruncatedPayload, "stream header truncated");
  size_t pos = 5;
  auto u32 = [&bytes, &pos]() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  };
  s.width = u32();
  s.height = u32();
  const uint8_t pid = bytes[pos++];
  if (pid > static_cast<uint8_t>(PredictorId::PredNetR))
    throw CodecError(CodecError::Kind::BadHeader, "unknown predictor id");
  s.predictor = static_cast<PredictorId>(pid);
  s.weight_fingerprint = 0;
  for (int i = 0; i < 8; ++i)
    s.weight_fingerprint |= static_cast<uint64_t>(bytes[pos + i]) << (8 * i);
  pos += 8;
  s.pixel_checksum = u32();
  if (s.width == 0 || s.height == 0 ||
      static_cast<uint64_t>(s.width) * s.height > (1ull << 30))
    throw CodecError(CodecError::Kind::BadHeader, "implausible stream dimensions");
  s.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return s;
}

uint64_t resources_fingerprint(PredictorId id, const PredictorResources& res) {
  switch (id) {
    case PredictorId::Left:
    case PredictorId::Gap:
      return 0;
    case PredictorId::PredNet:
      return weights_fingerprint(res.primary());
    case PredictorId::PredNetR: {
      // order: l1, l2, linf, refine
      uint64_t h = weights_fingerprint(*res.l1);
      h = h * 1099511628211ull ^ weights_fingerprint(*res.l2);
      h = h * 1099511628211ull ^ weights_fingerprint(*res.linf);
      h = h * 1099511628211ull ^ refine_fingerprint(*res.refine);
      return h;
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// encode / decode

CodedStream encode(const GrayImage& image, PredictorId predictor,
                   const PredictorResources& res) {
  if (image.num_pixels() == 0) throw std::invalid_argument("encode: empty image");
  res.require(predictor);

  CodedStream s;
  s.width = static_cast<uint32_t>(image.width);
  s.height = static_cast<uint32_t>(image.height);
  s.predictor = predictor;
  s.weight_fingerprint = resources_fingerprint(predictor, res);
  s.pixel_checksum = fnv1a32(image.pixels.data(), image.pixels.size());

  const bool normalized = predictor_is_normalized(predictor);
  ResidualModel model;
  ArithEncoder enc(s.payload);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const double xhat = predict_pixel(image, x, y, predictor, res);
      if (!std::isfinite(xhat))
        throw std::runtime_error("encode: non-finite prediction at pixel (" +
                                 std::to_string(x) + "," + std::to_string(y) + ")");
      const int q = quantize_prediction(xhat, normalized);
      const int sym = ResidualModel::symbol_of(image.at(x, y) - q);
      uint32_t cum_lo, freq;
      model.range_of(sym, cum_lo, freq);
      enc.encode(cum_lo, freq, model.total());
      model.update(sym);
    }
  }
  enc.flush();
  return s;
}

GrayImage decode(const CodedStream& s, const PredictorResources& res) {
  res.require(s.predictor);
  if (resources_fingerprint(s.predictor, res) != s.weight_fingerprint)
    throw CodecError(CodecError::Kind::WeightMismatch,
                     "stream was coded with different weights");

  const bool normalized = predictor_is_normalized(s.predictor);
  GrayImage image(static_cast<int>(s.width), static_cast<int>(s.height));
  ResidualModel model;
  ArithDecoder dec(s.payload.data(), s.payload.size());
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const double xhat = predict_pixel(image, x, y, s.predictor, res);
      const int q = quantize_prediction(xhat, normalized);
      const uint32_t target = dec.decode_target(model.total());
      uint32_t cum_lo, freq;
      const int sym = model.find(target, cum_lo, freq);
      dec.consume(cum_lo, freq, model.total());
      model.update(sym);
      const int value = q + ResidualModel::residual_of(sym);
      if (value < 0 || value > 255)
        throw CodecError(CodecError::Kind::PayloadCorrupt,
                         "decoded sample out of range at pixel (" +
                             std::to_string(x) + "," + std::to_string(y) + ")");
      image.at(x, y) = static_cast<uint8_t>(value);
    }
  }
  if (fnv1a32(image.pixels.data(), image.pixels.size()) != s.pixel_checksum)
    throw CodecError(CodecError::Kind::PayloadCorrupt,
                     "decoded image fails the stream checksum");
  return image;
}

void write_stream(const CodedStream& stream, const std::string& path) {
  const std::vector<uint8_t> bytes = stream.serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

CodedStream read_stream(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return CodedStream::parse(bytes);
}

}  // namespace pnc
