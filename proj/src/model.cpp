#include "pnc/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pnc {

void PredNetConfig::validate() const {
  if (context_size < 3 || context_size % 2 == 0)
    throw std::invalid_argument("config: context_size must be odd and >= 3");
  if (channels < 1 || num_residual_units < 1)
    throw std::invalid_argument("config: channels and residual units must be >= 1");
}

// ---------------------------------------------------------------------------
// Causal context

void fill_context(const GrayImage& image, int x, int y, int context_size, float* dst) {
  const int half = context_size / 2;
  float* p = dst;
  for (int wy = 0; wy < context_size; ++wy) {
    const int iy = y + wy - half;
    const bool row_causal = wy < half;
    if (!row_causal && wy > half) {  // strictly after the center row
      for (int wx = 0; wx < context_size; ++wx) *p++ = 0.0f;
      continue;
    }
    const int causal_cols = row_causal ? context_size : half;
    for (int wx = 0; wx < causal_cols; ++wx) {
      const int ix = x + wx - half;
      *p++ = image.in_bounds(ix, iy) ? image.at(ix, iy) * (1.0f / 255.0f) : kContextFill;
    }
    for (int wx = causal_cols; wx < context_size; ++wx) *p++ = 0.0f;
  }
}

CausalContext extract_context(const GrayImage& image, int x, int y,
                              const PredNetConfig& config) {
  if (!image.in_bounds(x, y))
    throw std::invalid_argument("extract_context: position out of bounds");
  const int cs = config.context_size;
  CausalContext ctx;
  ctx.window = Tensor({1, 1, cs, cs});
  ctx.origin_x = x;
  ctx.origin_y = y;
  fill_context(image, x, y, cs, ctx.window.data());
  return ctx;
}

Tensor make_context_batch(const GrayImage& image,
                          const std::vector<std::pair<int, int>>& centers,
                          const PredNetConfig& config) {
  const int cs = config.context_size;
  Tensor batch({static_cast<int>(centers.size()), 1, cs, cs});
  float* p = batch.data();
  for (const auto& [x, y] : centers) {
    fill_context(image, x, y, cs, p);
    p += static_cast<int64_t>(cs) * cs;
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Weights

std::vector<Tensor*> PredNetWeights::parameters() {
  std::vector<Tensor*> out{&stem_k, &stem_b};
  for (auto& u : units) {
    out.push_back(&u.conv1_k);
    out.push_back(&u.conv1_b);
    out.push_back(&u.bn1.gamma);
    out.push_back(&u.bn1.beta);
    out.push_back(&u.conv2_k);
    out.push_back(&u.conv2_b);
    out.push_back(&u.bn2.gamma);
    out.push_back(&u.bn2.beta);
  }
  out.push_back(&head_w);
  out.push_back(&head_b);
  return out;
}

std::vector<const Tensor*> PredNetWeights::parameters() const {
  auto mut = const_cast<PredNetWeights*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> PredNetWeights::parameter_names() const {
  std::vector<std::string> out{"stem.k", "stem.b"};
  for (size_t i = 0; i < units.size(); ++i) {
    const std::string u = "unit" + std::to_string(i);
    for (const char* n : {".conv1.k", ".conv1.b", ".bn1.gamma", ".bn1.beta",
                          ".conv2.k", ".conv2.b", ".bn2.gamma", ".bn2.beta"})
      out.push_back(u + n);
  }
  out.push_back("head.w");
  out.push_back("head.b");
  return out;
}

static void he_uniform_fill(Tensor& t, int fan_in, std::mt19937& rng) {
  const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
  for (auto& v : t.values()) v = uniform_float(rng, -limit, limit);
}

PredNetWeights init_weights(const PredNetConfig& config, uint64_t seed) {
  config.validate();
  const int C = config.channels;
  const int cs = config.context_size;
  std::mt19937 rng(static_cast<uint32_t>(seed ^ (seed >> 32)));

  PredNetWeights w;
  w.config = config;
  w.stem_k = Tensor({C, 1, 3, 3});
  w.stem_b = Tensor({C});
  he_uniform_fill(w.stem_k, 1 * 9, rng);
  w.units.resize(config.num_residual_units);
  for (auto& u : w.units) {
    u.conv1_k = Tensor({C, C, 3, 3});
    u.conv1_b = Tensor({C});
    u.bn1 = BatchNormState(C);
    u.conv2_k = Tensor({C, C, 3, 3});
    u.conv2_b = Tensor({C});
    u.bn2 = BatchNormState(C);
    he_uniform_fill(u.conv1_k, C * 9, rng);
    he_uniform_fill(u.conv2_k, C * 9, rng);
  }
  w.head_w = Tensor({1, C * cs * cs});
  w.head_b = Tensor({1});
  he_uniform_fill(w.head_w, C * cs * cs, rng);
  return w;
}

// ---------------------------------------------------------------------------
// Forward / backward

static Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.data();
  for (int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] + pb[i];
  return out;
}

Tensor prednet_forward(PredNetWeights& w, const Tensor& contexts, BnMode mode,
                       PredNetTape* tape) {
  const int cs = w.config.context_size;
  if (contexts.ndim() != 4 || contexts.dim(1) != 1 || contexts.dim(2) != cs ||
      contexts.dim(3) != cs)
    throw std::invalid_argument("prednet_forward: contexts must be [B,1," +
                                std::to_string(cs) + "," + std::to_string(cs) +
                                "], got " + contexts.shape_str());
  const int B = contexts.dim(0);
  const float slope = w.config.leak_slope;

  if (tape) {
    tape->input = contexts;
    tape->units.resize(w.units.size());
  }

  Tensor x = conv2d(contexts, w.stem_k, w.stem_b);
  if (tape) tape->stem_out = x;

  for (size_t i = 0; i < w.units.size(); ++i) {
    auto& u = w.units[i];
    PredNetTape::UnitTape* ut = tape ? &tape->units[i] : nullptr;
    if (ut) ut->in = x;
    Tensor c1 = conv2d(x, u.conv1_k, u.conv1_b);
    Tensor b1 = batchnorm(c1, u.bn1, mode, ut ? &ut->bn1 : nullptr);
    Tensor a1 = leaky_relu(b1, slope);
    Tensor c2 = conv2d(a1, u.conv2_k, u.conv2_b);
    Tensor b2 = batchnorm(c2, u.bn2, mode, ut ? &ut->bn2 : nullptr);
    Tensor a2 = leaky_relu(b2, slope);
    x = add(a2, x);
    if (ut) {
      ut->c1 = std::move(c1);
      ut->b1 = std::move(b1);
      ut->a1 = std::move(a1);
      ut->c2 = std::move(c2);
      ut->b2 = std::move(b2);
    }
  }

  Tensor flat({B, w.config.channels * cs * cs}, x.values());
  if (tape) tape->flat = flat;
  return linear(flat, w.head_w, w.head_b);
}

Tensor prednet_forward_eval(const PredNetWeights& weights, const Tensor& contexts) {
  // Eval mode leaves all state untouched; the cast keeps one implementation.
  return prednet_forward(const_cast<PredNetWeights&>(weights), contexts, BnMode::Eval);
}

PredNetGrads prednet_backward(const PredNetWeights& w, const PredNetTape& tape,
                              const Tensor& grad_pred) {
  const float slope = w.config.leak_slope;
  const int B = tape.input.dim(0);
  const int cs = w.config.context_size;

  PredNetGrads grads;
  std::vector<Tensor> unit_grads(w.units.size() * 8);

  LinearGrads head = linear_backward(tape.flat, w.head_w, grad_pred);
  Tensor gx({B, w.config.channels, cs, cs}, head.input.values());

  for (int i = static_cast<int>(w.units.size()) - 1; i >= 0; --i) {
    const auto& u = w.units[i];
    const auto& ut = tape.units[i];
    Tensor ga2 = leaky_relu_backward(ut.b2, slope, gx);
    BnGrads g_bn2 = batchnorm_backward(ut.c2, u.bn2, ut.bn2, ga2);
    Conv2dGrads g_c2 = conv2d_backward(ut.a1, u.conv2_k, g_bn2.input);
    Tensor ga1 = leaky_relu_backward(ut.b1, slope, g_c2.input);
    BnGrads g_bn1 = batchnorm_backward(ut.c1, u.bn1, ut.bn1, ga1);
    Conv2dGrads g_c1 = conv2d_backward(ut.in, u.conv1_k, g_bn1.input);
    // skip connection: upstream gradient flows into the unit input directly
    gx = add(g_c1.input, gx);

    Tensor* slot = &unit_grads[static_cast<size_t>(i) * 8];
    slot[0] = std::move(g_c1.kernel);
    slot[1] = std::move(g_c1.bias);
    slot[2] = std::move(g_bn1.gamma);
    slot[3] = std::move(g_bn1.beta);
    slot[4] = std::move(g_c2.kernel);
    slot[5] = std::move(g_c2.bias);
    slot[6] = std::move(g_bn2.gamma);
    slot[7] = std::move(g_bn2.beta);
  }

  Conv2dGrads g_stem = conv2d_backward(tape.input, w.stem_k, gx);

  grads.tensors.push_back(std::move(g_stem.kernel));
  grads.tensors.push_back(std::move(g_stem.bias));
  for (auto& t : unit_grads) grads.tensors.push_back(std::move(t));
  grads.tensors.push_back(std::move(head.weights));
  grads.tensors.push_back(std::move(head.bias));
  return grads;
}

// ---------------------------------------------------------------------------
// Refinement network

std::vector<Tensor*> RefineNetWeights::parameters() {
  return {&w1, &b1, &w2, &b2, &w3, &b3};
}
std::vector<const Tensor*> RefineNetWeights::parameters() const {
  auto mut = const_cast<RefineNetWeights*>(this)->parameters();
  return {mut.begin(), mut.end()};
}
std::vector<std::string> RefineNetWeights::parameter_names() const {
  return {"refine.w1", "refine.b1", "refine.w2", "refine.b2", "refine.w3", "refine.b3"};
}

static RefineNetWeights empty_refine() {
  RefineNetWeights w;
  const int H = RefineNetWeights::kHidden;
  w.w1 = Tensor({H, 3});
  w.b1 = Tensor({H});
  w.w2 = Tensor({H, H});
  w.b2 = Tensor({H});
  w.w3 = Tensor({1, H});
  w.b3 = Tensor({1});
  return w;
}

RefineNetWeights init_refine_weights(uint64_t seed) {
  std::mt19937 rng(static_cast<uint32_t>(seed ^ (seed >> 32)) ^ 0x9e3779b9u);
  RefineNetWeights w = empty_refine();
  he_uniform_fill(w.w1, 3, rng);
  he_uniform_fill(w.w2, RefineNetWeights::kHidden, rng);
  he_uniform_fill(w.w3, RefineNetWeights::kHidden, rng);
  return w;
}

RefineNetWeights identity_refine_weights() {
  // lrelu(x) - lrelu(-x) == (1 + slope) * x, so routing +/- copies of the
  // first input through two hidden units reproduces it exactly.
  RefineNetWeights w = empty_refine();
  const float inv = 1.0f / (1.0f + w.leak_slope);
  w.w1.at2(0, 0) = 1.0f;
  w.w1.at2(1, 0) = -1.0f;
  w.w2.at2(0, 0) = inv;
  w.w2.at2(0, 1) = -inv;
  w.w2.at2(1, 0) = -inv;
  w.w2.at2(1, 1) = inv;
  w.w3.at2(0, 0) = inv;
  w.w3.at2(0, 1) = -inv;
  return w;
}

Tensor refine_forward_batch(const RefineNetWeights& w, const Tensor& triples,
                            RefineTape* tape) {
  if (triples.ndim() != 2 || triples.dim(1) != 3)
    throw std::invalid_argument("refine_forward: input must be [B,3], got " +
                                triples.shape_str());
  Tensor z1 = linear(triples, w.w1, w.b1);
  Tensor a1 = leaky_relu(z1, w.leak_slope);
  Tensor z2 = linear(a1, w.w2, w.b2);
  Tensor a2 = leaky_relu(z2, w.leak_slope);
  Tensor out = linear(a2, w.w3, w.b3);
  if (tape) {
    tape->input = triples;
    tape->z1 = std::move(z1);
    tape->a1 = std::move(a1);
    tape->z2 = std::move(z2);
    tape->a2 = std::move(a2);
  }
  return out;
}

float refine_forward(const RefineNetWeights& weights, float p1, float p2, float pinf) {
  Tensor in({1, 3}, {p1, p2, pinf});
  return refine_forward_batch(weights, in)[0];
}

RefineGrads refine_backward(const RefineNetWeights& w, const RefineTape& tape,
                            const Tensor& grad_out) {
  LinearGrads g3 = linear_backward(tape.a2, w.w3, grad_out);
  Tensor gz2 = leaky_relu_backward(tape.z2, w.leak_slope, g3.input);
  LinearGrads g2 = linear_backward(tape.a1, w.w2, gz2);
  Tensor gz1 = leaky_relu_backward(tape.z1, w.leak_slope, g2.input);
  LinearGrads g1 = linear_backward(tape.input, w.w1, gz1);
  RefineGrads g;
  g.tensors = {std::move(g1.weights), std::move(g1.bias), std::move(g2.weights),
               std::move(g2.bias),    std::move(g3.weights), std::move(g3.bias)};
  return g;
}

// ---------------------------------------------------------------------------
// Serialization

uint32_t fnv1a32(const uint8_t* data, size_t n, uint32_t seed) {
  uint32_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 16777619u;
  }
  return h;
}

uint64_t fnv1a64(const uint8_t* data, size_t n, uint64_t seed) {
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

constexpr char kMagic[4] = {'P', 'N', 'W', '1'};
constexpr uint8_t kVersion = 1;
constexpr uint8_t kKindPredNet = 0;
constexpr uint8_t kKindRefine = 1;

struct ByteWriter {
  std::vector<uint8_t> bytes;
  void u8(uint8_t v) { bytes.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void tensor(const Tensor& t) {
    u32(static_cast<uint32_t>(t.ndim()));
    for (int d : t.shape()) u32(static_cast<uint32_t>(d));
    for (float v : t.values()) f32(v);
  }
  void vec(const std::vector<float>& v) {
    u32(1);
    u32(static_cast<uint32_t>(v.size()));
    for (float x : v) f32(x);
  }
};

struct ByteReader {
  const uint8_t* p;
  size_t n;
  size_t pos = 0;
  void need(size_t k) const {
    if (pos + k > n)
      throw WeightIoError(WeightIoError::Kind::Truncated, "weight file truncated");
  }
  uint8_t u8() {
    need(1);
    return p[pos++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  Tensor tensor() {
    const uint32_t ndim = u32();
    if (ndim == 0 || ndim > 8)
      throw WeightIoError(WeightIoError::Kind::Truncated, "weight file: bad tensor rank");
    std::vector<int> shape(ndim);
    int64_t numel = 1;
    for (auto& d : shape) {
      const uint32_t v = u32();
      if (v == 0 || v > (1u << 24))
        throw WeightIoError(WeightIoError::Kind::Truncated, "weight file: bad dimension");
      d = static_cast<int>(v);
      numel *= d;
    }
    need(static_cast<size_t>(numel) * 4);
    std::vector<float> values(numel);
    for (auto& v : values) v = f32();
    return Tensor(std::move(shape), std::move(values));
  }
  std::vector<float> vec() {
    Tensor t = tensor();
    return t.values();
  }
};

void serialize_prednet(ByteWriter& w, const PredNetWeights& weights) {
  w.u8(kKindPredNet);
  w.i32(weights.config.context_size);
  w.i32(weights.config.channels);
  w.i32(weights.config.num_residual_units);
  w.f32(weights.config.leak_slope);
  w.u8(static_cast<uint8_t>(weights.config.objective));
  w.tensor(weights.stem_k);
  w.tensor(weights.stem_b);
  for (const auto& u : weights.units) {
    w.tensor(u.conv1_k);
    w.tensor(u.conv1_b);
    w.tensor(u.bn1.gamma);
    w.tensor(u.bn1.beta);
    w.vec(u.bn1.running_mean);
    w.vec(u.bn1.running_var);
    w.f32(u.bn1.momentum);
    w.f32(u.bn1.eps);
    w.tensor(u.conv2_k);
    w.tensor(u.conv2_b);
    w.tensor(u.bn2.gamma);
    w.tensor(u.bn2.beta);
    w.vec(u.bn2.running_mean);
    w.vec(u.bn2.running_var);
    w.f32(u.bn2.momentum);
    w.f32(u.bn2.eps);
  }
  w.tensor(weights.head_w);
  w.tensor(weights.head_b);
}

PredNetWeights deserialize_prednet(ByteReader& r) {
  PredNetWeights weights;
  weights.config.context_size = r.i32();
  weights.config.channels = r.i32();
  weights.config.num_residual_units = r.i32();
  weights.config.leak_slope = r.f32();
  weights.config.objective = static_cast<Objective>(r.u8());
  weights.config.validate();
  weights.stem_k = r.tensor();
  weights.stem_b = r.tensor();
  weights.units.resize(weights.config.num_residual_units);
  for (auto& u : weights.units) {
    u.conv1_k = r.tensor();
    u.conv1_b = r.tensor();
    u.bn1.gamma = r.tensor();
    u.bn1.beta = r.tensor();
    u.bn1.running_mean = r.vec();
    u.bn1.running_var = r.vec();
    u.bn1.momentum = r.f32();
    u.bn1.eps = r.f32();
    u.conv2_k = r.tensor();
    u.conv2_b = r.tensor();
    u.bn2.gamma = r.tensor();
    u.bn2.beta = r.tensor();
    u.bn2.running_mean = r.vec();
    u.bn2.running_var = r.vec();
    u.bn2.momentum = r.f32();
    u.bn2.eps = r.f32();
  }
  weights.head_w = r.tensor();
  weights.head_b = r.tensor();
  return weights;
}

void serialize_refine(ByteWriter& w, const RefineNetWeights& weights) {
  w.u8(kKindRefine);
  w.i32(RefineNetWeights::kHidden);
  w.f32(weights.leak_slope);
  for (const Tensor* t : weights.parameters()) w.tensor(*t);
}

RefineNetWeights deserialize_refine(ByteReader& r) {
  RefineNetWeights weights;
  const int hidden = r.i32();
  if (hidden != RefineNetWeights::kHidden)
    throw WeightIoError(WeightIoError::Kind::Truncated, "refine weights: bad layer width");
  weights.leak_slope = r.f32();
  weights.w1 = r.tensor();
  weights.b1 = r.tensor();
  weights.w2 = r.tensor();
  weights.b2 = r.tensor();
  weights.w3 = r.tensor();
  weights.b3 = r.tensor();
  return weights;
}

void write_container(const std::vector<uint8_t>& payload, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kMagic, 4);
  out.put(static_cast<char>(kVersion));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  const uint32_t sum = fnv1a32(payload.data(), payload.size());
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>(sum >> (8 * i)));
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<uint8_t> read_container(const std::string& path, uint8_t expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw WeightIoError(WeightIoError::Kind::BadMagic, "bad magic in " + path);
  if (bytes.size() < 5 || bytes[4] != kVersion)
    throw WeightIoError(WeightIoError::Kind::BadVersion, "unsupported version in " + path);
  if (bytes.size() < 9 + 1)
    throw WeightIoError(WeightIoError::Kind::Truncated, "weight file truncated: " + path);
  // payload = bytes[5 .. n-4); the final 4 bytes are its checksum
  const size_t payload_len = bytes.size() - 9;
  const uint8_t* payload = bytes.data() + 5;
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);
  if (payload[0] != expected_kind)
    throw WeightIoError(WeightIoError::Kind::BadKind, "wrong weight kind in " + path);
  // structural truncation is reported during parsing; verify the checksum
  // afterwards so the two failure kinds stay distinct
  std::vector<uint8_t> out(payload, payload + payload_len);
  ByteReader probe{out.data(), out.size()};
  probe.u8();  // kind
  try {
    if (expected_kind == kKindPredNet)
      (void)deserialize_prednet(probe);
    else
      (void)deserialize_refine(probe);
  } catch (const WeightIoError&) {
    throw;
  }
  if (fnv1a32(out.data(), out.size()) != stored)
    throw WeightIoError(WeightIoError::Kind::BadChecksum, "checksum mismatch in " + path);
  return out;
}

}  // namespace

void save_weights(const PredNetWeights& weights, const std::string& path) {
  ByteWriter w;
  serialize_prednet(w, weights);
  write_container(w.bytes, path);
}

PredNetWeights load_weights(const std::string& path) {
  std::vector<uint8_t> payload = read_container(path, kKindPredNet);
  ByteReader r{payload.data(), payload.size()};
  r.u8();
  return deserialize_prednet(r);
}

void save_refine_weights(const RefineNetWeights& weights, const std::string& path) {
  ByteWriter w;
  serialize_refine(w, weights);
  write_container(w.bytes, path);
}

RefineNetWeights load_refine_weights(const std::string& path) {
  std::vector<uint8_t> payload = read_container(path, kKindRefine);
  ByteReader r{payload.data(), payload.size()};
  r.u8();
  return deserialize_refine(r);
}

uint64_t weights_fingerprint(const PredNetWeights& weights) {
  ByteWriter w;
  serialize_prednet(w, weights);
  return fnv1a64(w.bytes.data(), w.bytes.size());
}

uint64_t refine_fingerprint(const RefineNetWeights& weights) {
  ByteWriter w;
  serialize_refine(w, weights);
  return fnv1a64(w.bytes.data(), w.bytes.size());
}

}  // namespace pnc
