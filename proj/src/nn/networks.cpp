#include "hrtfp/nn/networks.hpp"

#include "hrtfp/binary_io.hpp"
#include "hrtfp/errors.hpp"
#include "hrtfp/nn/layers.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <string>

namespace hrtfp::nn {

namespace {

constexpr int kEmbedding = 64;
constexpr int kAnthroHidden = 32;
constexpr int kFreqHidden = 16;
constexpr int kEarHidden = 16;
constexpr int kFusion = 256;
constexpr int kDecoderLength = 64;

int n_enc(const NetShape& s) { return static_cast<int>(s.encoder_channels.size()) - 1; }
int n_dec(const NetShape& s) { return static_cast<int>(s.decoder_channels.size()) - 1; }

// tensor index of each layer's weight
int enc_w(int i) { return 2 * i; }
int mag_anthro(const NetShape& s) { return 2 * n_enc(s); }
int mag_freq(const NetShape& s) { return 2 * n_enc(s) + 2; }
int mag_ear(const NetShape& s) { return 2 * n_enc(s) + 4; }
int mag_fusion(const NetShape& s) { return 2 * n_enc(s) + 6; }
int mag_dec(const NetShape& s, int i) { return 2 * n_enc(s) + 8 + 2 * i; }
constexpr int kOnAnthro = 0;
constexpr int kOnEar = 2;
constexpr int kOnFusion = 4;
int on_dec(int i) { return 6 + 2 * i; }
int on_out(const NetShape& s) { return 6 + 2 * n_dec(s); }

ConvGeometry enc_geometry(const NetShape& s, int i) {
  return {s.encoder_channels[i], s.encoder_channels[i + 1], s.kernel, i < s.encoder_strided ? 2 : 1, s.kernel / 2};
}
ConvGeometry dec_geometry(const NetShape& s, int i) {
  return {s.decoder_channels[i], s.decoder_channels[i + 1], s.kernel, 1, s.kernel / 2};
}

struct Layer {
  int out;
  int fan_in;
  int kernel;  // 0 for linear layers
};

std::vector<Layer> layers_of(NetKind kind, const NetShape& s) {
  std::vector<Layer> out;
  const int first_fusion_in = kind == NetKind::kMagnitude ? kEmbedding + kAnthroHidden + kFreqHidden + kEarHidden
                                                          : kAnthroHidden + kEarHidden;
  if (kind == NetKind::kMagnitude) {
    for (int i = 0; i < n_enc(s); ++i) out.push_back({s.encoder_channels[i + 1], s.encoder_channels[i], s.kernel});
  }
  out.push_back({kAnthroHidden, kAnthroCount, 0});
  if (kind == NetKind::kMagnitude) out.push_back({kFreqHidden, kFreqCount, 0});
  out.push_back({kEarHidden, 2, 0});
  out.push_back({kFusion, first_fusion_in, 0});
  for (int i = 0; i < n_dec(s); ++i) out.push_back({s.decoder_channels[i + 1], s.decoder_channels[i], s.kernel});
  if (kind == NetKind::kOnset) out.push_back({kOnsetOutputs, kDecoderLength, 0});
  return out;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void check_onehot(const Eigen::VectorXd& v, Eigen::Index n, const char* what) {
  if (v.size() != n) throw DimensionError(std::string(what) + " one-hot has the wrong length");
  int ones = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (v[i] == 1.0) ++ones;
    else if (v[i] != 0.0) throw DomainError(std::string(what) + " one-hot has a value other than 0/1");
  }
  if (ones != 1) throw DomainError(std::string(what) + " one-hot must have exactly one hot entry");
}

void check_params(const ModelParams& p, NetKind kind) {
  if (p.kind != kind) throw DimensionError("parameters belong to the other network");
  const auto layers = layers_of(kind, p.shape);
  if (p.tensors.size() != 2 * layers.size()) throw DimensionError("parameter tensor count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& w = p.tensors[2 * i];
    const auto& b = p.tensors[2 * i + 1];
    const int k = std::max(1, layers[i].kernel);
    if (w.rows() != layers[i].out || w.cols() != layers[i].fan_in * k || b.rows() != layers[i].out || b.cols() != 1) {
      throw DimensionError("parameter tensor " + std::to_string(2 * i) + " has the wrong shape");
    }
  }
}

// decoder on the fusion output; returns 64 x rows
Eigen::MatrixXd decode(const ModelParams& p, int first, const Eigen::MatrixXd& fusion, ForwardCache& c) {
  const auto& s = p.shape;
  const int rows = static_cast<int>(fusion.cols());
  Eigen::MatrixXd x = to_sequence(fusion, s.decoder_channels.front(), kDecoderLength);
  for (int i = 0; i < n_dec(s); ++i) {
    Eigen::MatrixXd cols;
    Eigen::MatrixXd y = conv_forward(p.tensors[first + 2 * i], p.tensors[first + 2 * i + 1], x, rows,
                                     kDecoderLength, dec_geometry(s, i), cols);
    if (i + 1 < n_dec(s)) y = relu(y);
    c.cols.push_back(std::move(cols));
    c.acts.push_back(y);
    x = std::move(y);
  }
  return from_sequence(x, 1, kDecoderLength);
}

// returns the gradient with respect to the fusion output
Eigen::MatrixXd decode_backward(const ModelParams& p, int first, std::size_t cache_offset, const ForwardCache& c,
                                const Eigen::MatrixXd& d_out, ModelParams& g) {
  const auto& s = p.shape;
  const int rows = static_cast<int>(d_out.cols());
  Eigen::MatrixXd d = to_sequence(d_out, 1, kDecoderLength);
  for (int i = n_dec(s) - 1; i >= 0; --i) {
    if (i + 1 < n_dec(s)) d = relu_backward(c.acts[cache_offset + i], d);
    const int w = first + 2 * i;
    d = conv_backward(p.tensors[w], c.cols[cache_offset + i], d, rows, kDecoderLength, dec_geometry(s, i),
                      g.tensors[w], g.tensors[w + 1]);
  }
  return from_sequence(d, s.decoder_channels.front(), kDecoderLength);
}

}  // namespace

void NetShape::validate() const {
  if (encoder_channels.size() < 2 || encoder_channels.front() != 3 || encoder_channels.back() != kEmbedding) {
    throw DomainError("encoder must map 3 channels to 64");
  }
  if (decoder_channels.size() < 2 || decoder_channels.front() * kDecoderLength != kFusion ||
      decoder_channels.back() != 1) {
    throw DomainError("decoder must map 4 x 64 to 1 x 64");
  }
  if (kernel < 1 || kernel % 2 == 0) throw DomainError("kernel size must be odd");
  if (encoder_strided < 0 || encoder_strided > n_enc(*this)) throw DomainError("bad strided layer count");
  for (int c : encoder_channels) if (c < 1) throw DomainError("channel counts must be positive");
  for (int c : decoder_channels) if (c < 1) throw DomainError("channel counts must be positive");
  int len = sequence_length;
  for (int i = 0; i < n_enc(*this); ++i) len = enc_geometry(*this, i).out_length(len);
  if (len < 1) throw DomainError("encoder reduces the sequence to nothing");
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
  return n;
}

std::vector<std::vector<std::uint32_t>> ModelParams::file_dims() const {
  std::vector<std::vector<std::uint32_t>> dims;
  for (const auto& l : layers_of(kind, shape)) {
    const auto out = static_cast<std::uint32_t>(l.out);
    const auto in = static_cast<std::uint32_t>(l.fan_in);
    if (l.kernel > 0) dims.push_back({out, in, static_cast<std::uint32_t>(l.kernel)});
    else dims.push_back({out, in});
    dims.push_back({out});
  }
  return dims;
}

void ModelParams::set_zero() {
  for (auto& t : tensors) t.setZero();
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors) if (!t.allFinite()) return false;
  return true;
}

ModelParams init_params(NetKind kind, std::uint64_t seed, const NetShape& shape) {
  shape.validate();
  ModelParams p;
  p.kind = kind;
  p.shape = shape;
  p.seed = seed;
  std::mt19937_64 rng(seed);
  for (const auto& l : layers_of(kind, shape)) {
    const int k = std::max(1, l.kernel);
    const double bound = std::sqrt(6.0 / (l.fan_in * k));
    Eigen::MatrixXd w(l.out, l.fan_in * k);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = bound * (2.0 * uniform01(rng) - 1.0);
    }
    p.tensors.push_back(std::move(w));
    p.tensors.push_back(Eigen::MatrixXd::Zero(l.out, 1));
  }
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  z.set_zero();
  return z;
}

Eigen::MatrixXd forward_magnitude(const ModelParams& p, const MagnitudeBatch& batch, ForwardCache* cache) {
  check_params(p, NetKind::kMagnitude);
  const auto& s = p.shape;
  const auto rows = batch.rows();
  if (batch.freq.rows() != kFreqCount || batch.ear.rows() != 2 || batch.anthro.rows() != kAnthroCount ||
      batch.freq.cols() != rows || batch.ear.cols() != rows ||
      static_cast<Eigen::Index>(batch.sch_of_row.size()) != rows) {
    throw DimensionError("magnitude batch shape mismatch");
  }
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c = ForwardCache{};

  const int unique = static_cast<int>(batch.sch.size());
  int len = s.sequence_length;
  Eigen::MatrixXd x(3, static_cast<Eigen::Index>(unique) * len);
  for (int u = 0; u < unique; ++u) {
    if (batch.sch[u].rows() != 3 || batch.sch[u].cols() != len) throw DimensionError("encoder input must be 3 x 441");
    x.middleCols(static_cast<Eigen::Index>(u) * len, len) = batch.sch[u];
  }
  for (int i = 0; i < n_enc(s); ++i) {
    Eigen::MatrixXd cols;
    const auto g = enc_geometry(s, i);
    x = relu(conv_forward(p.tensors[enc_w(i)], p.tensors[enc_w(i) + 1], x, unique, len, g, cols));
    c.cols.push_back(std::move(cols));
    c.acts.push_back(x);
    len = g.out_length(len);
  }
  c.pooled = avg_pool(x, unique, len);

  c.concat.resize(kEmbedding + kAnthroHidden + kFreqHidden + kEarHidden, rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int u = batch.sch_of_row[r];
    if (u < 0 || u >= unique) throw DimensionError("row refers to a missing encoder input");
    c.concat.block(0, r, kEmbedding, 1) = c.pooled.col(u);
  }
  c.anthro = relu(linear_forward(p.tensors[mag_anthro(s)], p.tensors[mag_anthro(s) + 1], batch.anthro));
  c.freq = relu(linear_forward(p.tensors[mag_freq(s)], p.tensors[mag_freq(s) + 1], batch.freq));
  c.ear = relu(linear_forward(p.tensors[mag_ear(s)], p.tensors[mag_ear(s) + 1], batch.ear));
  c.concat.middleRows(kEmbedding, kAnthroHidden) = c.anthro;
  c.concat.middleRows(kEmbedding + kAnthroHidden, kFreqHidden) = c.freq;
  c.concat.bottomRows(kEarHidden) = c.ear;
  c.fusion = relu(linear_forward(p.tensors[mag_fusion(s)], p.tensors[mag_fusion(s) + 1], c.concat));
  return decode(p, mag_dec(s, 0), c.fusion, c);
}

void backward_magnitude(const ModelParams& p, const MagnitudeBatch& batch, const ForwardCache& c,
                        const Eigen::MatrixXd& d_out, ModelParams& g) {
  const auto& s = p.shape;
  const auto rows = batch.rows();
  if (d_out.rows() != kMagnitudeOutputs || d_out.cols() != rows) throw DimensionError("output gradient shape mismatch");
  Eigen::MatrixXd d_fusion = decode_backward(p, mag_dec(s, 0), static_cast<std::size_t>(n_enc(s)), c, d_out, g);
  d_fusion = relu_backward(c.fusion, d_fusion);
  const int f = mag_fusion(s);
  const Eigen::MatrixXd d_cat = linear_backward(p.tensors[f], c.concat, d_fusion, g.tensors[f], g.tensors[f + 1]);

  auto branch = [&](int w, const Eigen::MatrixXd& out, const Eigen::MatrixXd& in, Eigen::Index offset, int n) {
    const Eigen::MatrixXd d = relu_backward(out, d_cat.middleRows(offset, n));
    linear_backward(p.tensors[w], in, d, g.tensors[w], g.tensors[w + 1]);
  };
  branch(mag_anthro(s), c.anthro, batch.anthro, kEmbedding, kAnthroHidden);
  branch(mag_freq(s), c.freq, batch.freq, kEmbedding + kAnthroHidden, kFreqHidden);
  branch(mag_ear(s), c.ear, batch.ear, kEmbedding + kAnthroHidden + kFreqHidden, kEarHidden);

  const int unique = static_cast<int>(batch.sch.size());
  Eigen::MatrixXd d_pooled = Eigen::MatrixXd::Zero(kEmbedding, unique);
  for (Eigen::Index r = 0; r < rows; ++r) d_pooled.col(batch.sch_of_row[r]) += d_cat.block(0, r, kEmbedding, 1);

  std::vector<int> lengths{s.sequence_length};
  for (int i = 0; i < n_enc(s); ++i) lengths.push_back(enc_geometry(s, i).out_length(lengths.back()));
  Eigen::MatrixXd d = avg_pool_backward(d_pooled, lengths.back());
  for (int i = n_enc(s) - 1; i >= 0; --i) {
    d = relu_backward(c.acts[i], d);
    d = conv_backward(p.tensors[enc_w(i)], c.cols[i], d, unique, lengths[i], enc_geometry(s, i),
                      g.tensors[enc_w(i)], g.tensors[enc_w(i) + 1]);
  }
}

Eigen::MatrixXd forward_onset(const ModelParams& p, const OnsetBatch& batch, ForwardCache* cache) {
  check_params(p, NetKind::kOnset);
  const auto rows = batch.rows();
  if (batch.anthro.rows() != kAnthroCount || batch.ear.rows() != 2 || batch.ear.cols() != rows) {
    throw DimensionError("onset batch shape mismatch");
  }
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c = ForwardCache{};
  c.anthro = relu(linear_forward(p.tensors[kOnAnthro], p.tensors[kOnAnthro + 1], batch.anthro));
  c.ear = relu(linear_forward(p.tensors[kOnEar], p.tensors[kOnEar + 1], batch.ear));
  c.concat.resize(kAnthroHidden + kEarHidden, rows);
  c.concat.topRows(kAnthroHidden) = c.anthro;
  c.concat.bottomRows(kEarHidden) = c.ear;
  c.fusion = relu(linear_forward(p.tensors[kOnFusion], p.tensors[kOnFusion + 1], c.concat));
  c.decoded = decode(p, on_dec(0), c.fusion, c);
  const int o = on_out(p.shape);
  return linear_forward(p.tensors[o], p.tensors[o + 1], c.decoded);
}

void backward_onset(const ModelParams& p, const OnsetBatch& batch, const ForwardCache& c,
                    const Eigen::MatrixXd& d_out, ModelParams& g) {
  if (d_out.rows() != kOnsetOutputs || d_out.cols() != batch.rows()) throw DimensionError("output gradient shape mismatch");
  const int o = on_out(p.shape);
  const Eigen::MatrixXd d_dec = linear_backward(p.tensors[o], c.decoded, d_out, g.tensors[o], g.tensors[o + 1]);
  Eigen::MatrixXd d_fusion = decode_backward(p, on_dec(0), 0, c, d_dec, g);
  d_fusion = relu_backward(c.fusion, d_fusion);
  const Eigen::MatrixXd d_cat =
      linear_backward(p.tensors[kOnFusion], c.concat, d_fusion, g.tensors[kOnFusion], g.tensors[kOnFusion + 1]);
  linear_backward(p.tensors[kOnAnthro], batch.anthro, relu_backward(c.anthro, d_cat.topRows(kAnthroHidden)),
                  g.tensors[kOnAnthro], g.tensors[kOnAnthro + 1]);
  linear_backward(p.tensors[kOnEar], batch.ear, relu_backward(c.ear, d_cat.bottomRows(kEarHidden)),
                  g.tensors[kOnEar], g.tensors[kOnEar + 1]);
}

MagnitudeBatch make_batch(const std::vector<MagnitudeNetInput>& inputs) {
  MagnitudeBatch b;
  const auto n = static_cast<Eigen::Index>(inputs.size());
  b.anthro.resize(kAnthroCount, n);
  b.freq.resize(kFreqCount, n);
  b.ear.resize(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& in = inputs[static_cast<std::size_t>(i)];
    if (in.anthro.size() != kAnthroCount) throw DimensionError("anthro input must have 13 values");
    check_onehot(in.freq_onehot, kFreqCount, "frequency");
    check_onehot(in.ear_onehot, 2, "ear");
    b.sch.push_back(in.sch_xyz.transpose());
    b.sch_of_row.push_back(static_cast<int>(i));
    b.anthro.col(i) = in.anthro;
    b.freq.col(i) = in.freq_onehot;
    b.ear.col(i) = in.ear_onehot;
  }
  return b;
}

OnsetBatch make_batch(const std::vector<OnsetNetInput>& inputs) {
  OnsetBatch b;
  const auto n = static_cast<Eigen::Index>(inputs.size());
  b.anthro.resize(kAnthroCount, n);
  b.ear.resize(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& in = inputs[static_cast<std::size_t>(i)];
    if (in.anthro.size() != kAnthroCount) throw DimensionError("anthro input must have 13 values");
    check_onehot(in.ear_onehot, 2, "ear");
    b.anthro.col(i) = in.anthro;
    b.ear.col(i) = in.ear_onehot;
  }
  return b;
}

Eigen::VectorXd forward_magnitude(const ModelParams& p, const MagnitudeNetInput& input) {
  return forward_magnitude(p, make_batch(std::vector<MagnitudeNetInput>{input})).col(0);
}

Eigen::VectorXd forward_onset(const ModelParams& p, const OnsetNetInput& input) {
  return forward_onset(p, make_batch(std::vector<OnsetNetInput>{input})).col(0);
}

namespace {

constexpr char kParamMagic[8] = {'H', 'R', 'T', 'F', 'N', 'N', '1', '\0'};
constexpr std::uint32_t kParamVersion = 1;

}  // namespace

void write_params(const std::filesystem::path& path, const ModelParams& p) {
  if (!p.all_finite()) throw DomainError("refusing to write non-finite parameters");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kParamMagic, 8);
  io::write_u32(out, kParamVersion);
  io::write_u32(out, static_cast<std::uint32_t>(p.tensors.size()));
  const auto dims = p.file_dims();
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    io::write_u32(out, static_cast<std::uint32_t>(dims[i].size()));
    for (auto d : dims[i]) io::write_u32(out, d);
    const auto& t = p.tensors[i];
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index col = 0; col < t.cols(); ++col) io::write_f32(out, static_cast<float>(t(r, col)));
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ModelParams read_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kParamMagic)) {
    throw ParseError(path.string() + ": not a model parameter file");
  }
  if (io::read_u32(in) != kParamVersion) throw ParseError(path.string() + ": unsupported version");
  const auto count = io::read_u32(in);
  if (count > 1024) throw ParseError(path.string() + ": implausible tensor count");
  std::vector<std::vector<std::uint32_t>> dims(count);
  std::vector<Eigen::MatrixXd> tensors;
  for (auto& d : dims) {
    const auto rank = io::read_u32(in);
    if (rank < 1 || rank > 3) throw ParseError(path.string() + ": bad tensor rank");
    std::uint64_t size = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      d.push_back(io::read_u32(in));
      size *= d.back();
    }
    if (size > (1u << 24)) throw ParseError(path.string() + ": tensor too large");
    const Eigen::Index rows = d[0];
    const Eigen::Index cols = static_cast<Eigen::Index>(size / std::max<std::uint32_t>(d[0], 1));
    Eigen::MatrixXd t(rows, rank == 1 ? 1 : cols);
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = io::read_f32(in);
    }
    tensors.push_back(std::move(t));
  }
  // the first tensor is a convolution weight only in the magnitude network
  ModelParams p;
  p.kind = !dims.empty() && dims[0].size() == 3 ? NetKind::kMagnitude : NetKind::kOnset;
  NetShape shape;
  std::size_t i = 0;
  if (p.kind == NetKind::kMagnitude) {
    shape.encoder_channels = {static_cast<int>(dims[0][1])};
    shape.kernel = static_cast<int>(dims[0][2]);
    for (; i < dims.size() && dims[i].size() == 3; i += 2) shape.encoder_channels.push_back(static_cast<int>(dims[i][0]));
  }
  // skip the linear branches and fusion, then read the decoder convolutions
  while (i < dims.size() && dims[i].size() != 3) i += 2;
  if (i < dims.size()) {
    shape.decoder_channels = {static_cast<int>(dims[i][1])};
    shape.kernel = static_cast<int>(dims[i][2]);
    for (; i < dims.size() && dims[i].size() == 3; i += 2) shape.decoder_channels.push_back(static_cast<int>(dims[i][0]));
  }
  shape.encoder_strided = std::min<int>(shape.encoder_strided, static_cast<int>(shape.encoder_channels.size()) - 1);
  p.shape = shape;
  p.tensors = std::move(tensors);
  try {
    shape.validate();
    check_params(p, p.kind);
  } catch (const Error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (p.file_dims() != dims) throw ParseError(path.string() + ": tensor shapes do not match the architecture");
  return p;
}

}  // namespace hrtfp::nn
