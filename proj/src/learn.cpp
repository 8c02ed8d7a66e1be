#include "maskvo/learn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "maskvo/error.hpp"

namespace maskvo::learn {

namespace {

constexpr int kConvLayers = 4;
constexpr int kKernel = 3;
constexpr int kStride = 2;
constexpr int kPad = 1;
constexpr int kDownsample = 16;  // 2^kConvLayers
constexpr int kMaxChannels = 256;
constexpr char kCheckpointMagic[] = "maskvo-checkpoint";

std::vector<int> channel_plan(int channels) { return {2, 8, 16, 32, channels}; }

Tensor glorot(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  int n = 1;
  for (int d : shape) n *= d;
  std::vector<double> data(static_cast<std::size_t>(n));
  for (double& v : data) v = rng.uniform(-limit, limit);
  return Tensor::variable(std::move(shape), data);
}

Tensor zeros_variable(std::vector<int> shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return Tensor::variable(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

int padded_to_multiple(int v, int multiple) { return ((v + multiple - 1) / multiple) * multiple; }

void check_finite(const geometry::Vec3& v, const char* who) {
  if (!v.allFinite()) throw InvalidArgument(std::string(who) + ": non-finite component");
}

}  // namespace

Pose6Dof pose6_from_pose(const geometry::Pose& pose) {
  if (pose.rotation.angle() >= M_PI - 1e-6) {
    throw DegenerateRotation("rotation angle within 1e-6 of pi has no stable log coordinates");
  }
  Pose6Dof p;
  p.translation = pose.translation;
  p.rotation = geometry::so3_log(geometry::quat_to_rotmat(pose.rotation));
  return p;
}

geometry::Pose pose_from_pose6(const Pose6Dof& p) {
  check_finite(p.translation, "pose_from_pose6");
  check_finite(p.rotation, "pose_from_pose6");
  if (p.rotation.norm() >= M_PI) {
    throw InvalidArgument("pose_from_pose6: rotation log norm must be below pi");
  }
  return geometry::Pose(geometry::rotmat_to_quat(geometry::so3_exp(p.rotation)), p.translation);
}

std::vector<Tensor> ModelParams::parameters() const {
  std::vector<Tensor> out;
  for (int i = 0; i < kConvLayers; ++i) {
    out.push_back(feature.weights[i]);
    out.push_back(feature.biases[i]);
  }
  out.push_back(attention.w_q);
  out.push_back(attention.w_k);
  out.push_back(attention.w_v);
  out.push_back(pose.w_input);
  out.push_back(pose.w_hidden);
  out.push_back(pose.b_gates);
  out.push_back(pose.w_head);
  out.push_back(pose.b_head);
  return out;
}

std::vector<std::string> ModelParams::parameter_names() {
  std::vector<std::string> names;
  for (int i = 1; i <= kConvLayers; ++i) {
    names.push_back("feature.conv" + std::to_string(i) + ".weight");
    names.push_back("feature.conv" + std::to_string(i) + ".bias");
  }
  names.insert(names.end(), {"attention.w_q", "attention.w_k", "attention.w_v", "pose.w_input",
                             "pose.w_hidden", "pose.b_gates", "pose.head.weight", "pose.head.bias"});
  return names;
}

ModelParams init_model(int channels, Rng& rng) {
  if (channels < 1 || channels > kMaxChannels) {
    throw InvalidArgument("channel width must be in [1, " + std::to_string(kMaxChannels) +
                          "], got " + std::to_string(channels));
  }
  ModelParams m;
  m.channels = channels;
  m.feature.channels = channels;
  const std::vector<int> plan = channel_plan(channels);
  for (int i = 0; i < kConvLayers; ++i) {
    const int cin = plan[i];
    const int cout = plan[i + 1];
    m.feature.weights.push_back(
        glorot({cout, cin, kKernel, kKernel}, cin * kKernel * kKernel, cout * kKernel * kKernel, rng));
    m.feature.biases.push_back(zeros_variable({cout}));
  }
  m.attention.dim = channels;
  m.attention.w_q = glorot({channels, channels}, channels, channels, rng);
  m.attention.w_k = glorot({channels, channels}, channels, channels, rng);
  m.attention.w_v = glorot({channels, channels}, channels, channels, rng);
  const int hidden = PoseNetParams::kHidden;
  m.pose.w_input = glorot({channels, 4 * hidden}, channels, 4 * hidden, rng);
  m.pose.w_hidden = glorot({hidden, 4 * hidden}, hidden, 4 * hidden, rng);
  m.pose.b_gates = zeros_variable({4 * hidden});
  m.pose.w_head = glorot({hidden, 6}, hidden, 6, rng);
  m.pose.b_head = zeros_variable({6});
  return m;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("learning_rate must be non-negative and finite");
  }
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw InvalidArgument("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw InvalidArgument("Adam epsilon must be positive");
  if (epochs < 1) throw InvalidArgument("epochs must be at least 1");
  if (window_size < 1) throw InvalidArgument("window_size must be at least 1");
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0) {
    throw InvalidArgument("keep_fraction must lie in (0, 1]");
  }
  if (channels < 1 || channels > kMaxChannels) {
    throw InvalidArgument("channels must lie in [1, " + std::to_string(kMaxChannels) + "]");
  }
  if (image_downscale < 1) throw InvalidArgument("image_downscale must be at least 1");
}

vision::Image downscale(const vision::Image& img, int factor) {
  img.validate();
  if (factor < 1) throw InvalidArgument("downscale factor must be at least 1");
  if (factor == 1) return img;
  vision::Image out(img.width / factor, img.height / factor);
  out.validate();  // rejects results that fall below the minimum image size
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      int sum = 0;
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) sum += img.at(x * factor + dx, y * factor + dy);
      }
      out.at(x, y) = static_cast<std::uint8_t>(
          std::lround(static_cast<double>(sum) / (factor * factor)));
    }
  }
  return out;
}

Tensor featurenet_forward(const FeatureNetParams& params, const vision::Image& a,
                          const vision::Image& b) {
  a.validate();
  b.validate();
  if (a.width != b.width || a.height != b.height) {
    throw InvalidArgument("image pair size mismatch: " + std::to_string(a.width) + "x" +
                          std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                          std::to_string(b.height));
  }
  if (static_cast<int>(params.weights.size()) != kConvLayers ||
      static_cast<int>(params.biases.size()) != kConvLayers) {
    throw InvalidArgument("feature network expects " + std::to_string(kConvLayers) + " conv layers");
  }
  const int ph = padded_to_multiple(a.height, kDownsample);
  const int pw = padded_to_multiple(a.width, kDownsample);
  std::vector<double> data(static_cast<std::size_t>(2) * ph * pw, 0.0);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      data[static_cast<std::size_t>(y) * pw + x] = a.at(x, y) / 255.0;
      data[static_cast<std::size_t>(ph) * pw + static_cast<std::size_t>(y) * pw + x] =
          b.at(x, y) / 255.0;
    }
  }
  Tensor x = Tensor::from_data({2, ph, pw}, data);
  for (int i = 0; i < kConvLayers; ++i) {
    x = relu(conv2d(x, params.weights[i], params.biases[i], kStride, kPad));
  }
  return x;
}

AttentionOutput attention_forward(const AttentionParams& params, const Tensor& features) {
  if (!features.defined() || features.shape().size() != 3) {
    throw InvalidArgument("attention expects a {C,M,N} feature tensor");
  }
  const int channels = features.shape()[0];
  const int tokens = features.shape()[1] * features.shape()[2];
  if (params.w_q.shape() != std::vector<int>{channels, channels}) {
    throw InvalidArgument("attention projection shape " + shape_to_string(params.w_q.shape()) +
                          " does not match token dimension " + std::to_string(channels));
  }
  const Tensor x = transpose(reshape(features, {channels, tokens}));  // {T, C}
  const Tensor q = matmul(x, params.w_q);
  const Tensor k = matmul(x, params.w_k);
  const Tensor v = matmul(x, params.w_v);
  const Tensor logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(channels)));
  const Tensor attention = softmax(logits);  // {T, T}, rows sum to 1
  AttentionOutput out;
  out.attended = matmul(attention, v);
  out.scores = col_mean(attention);
  return out;
}

PoseNetOutput posenet_forward(const PoseNetParams& params,
                              const std::vector<Tensor>& window_features) {
  if (window_features.empty()) throw InvalidArgument("pose network needs a non-empty window");
  const int input_dim = params.w_input.shape()[0];
  const int hidden = PoseNetParams::kHidden;
  Tensor h = Tensor::constant({1, hidden}, 0.0);
  Tensor c = Tensor::constant({1, hidden}, 0.0);
  PoseNetOutput out;
  for (const Tensor& feature : window_features) {
    if (!feature.defined() || feature.shape() != std::vector<int>{input_dim}) {
      throw InvalidArgument("pose network input shape " +
                            shape_to_string(feature.defined() ? feature.shape()
                                                              : std::vector<int>{}) +
                            " does not match " + shape_to_string({input_dim}));
    }
    const Tensor x = reshape(feature, {1, input_dim});
    const Tensor gates =
        add_rowvec(add(matmul(x, params.w_input), matmul(h, params.w_hidden)), params.b_gates);
    const Tensor gate_i = sigmoid(slice_cols(gates, 0, hidden));
    const Tensor gate_f = sigmoid(slice_cols(gates, hidden, hidden));
    const Tensor gate_o = sigmoid(slice_cols(gates, 2 * hidden, hidden));
    const Tensor gate_g = tanh(slice_cols(gates, 3 * hidden, hidden));
    c = add(mul(gate_f, c), mul(gate_i, gate_g));
    h = mul(gate_o, tanh(c));
    const Tensor row = reshape(add_rowvec(matmul(h, params.w_head), params.b_head), {6});
    out.raw.push_back(row);
    Pose6Dof pose;
    pose.translation =
        geometry::Vec3(row.value_at(0), row.value_at(1), row.value_at(2));
    pose.rotation = geometry::Vec3(row.value_at(3), row.value_at(4), row.value_at(5));
    out.poses.push_back(pose);
  }
  return out;
}

Tensor consistency_loss(const std::vector<Tensor>& pred,
                        const std::vector<geometry::Pose>& proxies) {
  if (pred.size() != proxies.size()) {
    throw InvalidArgument("prediction count " + std::to_string(pred.size()) +
                          " does not match proxy count " + std::to_string(proxies.size()));
  }
  if (pred.empty()) throw InvalidArgument("consistency loss needs at least one pose");
  Tensor total;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].shape() != std::vector<int>{6}) {
      throw InvalidArgument("prediction " + std::to_string(i) + " has shape " +
                            shape_to_string(pred[i].shape()) + ", expected [6]");
    }
    const Pose6Dof p = pose6_from_pose(proxies[i]);
    const Tensor target = Tensor::from_data(
        {6}, {p.translation.x(), p.translation.y(), p.translation.z(), p.rotation.x(),
              p.rotation.y(), p.rotation.z()});
    const Tensor gap = mse(pred[i], target);
    total = total.defined() ? add(total, gap) : gap;
  }
  return scale(total, 1.0 / static_cast<double>(pred.size()));
}

namespace {

/// One full differentiable pass over a window: per-pair features, attention
/// pooling, recurrent pose regression, consistency against the proxies.
Tensor window_loss(const ModelParams& model, const TrainingWindow& window, int downscale_factor) {
  std::vector<Tensor> pooled;
  for (std::size_t k = 0; k + 1 < window.frames.size(); ++k) {
    const vision::Image a = downscale(window.frames[k], downscale_factor);
    const vision::Image b = downscale(window.frames[k + 1], downscale_factor);
    const Tensor features = featurenet_forward(model.feature, a, b);
    const AttentionOutput att = attention_forward(model.attention, features);
    pooled.push_back(col_mean(att.attended));
  }
  const PoseNetOutput poses = posenet_forward(model.pose, pooled);
  return consistency_loss(poses.raw, window.proxies);
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::vector<TrainingWindow>& windows) {
  config.validate();
  if (windows.empty()) throw InvalidArgument("training needs at least one window");
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].frames.size() != windows[i].proxies.size() + 1) {
      throw InvalidArgument("window " + std::to_string(i) + " has " +
                            std::to_string(windows[i].frames.size()) + " frames for " +
                            std::to_string(windows[i].proxies.size()) + " proxies");
    }
    if (static_cast<int>(windows[i].proxies.size()) != config.window_size) {
      throw InvalidArgument("window " + std::to_string(i) + " spans " +
                            std::to_string(windows[i].proxies.size()) +
                            " intervals but window_size is " + std::to_string(config.window_size));
    }
  }

  Rng rng(config.rng_seed);
  TrainResult result;
  result.model = init_model(config.channels, rng);
  const std::vector<Tensor> params = result.model.parameters();

  std::vector<Eigen::ArrayXd> moment1, moment2;
  for (const Tensor& p : params) {
    moment1.push_back(Eigen::ArrayXd::Zero(p.numel()));
    moment2.push_back(Eigen::ArrayXd::Zero(p.numel()));
  }

  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (const TrainingWindow& window : windows) {
      const Tensor loss = window_loss(result.model, window, config.image_downscale);
      const double value = loss.scalar();
      if (!std::isfinite(value)) {
        const int last_finite = static_cast<int>(result.loss_history.size());
        throw TrainingDiverged("loss became non-finite during epoch " +
                                   std::to_string(epoch + 1) + "; last finite epoch: " +
                                   (last_finite == 0 ? "none" : std::to_string(last_finite)),
                               last_finite);
      }
      epoch_loss += value;
      loss.backward();
      ++step;
      const double bias1 = 1.0 - std::pow(config.beta1, step);
      const double bias2 = 1.0 - std::pow(config.beta2, step);
      for (std::size_t i = 0; i < params.size(); ++i) {
        const Eigen::ArrayXd& g = params[i].grad();
        moment1[i] = config.beta1 * moment1[i] + (1.0 - config.beta1) * g;
        moment2[i] = config.beta2 * moment2[i] + (1.0 - config.beta2) * g.square();
        const Eigen::ArrayXd m_hat = moment1[i] / bias1;
        const Eigen::ArrayXd v_hat = moment2[i] / bias2;
        const_cast<Tensor&>(params[i]).mutable_values() -=
            config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
      }
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(windows.size()));
  }
  return result;
}

vision::BinaryMask extract_mask(const Tensor& scores, double keep_fraction, int block_size,
                                int rows, int cols) {
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0) {
    throw InvalidArgument("keep_fraction must lie in (0, 1]");
  }
  if (!scores.defined() || rows < 1 || cols < 1 || scores.numel() != rows * cols) {
    throw InvalidArgument("score count " +
                          std::to_string(scores.defined() ? scores.numel() : 0) +
                          " does not match grid " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }
  const int tokens = rows * cols;
  const int keep = static_cast<int>(std::ceil(keep_fraction * tokens));
  std::vector<int> order(static_cast<std::size_t>(tokens));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&scores](int a, int b) {
    return scores.value_at(a) > scores.value_at(b);  // ties keep the lower index first
  });

  vision::BinaryMask mask;
  mask.block_size = block_size;
  mask.rows = rows;
  mask.cols = cols;
  mask.grid.assign(static_cast<std::size_t>(tokens), 0);
  for (int i = 0; i < keep; ++i) {
    mask.grid[static_cast<std::size_t>(order[i])] = 1;
  }
  mask.validate();
  return mask;
}

vision::BinaryMask infer_mask(const ModelParams& model, const vision::Image& a,
                              const vision::Image& b, double keep_fraction, int block_size) {
  const Tensor features = featurenet_forward(model.feature, a, b);
  const AttentionOutput att = attention_forward(model.attention, features);
  return extract_mask(att.scores, keep_fraction, block_size, features.shape()[1],
                      features.shape()[2]);
}

namespace {

void append_le_double(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double read_le_double(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& model,
                     const TrainConfig& config) {
  const std::vector<Tensor> params = model.parameters();
  const std::vector<std::string> names = ModelParams::parameter_names();

  nlohmann::json header;
  header["magic"] = kCheckpointMagic;
  header["version"] = 1;
  header["channels"] = model.channels;
  header["config"] = {{"learning_rate", config.learning_rate},
                      {"beta1", config.beta1},
                      {"beta2", config.beta2},
                      {"epsilon", config.epsilon},
                      {"epochs", config.epochs},
                      {"window_size", config.window_size},
                      {"keep_fraction", config.keep_fraction},
                      {"channels", config.channels},
                      {"image_downscale", config.image_downscale},
                      {"rng_seed", config.rng_seed}};
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.push_back({{"name", names[i]}, {"shape", params[i].shape()}});
  }
  header["tensors"] = tensors;

  std::string payload;
  for (const Tensor& p : params) {
    for (int i = 0; i < p.numel(); ++i) append_le_double(payload, p.value_at(i));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << header.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string header_line;
  if (!std::getline(in, header_line)) throw ParseError("checkpoint missing header line: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  try {
    if (header.at("magic").get<std::string>() != kCheckpointMagic) {
      throw ParseError("checkpoint magic mismatch");
    }
    if (header.at("version").get<int>() != 1) {
      throw ParseError("unsupported checkpoint version");
    }
    Checkpoint ckpt;
    const nlohmann::json& cfg = header.at("config");
    ckpt.config.learning_rate = cfg.at("learning_rate").get<double>();
    ckpt.config.beta1 = cfg.at("beta1").get<double>();
    ckpt.config.beta2 = cfg.at("beta2").get<double>();
    ckpt.config.epsilon = cfg.at("epsilon").get<double>();
    ckpt.config.epochs = cfg.at("epochs").get<int>();
    ckpt.config.window_size = cfg.at("window_size").get<int>();
    ckpt.config.keep_fraction = cfg.at("keep_fraction").get<double>();
    ckpt.config.channels = cfg.at("channels").get<int>();
    ckpt.config.image_downscale = cfg.at("image_downscale").get<int>();
    ckpt.config.rng_seed = cfg.at("rng_seed").get<std::uint64_t>();

    const int channels = header.at("channels").get<int>();
    Rng rng(0);
    ckpt.model = init_model(channels, rng);  // correct shapes; values overwritten below

    const std::vector<Tensor> params = ckpt.model.parameters();
    const std::vector<std::string> names = ModelParams::parameter_names();
    const nlohmann::json& tensors = header.at("tensors");
    if (tensors.size() != params.size()) {
      throw DataIntegrityError("checkpoint lists " + std::to_string(tensors.size()) +
                               " tensors, expected " + std::to_string(params.size()));
    }
    std::size_t total = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (tensors[i].at("name").get<std::string>() != names[i] ||
          tensors[i].at("shape").get<std::vector<int>>() != params[i].shape()) {
        throw DataIntegrityError("checkpoint tensor " + std::to_string(i) +
                                 " does not match the declared architecture");
      }
      total += static_cast<std::size_t>(params[i].numel());
    }

    std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (payload.size() != total * 8) {
      throw DataIntegrityError("checkpoint payload holds " + std::to_string(payload.size()) +
                               " bytes, expected " + std::to_string(total * 8));
    }
    const char* p = payload.data();
    for (const Tensor& t : params) {
      Eigen::ArrayXd& values = const_cast<Tensor&>(t).mutable_values();
      for (int i = 0; i < t.numel(); ++i, p += 8) values(i) = read_le_double(p);
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint header is malformed: " + std::string(e.what()));
  }
}

void save_loss_history(const std::string& path, const std::vector<double>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open loss history for writing: " + path);
  out << "epoch,loss\n";
  out.precision(17);
  for (std::size_t i = 0; i < history.size(); ++i) {
    out << (i + 1) << ',' << history[i] << '\n';
  }
  if (!out) throw IoError("loss history write failed: " + path);
}

std::vector<double> load_loss_history(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open loss history: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,loss") {
    throw ParseError("loss history must start with an `epoch,loss` header");
  }
  std::vector<double> history;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string epoch_field, loss_field;
    if (!std::getline(row, epoch_field, ',') || !std::getline(row, loss_field)) {
      throw ParseError("malformed loss history row: " + line);
    }
    std::size_t pos = 0;
    long epoch = 0;
    double loss = 0.0;
    try {
      epoch = std::stol(epoch_field, &pos);
      if (pos != epoch_field.size()) throw std::invalid_argument(epoch_field);
      loss = std::stod(loss_field, &pos);
      if (pos != loss_field.size()) throw std::invalid_argument(loss_field);
    } catch (const std::exception&) {
      throw ParseError("malformed loss history row: " + line);
    }
    if (epoch != static_cast<long>(history.size()) + 1) {
      throw ParseError("loss history epochs must be consecutive from 1, got " + epoch_field);
    }
    history.push_back(loss);
  }
  return history;
}

}  // namespace maskvo::learn
