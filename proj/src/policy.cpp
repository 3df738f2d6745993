#include "hbmp/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hbmp {

namespace {

constexpr char kMagic[8] = {'H', 'B', 'M', 'P', 'N', 'E', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr double kOutputInitScale = 0.01;

int conv_out(int n, int k, int stride, int pad) { return (n + 2 * pad - k) / stride + 1; }

void relu(std::vector<double>& x) {
  for (double& v : x) v = std::max(0.0, v);
}

}  // namespace

Network::Network(NetworkShape shape) : shape_(std::move(shape)) {
  int c = 1, h = shape_.grid_rows, w = shape_.grid_cols;
  for (std::size_t i = 0; i < shape_.convs.size(); ++i) {
    const ConvSpec& s = shape_.convs[i];
    Conv l{};
    l.in_c = c;
    l.in_h = h;
    l.in_w = w;
    l.out_c = s.out_channels;
    l.k = s.kernel;
    l.stride = s.stride;
    l.pad = s.pad;
    l.out_h = conv_out(h, s.kernel, s.stride, s.pad);
    l.out_w = conv_out(w, s.kernel, s.stride, s.pad);
    if (l.out_h <= 0 || l.out_w <= 0) throw std::invalid_argument("conv stack too deep for grid");
    const std::string n = "conv" + std::to_string(i + 1);
    l.w = add_tensor(n + ".weight", {l.out_c, l.in_c, l.k, l.k});
    l.b = add_tensor(n + ".bias", {l.out_c});
    convs_.push_back(l);
    c = l.out_c;
    h = l.out_h;
    w = l.out_w;
  }
  auto dense = [&](const std::string& name, int in, int out) {
    Dense d{in, out, 0, 0};
    d.w = add_tensor(name + ".weight", {out, in});
    d.b = add_tensor(name + ".bias", {out});
    return d;
  };
  grid_fc_ = dense("grid_fc", c * h * w, shape_.grid_fc);
  int in = shape_.profile_size;
  for (std::size_t i = 0; i < shape_.profile_fc.size(); ++i) {
    profile_fc_.push_back(dense("profile_fc" + std::to_string(i + 1), in, shape_.profile_fc[i]));
    in = shape_.profile_fc[i];
  }
  in += shape_.grid_fc;
  for (std::size_t i = 0; i < shape_.head_fc.size(); ++i) {
    head_fc_.push_back(dense("head_fc" + std::to_string(i + 1), in, shape_.head_fc[i]));
    in = shape_.head_fc[i];
  }
  out_ = dense("out", in, shape_.outputs);
}

std::size_t Network::add_tensor(const std::string& name, std::vector<int> shape) {
  Tensor t;
  t.name = name;
  t.size = 1;
  for (int d : shape) t.size *= static_cast<std::size_t>(d);
  t.shape = std::move(shape);
  t.offset = theta_.size();
  theta_.resize(theta_.size() + t.size, 0.0);
  tensors_.push_back(t);
  return t.offset;
}

void Network::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto fill = [&](std::size_t off, std::size_t n, int fan_in, double scale) {
    const double bound = scale * std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < n; ++i) theta_[off + i] = u(rng);
  };
  std::fill(theta_.begin(), theta_.end(), 0.0);
  for (const Conv& l : convs_) {
    fill(l.w, static_cast<std::size_t>(l.out_c) * l.in_c * l.k * l.k, l.in_c * l.k * l.k, 1.0);
  }
  fill(grid_fc_.w, static_cast<std::size_t>(grid_fc_.in) * grid_fc_.out, grid_fc_.in, 1.0);
  for (const Dense& d : profile_fc_) fill(d.w, static_cast<std::size_t>(d.in) * d.out, d.in, 1.0);
  for (const Dense& d : head_fc_) fill(d.w, static_cast<std::size_t>(d.in) * d.out, d.in, 1.0);
  fill(out_.w, static_cast<std::size_t>(out_.in) * out_.out, out_.in, kOutputInitScale);
  touch();
}

namespace {

void dense_forward(const double* w, const double* b, int in, int out, const std::vector<double>& x,
                   std::vector<double>& y) {
  y.assign(out, 0.0);
  for (int o = 0; o < out; ++o) {
    double acc = b[o];
    const double* row = w + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

// dy is the gradient w.r.t. the pre-activation output; dx is overwritten
// when non-null.
void dense_backward(const double* w, int in, int out, const std::vector<double>& x,
                    const std::vector<double>& dy, double* gw, double* gb,
                    std::vector<double>* dx) {
  if (dx) dx->assign(in, 0.0);
  for (int o = 0; o < out; ++o) {
    const double g = dy[o];
    if (g == 0.0) continue;
    gb[o] += g;
    const double* row = w + static_cast<std::size_t>(o) * in;
    double* grow = gw + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) grow[i] += g * x[i];
    if (dx) {
      for (int i = 0; i < in; ++i) (*dx)[i] += g * row[i];
    }
  }
}

void mask_relu(const std::vector<double>& act, std::vector<double>& grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (act[i] <= 0.0) grad[i] = 0.0;
  }
}

}  // namespace

ForwardCache Network::forward(const std::vector<std::uint8_t>& grid,
                              const std::vector<double>& profile) const {
  if (grid.size() != static_cast<std::size_t>(shape_.grid_rows) * shape_.grid_cols) {
    throw std::invalid_argument("grid size does not match the network");
  }
  if (profile.size() != static_cast<std::size_t>(shape_.profile_size)) {
    throw std::invalid_argument("profile size does not match the network");
  }
  ForwardCache c;
  c.owner = this;
  c.version = version_;
  c.grid.assign(grid.begin(), grid.end());
  c.profile = profile;
  const double* th = theta_.data();

  const std::vector<double>* x = &c.grid;
  c.conv.resize(convs_.size());
  for (std::size_t li = 0; li < convs_.size(); ++li) {
    const Conv& l = convs_[li];
    std::vector<double>& y = c.conv[li];
    y.assign(static_cast<std::size_t>(l.out_c) * l.out_h * l.out_w, 0.0);
    for (int o = 0; o < l.out_c; ++o) {
      for (int oy = 0; oy < l.out_h; ++oy) {
        for (int ox = 0; ox < l.out_w; ++ox) {
          double acc = th[l.b + o];
          for (int ci = 0; ci < l.in_c; ++ci) {
            const double* wk = th + l.w + ((static_cast<std::size_t>(o) * l.in_c + ci) * l.k) * l.k;
            const double* in = x->data() + static_cast<std::size_t>(ci) * l.in_h * l.in_w;
            for (int ky = 0; ky < l.k; ++ky) {
              const int iy = oy * l.stride - l.pad + ky;
              if (iy < 0 || iy >= l.in_h) continue;
              for (int kx = 0; kx < l.k; ++kx) {
                const int ix = ox * l.stride - l.pad + kx;
                if (ix < 0 || ix >= l.in_w) continue;
                acc += wk[ky * l.k + kx] * in[iy * l.in_w + ix];
              }
            }
          }
          y[(static_cast<std::size_t>(o) * l.out_h + oy) * l.out_w + ox] = acc;
        }
      }
    }
    relu(y);
    x = &y;
  }
  dense_forward(th + grid_fc_.w, th + grid_fc_.b, grid_fc_.in, grid_fc_.out, *x, c.grid_fc);
  relu(c.grid_fc);

  c.prof.resize(profile_fc_.size());
  x = &c.profile;
  for (std::size_t i = 0; i < profile_fc_.size(); ++i) {
    const Dense& d = profile_fc_[i];
    dense_forward(th + d.w, th + d.b, d.in, d.out, *x, c.prof[i]);
    relu(c.prof[i]);
    x = &c.prof[i];
  }
  c.concat = c.grid_fc;
  c.concat.insert(c.concat.end(), x->begin(), x->end());

  c.head.resize(head_fc_.size());
  x = &c.concat;
  for (std::size_t i = 0; i < head_fc_.size(); ++i) {
    const Dense& d = head_fc_[i];
    dense_forward(th + d.w, th + d.b, d.in, d.out, *x, c.head[i]);
    relu(c.head[i]);
    x = &c.head[i];
  }
  dense_forward(th + out_.w, th + out_.b, out_.in, out_.out, *x, c.out);
  return c;
}

void Network::backward(const ForwardCache& c, const std::vector<double>& out_grad,
                       std::vector<double>& grads) const {
  if (c.owner != this || c.version != version_) {
    throw std::logic_error("backward: cache does not match the current parameters");
  }
  if (out_grad.size() != static_cast<std::size_t>(shape_.outputs)) {
    throw std::invalid_argument("backward: output gradient size");
  }
  if (grads.size() != theta_.size()) grads.assign(theta_.size(), 0.0);
  const double* th = theta_.data();
  double* g = grads.data();

  std::vector<double> d = out_grad, dx;
  const std::vector<double>& last = head_fc_.empty() ? c.concat : c.head.back();
  dense_backward(th + out_.w, out_.in, out_.out, last, d, g + out_.w, g + out_.b, &dx);
  for (std::size_t i = head_fc_.size(); i-- > 0;) {
    d = dx;
    mask_relu(c.head[i], d);
    const std::vector<double>& in = i == 0 ? c.concat : c.head[i - 1];
    const Dense& l = head_fc_[i];
    dense_backward(th + l.w, l.in, l.out, in, d, g + l.w, g + l.b, &dx);
  }
  // Split the concat gradient between the branches.
  std::vector<double> d_grid(dx.begin(), dx.begin() + shape_.grid_fc);
  std::vector<double> d_prof(dx.begin() + shape_.grid_fc, dx.end());

  for (std::size_t i = profile_fc_.size(); i-- > 0;) {
    mask_relu(c.prof[i], d_prof);
    const std::vector<double>& in = i == 0 ? c.profile : c.prof[i - 1];
    const Dense& l = profile_fc_[i];
    std::vector<double> next;
    dense_backward(th + l.w, l.in, l.out, in, d_prof, g + l.w, g + l.b, i == 0 ? nullptr : &next);
    d_prof = std::move(next);
  }

  mask_relu(c.grid_fc, d_grid);
  const std::vector<double>& conv_top = convs_.empty() ? c.grid : c.conv.back();
  dense_backward(th + grid_fc_.w, grid_fc_.in, grid_fc_.out, conv_top, d_grid, g + grid_fc_.w,
                 g + grid_fc_.b, &dx);
  for (std::size_t li = convs_.size(); li-- > 0;) {
    const Conv& l = convs_[li];
    std::vector<double> dy = dx;
    mask_relu(c.conv[li], dy);
    const std::vector<double>& x = li == 0 ? c.grid : c.conv[li - 1];
    const bool need_dx = li > 0;
    if (need_dx) dx.assign(x.size(), 0.0);
    for (int o = 0; o < l.out_c; ++o) {
      for (int oy = 0; oy < l.out_h; ++oy) {
        for (int ox = 0; ox < l.out_w; ++ox) {
          const double go = dy[(static_cast<std::size_t>(o) * l.out_h + oy) * l.out_w + ox];
          if (go == 0.0) continue;
          g[l.b + o] += go;
          for (int ci = 0; ci < l.in_c; ++ci) {
            const std::size_t wo = l.w + ((static_cast<std::size_t>(o) * l.in_c + ci) * l.k) * l.k;
            const std::size_t xo = static_cast<std::size_t>(ci) * l.in_h * l.in_w;
            for (int ky = 0; ky < l.k; ++ky) {
              const int iy = oy * l.stride - l.pad + ky;
              if (iy < 0 || iy >= l.in_h) continue;
              for (int kx = 0; kx < l.k; ++kx) {
                const int ix = ox * l.stride - l.pad + kx;
                if (ix < 0 || ix >= l.in_w) continue;
                const std::size_t xi = xo + iy * l.in_w + ix;
                g[wo + ky * l.k + kx] += go * x[xi];
                if (need_dx) dx[xi] += go * th[wo + ky * l.k + kx];
              }
            }
          }
        }
      }
    }
  }
}

BehaviorDistribution softmax(const std::vector<double>& logits) {
  BehaviorDistribution d;
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < d.probs.size(); ++i) {
    d.probs[i] = std::exp(logits[i] - m);
    z += d.probs[i];
  }
  for (double& p : d.probs) p /= z;
  return d;
}

ActorCritic::ActorCritic() : ActorCritic(NetworkShape{}) {}

ActorCritic::ActorCritic(const NetworkShape& shape) : actor(shape), critic([&] {
  NetworkShape s = shape;
  s.outputs = 1;
  return s;
}()) {}

void ActorCritic::init(std::uint64_t seed) {
  actor.init(seed);
  critic.init(seed ^ 0xc2b2ae3d27d4eb4fULL);
}

std::vector<double> profile_input(const RoadProfile& p) {
  const auto v = p.values();
  return {v.begin(), v.end()};
}

std::pair<BehaviorDistribution, ForwardCache> actor_forward(const Network& actor,
                                                            const std::vector<std::uint8_t>& grid,
                                                            const std::vector<double>& profile) {
  ForwardCache c = actor.forward(grid, profile);
  BehaviorDistribution d = softmax(c.out);
  return {d, std::move(c)};
}

std::pair<double, ForwardCache> critic_forward(const Network& critic,
                                               const std::vector<std::uint8_t>& grid,
                                               const std::vector<double>& profile) {
  ForwardCache c = critic.forward(grid, profile);
  const double v = c.out.front();
  return {v, std::move(c)};
}

std::vector<double> log_prob_grad(const BehaviorDistribution& d, std::size_t action) {
  std::vector<double> g(d.probs.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (i == action ? 1.0 : 0.0) - d.probs[i];
  return g;
}

std::pair<Behavior, double> sample_action(const BehaviorDistribution& d, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  std::size_t pick = d.probs.size() - 1;
  for (std::size_t i = 0; i < d.probs.size(); ++i) {
    acc += d.probs[i];
    if (u < acc) {
      pick = i;
      break;
    }
  }
  // Never return a zero-probability tail entry because of rounding.
  while (d.probs[pick] <= 0.0 && pick > 0) --pick;
  return {kAllBehaviors[pick], std::log(d.probs[pick])};
}

Behavior greedy_action(const BehaviorDistribution& d) {
  return kAllBehaviors[std::max_element(d.probs.begin(), d.probs.end()) - d.probs.begin()];
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

void Adam::step(Network& net, const std::vector<double>& grads) {
  std::vector<double>& th = net.params();
  if (m_.size() != th.size()) {
    m_.assign(th.size(), 0.0);
    v_.assign(th.size(), 0.0);
    t_ = 0;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < th.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grads[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grads[i] * grads[i];
    th[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
  net.touch();
}

double clip_grad_norm(std::vector<double>& grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double n = std::sqrt(sq);
  if (max_norm > 0.0 && n > max_norm) {
    const double s = max_norm / n;
    for (double& g : grads) g *= s;
  }
  return n;
}

namespace {

template <typename T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("checkpoint truncated");
  return v;
}

void write_net(std::ofstream& f, const std::string& prefix, const Network& n) {
  for (const auto& t : n.tensors()) {
    const std::string name = prefix + t.name;
    put<std::uint32_t>(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(f, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put<std::uint32_t>(f, static_cast<std::uint32_t>(d));
    f.write(reinterpret_cast<const char*>(n.params().data() + t.offset),
            static_cast<std::streamsize>(t.size * sizeof(double)));
  }
}

void read_net(std::ifstream& f, const std::string& prefix, Network& n) {
  for (const auto& t : n.tensors()) {
    const auto len = get<std::uint32_t>(f);
    std::string name(len, '\0');
    f.read(name.data(), len);
    if (name != prefix + t.name) {
      throw std::runtime_error("checkpoint tensor '" + name + "', expected '" + prefix + t.name + "'");
    }
    const auto nd = get<std::uint32_t>(f);
    std::vector<int> shape(nd);
    for (auto& d : shape) d = static_cast<int>(get<std::uint32_t>(f));
    if (shape != t.shape) throw std::runtime_error("checkpoint shape mismatch for " + name);
    f.read(reinterpret_cast<char*>(n.params().data() + t.offset),
           static_cast<std::streamsize>(t.size * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint truncated");
  }
  n.touch();
}

}  // namespace

void save_checkpoint(const std::string& path, const ActorCritic& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path);
  f.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(f, kCheckpointVersion);
  put<std::uint32_t>(f, static_cast<std::uint32_t>(m.actor.tensors().size() +
                                                   m.critic.tensors().size()));
  write_net(f, "actor/", m.actor);
  write_net(f, "critic/", m.critic);
  if (!f) throw std::runtime_error("failed writing checkpoint " + path);
}

void load_checkpoint(const std::string& path, ActorCritic& m) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[sizeof(kMagic)];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path + " is not a network checkpoint");
  }
  if (get<std::uint32_t>(f) != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version in " + path);
  }
  const auto count = get<std::uint32_t>(f);
  if (count != m.actor.tensors().size() + m.critic.tensors().size()) {
    throw std::runtime_error("checkpoint tensor count mismatch in " + path);
  }
  read_net(f, "actor/", m.actor);
  read_net(f, "critic/", m.critic);
}

}  // namespace hbmp
