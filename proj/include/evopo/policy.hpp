#ifndef EVOPO_POLICY_HPP
#define EVOPO_POLICY_HPP

// A small autoregressive categorical policy over a mutation-token vocabulary,
// with the masked, asymmetrically clipped surrogate loss and its analytic
// gradient.
//
// Architecture:
//   h        = tanh(context . W_ctx)                       (hidden, size H)
//   logits_t = [h ; onehot(token_{t-1})] . W_emit + b_emit  (size V)
// The first step has no previous token, so its one-hot block is all zeros. A
// masked-out token is invisible to the model: the step after it is conditioned
// as if there were no previous token.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evopo/error.hpp"
#include "evopo/numeric.hpp"

namespace evopo::policy {

struct PolicyDims {
  int context_dim = 8;
  int hidden = 32;
  int vocab = 24;
  int max_length = 8;
};

using Context = std::vector<double>;

struct TokenSequence {
  std::vector<int> tokens;
  std::vector<std::uint8_t> mask;
  std::vector<double> old_logprobs;

  std::size_t size() const { return tokens.size(); }
};

/// Parameters (and, with the same shape, gradients and optimizer moments).
struct PolicyParams {
  PolicyDims dims;
  std::vector<double> context_proj;   // context_dim x hidden, row-major
  std::vector<double> emission;       // (hidden + vocab) x vocab, row-major
  std::vector<double> emission_bias;  // vocab

  static PolicyParams zeros(const PolicyDims& d) {
    if (d.context_dim < 1 || d.hidden < 1 || d.vocab < 2 || d.max_length < 1)
      throw InvalidInput("policy dims must be positive (vocab >= 2)");
    PolicyParams p;
    p.dims = d;
    p.context_proj.assign(static_cast<std::size_t>(d.context_dim * d.hidden), 0.0);
    p.emission.assign(static_cast<std::size_t>((d.hidden + d.vocab) * d.vocab), 0.0);
    p.emission_bias.assign(static_cast<std::size_t>(d.vocab), 0.0);
    return p;
  }

  /// Gaussian initialisation with the given standard deviation; the bias starts at zero.
  static PolicyParams random(const PolicyDims& d, double scale, std::uint64_t seed) {
    PolicyParams p = zeros(d);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    for (double& w : p.context_proj) w = n(rng);
    for (double& w : p.emission) w = n(rng);
    return p;
  }

  PolicyParams zeros_like() const { return zeros(dims); }

  struct NamedTensor {
    std::string_view name;
    std::array<std::size_t, 2> shape;
  };

  std::array<NamedTensor, 3> layout() const {
    const auto c = static_cast<std::size_t>(dims.context_dim);
    const auto h = static_cast<std::size_t>(dims.hidden);
    const auto v = static_cast<std::size_t>(dims.vocab);
    return {{{"context_proj", {c, h}}, {"emission", {h + v, v}}, {"emission_bias", {1, v}}}};
  }

  std::array<std::span<double>, 3> tensors() { return {context_proj, emission, emission_bias}; }
  std::array<std::span<const double>, 3> tensors() const { return {context_proj, emission, emission_bias}; }

  std::size_t size() const { return context_proj.size() + emission.size() + emission_bias.size(); }

  std::uint64_t fingerprint() const {
    Fnv1a h;
    for (auto t : tensors()) h.update(t);
    return h.digest();
  }

  bool all_finite() const {
    for (auto t : tensors())
      for (double x : t)
        if (!std::isfinite(x)) return false;
    return true;
  }

  double& emit(int row, int col) { return emission[static_cast<std::size_t>(row * dims.vocab + col)]; }
  double emit(int row, int col) const { return emission[static_cast<std::size_t>(row * dims.vocab + col)]; }
};

using Gradient = PolicyParams;

struct ClipConfig {
  double eps_lo = 0.2;
  double eps_hi = 0.28;
};

namespace detail {

inline std::vector<double> hidden_state(const PolicyParams& p, const Context& ctx) {
  if (ctx.size() != static_cast<std::size_t>(p.dims.context_dim))
    throw InvalidInput("context has dimension " + std::to_string(ctx.size()) + ", policy expects " +
                       std::to_string(p.dims.context_dim));
  const int H = p.dims.hidden;
  std::vector<double> h(static_cast<std::size_t>(H), 0.0);
  for (int i = 0; i < p.dims.context_dim; ++i) {
    const double c = ctx[static_cast<std::size_t>(i)];
    if (c == 0.0) continue;
    const double* row = &p.context_proj[static_cast<std::size_t>(i * H)];
    for (int j = 0; j < H; ++j) h[static_cast<std::size_t>(j)] += c * row[j];
  }
  for (double& x : h) x = std::tanh(x);
  return h;
}

/// Log-probabilities of the next token given the hidden state and previous token (-1 for none).
inline void step_log_probs(const PolicyParams& p, std::span<const double> h, int prev, std::vector<double>& logp) {
  const int V = p.dims.vocab;
  const int H = p.dims.hidden;
  logp.assign(p.emission_bias.begin(), p.emission_bias.end());
  for (int j = 0; j < H; ++j) {
    const double hj = h[static_cast<std::size_t>(j)];
    if (hj == 0.0) continue;
    for (int v = 0; v < V; ++v) logp[static_cast<std::size_t>(v)] += hj * p.emit(j, v);
  }
  if (prev >= 0)
    for (int v = 0; v < V; ++v) logp[static_cast<std::size_t>(v)] += p.emit(H + prev, v);
  const double top = *std::max_element(logp.begin(), logp.end());
  double z = 0.0;
  for (double x : logp) z += std::exp(x - top);
  const double lse = top + std::log(z);
  for (double& x : logp) x -= lse;
}

inline void check_tokens(const PolicyParams& p, const TokenSequence& seq) {
  if (seq.mask.size() != seq.tokens.size()) throw InvalidInput("token sequence: mask length differs from tokens");
  for (int t : seq.tokens)
    if (t < 0 || t >= p.dims.vocab)
      throw InvalidToken("token " + std::to_string(t) + " outside vocabulary of size " + std::to_string(p.dims.vocab));
}

/// Uniform double in [0, 1) from the top 53 bits, independent of the standard library's distributions.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Autoregressively samples `length` tokens; records the sampling log-probabilities.
inline TokenSequence sample_sequence(const PolicyParams& p, const Context& ctx, std::mt19937_64& rng, int length) {
  if (length < 0 || length > p.dims.max_length)
    throw InvalidInput("sequence length " + std::to_string(length) + " exceeds max_length " +
                       std::to_string(p.dims.max_length));
  const auto h = detail::hidden_state(p, ctx);
  TokenSequence seq;
  seq.tokens.reserve(static_cast<std::size_t>(length));
  std::vector<double> logp;
  int prev = -1;
  for (int t = 0; t < length; ++t) {
    detail::step_log_probs(p, h, prev, logp);
    const double u = detail::unit_uniform(rng);
    double cdf = 0.0;
    int pick = p.dims.vocab - 1;
    for (int v = 0; v < p.dims.vocab; ++v) {
      cdf += std::exp(logp[static_cast<std::size_t>(v)]);
      if (u < cdf) {
        pick = v;
        break;
      }
    }
    // never land on a zero-probability token through rounding at the tail
    while (pick > 0 && std::exp(logp[static_cast<std::size_t>(pick)]) == 0.0) --pick;
    seq.tokens.push_back(pick);
    seq.mask.push_back(1);
    seq.old_logprobs.push_back(logp[static_cast<std::size_t>(pick)]);
    prev = pick;
  }
  return seq;
}

/// Log pi(token_t | prefix, ctx) under the current parameters, for every position.
inline std::vector<double> sequence_logprobs(const PolicyParams& p, const Context& ctx, const TokenSequence& seq) {
  detail::check_tokens(p, seq);
  const auto h = detail::hidden_state(p, ctx);
  std::vector<double> out(seq.size());
  std::vector<double> logp;
  int prev = -1;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    detail::step_log_probs(p, h, prev, logp);
    out[t] = logp[static_cast<std::size_t>(seq.tokens[t])];
    prev = seq.mask[t] ? seq.tokens[t] : -1;
  }
  return out;
}

/// Per-token copy of a response-level advantage; masked-out positions carry 0.
inline std::vector<double> broadcast_advantage(double a_mix, const TokenSequence& seq) {
  std::vector<double> out(seq.mask.size(), 0.0);
  for (std::size_t t = 0; t < out.size(); ++t)
    if (seq.mask[t]) out[t] = a_mix;
  return out;
}

/// min(r A, clip(r, 1 - eps_lo, 1 + eps_hi) A) for one token.
inline double clipped_objective(double ratio, double adv, const ClipConfig& clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip.eps_lo, 1.0 + clip.eps_hi);
  return std::min(ratio * adv, clipped * adv);
}

/// Whether the unclipped branch of the min is the one in effect (so the token carries gradient).
inline bool clip_active_branch_is_ratio(double ratio, double adv, const ClipConfig& clip) {
  if (adv > 0) return ratio <= 1.0 + clip.eps_hi;
  if (adv < 0) return ratio >= 1.0 - clip.eps_lo;
  return true;
}

/// Token-level masked clipped surrogate: minus the mean objective over every masked-in token.
inline double surrogate_loss(std::span<const double> new_logp, std::span<const double> old_logp,
                             std::span<const double> adv_tok, std::span<const std::uint8_t> mask,
                             const ClipConfig& clip) {
  if (new_logp.size() != old_logp.size() || new_logp.size() != adv_tok.size() || new_logp.size() != mask.size())
    throw InvalidInput("surrogate_loss: length mismatch");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (!mask[t]) continue;
    total += clipped_objective(std::exp(new_logp[t] - old_logp[t]), adv_tok[t], clip);
    ++count;
  }
  if (count == 0) throw EmptyBatch("surrogate_loss: no masked-in tokens");
  return -total / static_cast<double>(count);
}

struct TrainingExample {
  Context context;
  TokenSequence seq;
  std::vector<double> advantages;  // per token
};

struct LossAndGradient {
  double loss = 0.0;
  Gradient grad;
  std::size_t tokens = 0;
  std::size_t clipped_tokens = 0;
};

/// Surrogate loss over a whole rollout group and its analytic gradient.
///
/// For a masked-in token, d loss / d log pi = -r A / M when the ratio branch of
/// the min is active and 0 otherwise (M = masked-in tokens in the group). That
/// signal is backpropagated through the log-softmax, the emission layer and the
/// tanh context projection.
inline LossAndGradient loss_and_gradient(const PolicyParams& p, std::span<const TrainingExample> batch,
                                         const ClipConfig& clip) {
  const int H = p.dims.hidden;
  const int V = p.dims.vocab;
  std::size_t count = 0;
  for (const auto& ex : batch) {
    detail::check_tokens(p, ex.seq);
    if (ex.seq.old_logprobs.size() != ex.seq.size() || ex.advantages.size() != ex.seq.size())
      throw InvalidInput("loss_and_gradient: per-token vectors must match sequence length");
    count += static_cast<std::size_t>(std::count_if(ex.seq.mask.begin(), ex.seq.mask.end(), [](auto m) { return m != 0; }));
  }
  if (count == 0) throw EmptyBatch("loss_and_gradient: no masked-in tokens");

  LossAndGradient out;
  out.grad = p.zeros_like();
  out.tokens = count;
  const double inv_m = 1.0 / static_cast<double>(count);

  std::vector<double> logp;
  std::vector<double> dh(static_cast<std::size_t>(H));
  std::size_t token_index = 0;
  for (const auto& ex : batch) {
    const auto h = detail::hidden_state(p, ex.context);
    std::fill(dh.begin(), dh.end(), 0.0);
    int prev = -1;
    for (std::size_t t = 0; t < ex.seq.size(); ++t, ++token_index) {
      const int tok = ex.seq.tokens[t];
      if (ex.seq.mask[t]) {
        detail::step_log_probs(p, h, prev, logp);
        const double adv = ex.advantages[t];
        const double ratio = std::exp(logp[static_cast<std::size_t>(tok)] - ex.seq.old_logprobs[t]);
        const double obj = clipped_objective(ratio, adv, clip);
        if (!std::isfinite(obj)) throw NumericFailure("non-finite surrogate term", token_index);
        out.loss -= obj * inv_m;

        if (!clip_active_branch_is_ratio(ratio, adv, clip)) {
          ++out.clipped_tokens;
        } else if (adv != 0.0) {
          const double coef = -ratio * adv * inv_m;
          for (int v = 0; v < V; ++v) {
            const double dz = coef * ((v == tok ? 1.0 : 0.0) - std::exp(logp[static_cast<std::size_t>(v)]));
            if (!std::isfinite(dz)) throw NumericFailure("non-finite logit gradient", token_index);
            out.grad.emission_bias[static_cast<std::size_t>(v)] += dz;
            if (prev >= 0) out.grad.emit(H + prev, v) += dz;
            for (int j = 0; j < H; ++j) {
              out.grad.emit(j, v) += h[static_cast<std::size_t>(j)] * dz;
              dh[static_cast<std::size_t>(j)] += p.emit(j, v) * dz;
            }
          }
        }
      }
      prev = ex.seq.mask[t] ? tok : -1;
    }
    for (int j = 0; j < H; ++j) {
      const double hj = h[static_cast<std::size_t>(j)];
      const double dpre = dh[static_cast<std::size_t>(j)] * (1.0 - hj * hj);
      if (dpre == 0.0) continue;
      for (int i = 0; i < p.dims.context_dim; ++i)
        out.grad.context_proj[static_cast<std::size_t>(i * H + j)] += ex.context[static_cast<std::size_t>(i)] * dpre;
    }
  }
  if (!std::isfinite(out.loss)) throw NumericFailure("non-finite loss", token_index == 0 ? 0 : token_index - 1);
  return out;
}

/// Mean categorical entropy (nats) over masked-in steps; 0 for a fully masked sequence.
inline double token_entropy(const PolicyParams& p, const Context& ctx, const TokenSequence& seq) {
  detail::check_tokens(p, seq);
  const auto h = detail::hidden_state(p, ctx);
  std::vector<double> logp;
  double total = 0.0;
  std::size_t count = 0;
  int prev = -1;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (seq.mask[t]) {
      detail::step_log_probs(p, h, prev, logp);
      double ent = 0.0;
      for (double lp : logp) {
        const double pr = std::exp(lp);
        if (pr > 0.0) ent -= pr * lp;
      }
      total += ent;
      ++count;
    }
    prev = seq.mask[t] ? seq.tokens[t] : -1;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

inline double grad_norm(const Gradient& g) {
  double ss = 0.0;
  for (auto t : g.tensors())
    for (double x : t) ss += x * x;
  return std::sqrt(ss);
}

struct AdamWConfig {
  double lr = 1e-6;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
};

struct AdamWState {
  PolicyParams m;
  PolicyParams v;
  long long step = 0;

  static AdamWState for_params(const PolicyParams& p) { return {p.zeros_like(), p.zeros_like(), 0}; }
};

/// One AdamW update (decoupled weight decay, bias-corrected moments).
///
/// Returns false and leaves params and state untouched when the gradient has a
/// non-finite entry.
inline bool optimizer_step(PolicyParams& params, const Gradient& grad, AdamWState& state, const AdamWConfig& cfg) {
  if (grad.size() != params.size() || state.m.size() != params.size())
    throw InvalidInput("optimizer_step: shape mismatch");
  if (!grad.all_finite()) return false;

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto pt = params.tensors();
  auto gt = grad.tensors();
  auto mt = state.m.tensors();
  auto vt = state.v.tensors();
  for (std::size_t k = 0; k < pt.size(); ++k) {
    for (std::size_t i = 0; i < pt[k].size(); ++i) {
      const double g = gt[k][i];
      mt[k][i] = cfg.beta1 * mt[k][i] + (1.0 - cfg.beta1) * g;
      vt[k][i] = cfg.beta2 * vt[k][i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = mt[k][i] / bc1;
      const double v_hat = vt[k][i] / bc2;
      pt[k][i] *= 1.0 - cfg.lr * cfg.weight_decay;
      pt[k][i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
  return true;
}

}  // namespace evopo::policy

#endif  // EVOPO_POLICY_HPP
