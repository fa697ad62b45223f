#include "sig/discriminator.hpp"

#include <algorithm>
#include <array>

#include "sig/errors.hpp"

namespace sig {

ChunkPlan plan_chunks(int horizon, std::span<const int> widths) {
  std::vector<int> ws;
  if (widths.empty()) {
    if (horizon < kSmallestChunk) {
      throw ConfigError("horizon " + std::to_string(horizon) + " is shorter than the smallest chunk (" +
                        std::to_string(kSmallestChunk) + ")");
    }
    for (int w : {horizon, horizon / 2, horizon / 4, kSmallestChunk}) {
      if (w >= kSmallestChunk && std::find(ws.begin(), ws.end(), w) == ws.end()) ws.push_back(w);
    }
  } else {
    for (int w : widths) {
      if (w < 1 || w > horizon) {
        throw ConfigError("chunk width " + std::to_string(w) + " outside [1, " + std::to_string(horizon) + "]");
      }
      if (std::find(ws.begin(), ws.end(), w) == ws.end()) ws.push_back(w);
    }
  }
  ChunkPlan plan;
  plan.horizon = horizon;
  for (int w : ws) {
    ChunkResolution r;
    r.width = w;
    r.stride = std::max(1, w / 2);
    r.count = (horizon - w) / r.stride + 1;
    for (int k = 0; k < r.count; ++k) r.starts.push_back(1 + k * r.stride);
    plan.resolutions.push_back(std::move(r));
  }
  return plan;
}

DiscKind parse_disc_kind(const std::string& s) {
  if (s == "local") return DiscKind::local;
  if (s == "simple") return DiscKind::simple;
  if (s == "dense") return DiscKind::dense;
  throw ConfigError("disc.kind must be one of local, simple, dense (got '" + s + "')");
}

std::string to_string(DiscKind k) {
  switch (k) {
    case DiscKind::local:
      return "local";
    case DiscKind::simple:
      return "simple";
    case DiscKind::dense:
      return "dense";
  }
  return "?";
}

void DiscriminatorConfig::validate() const {
  if (num_actions < 2) throw ConfigError("disc: need at least two actions");
  if (horizon < 1) throw ConfigError("disc: horizon must be positive");
  if (d_h < 1 || d_embed < 1 || d_phi < 1 || d_psi < 1) throw ConfigError("disc: dimensions must be positive");
  if (lambda_inter < 0) throw ConfigError("disc.lambda_inter must be non-negative");
  if (!indiv_on && !inter_on) throw ConfigError("disc: at least one stream must be enabled");
}

// ---------------------------------------------------------------------------

ProjectionHead::ProjectionHead(nn::ParamStore& store, const std::string& prefix, int d_h, int d_phi, int d_psi,
                               bool spectral, double slope, nn::Rng& rng)
    : phi_(store, prefix + ".phi", d_h, d_phi, true, spectral, rng),
      psi_(store, prefix + ".psi", d_phi, d_psi, true, spectral, rng),
      v_(store, prefix + ".V", d_h, d_phi, false, spectral, rng),
      a_(store, prefix + ".A", d_psi, 1, false, spectral, rng),
      beta_(prefix + ".beta_raw"),
      slope_(slope) {
  store.add(beta_, nn::Tensor::matrix(1, 1, 0.0));
}

Var ProjectionHead::score(Graph& g, nn::ParamStore& store, Var cond, Var feat, const Mat& taus) const {
  Var phi = nn::leaky_relu(g, phi_.forward(g, store, feat), slope_);
  Var bilinear = nn::rowwise_dot(g, v_.forward(g, store, cond), phi);
  Var att = nn::attenuation(g, g.param(store, beta_), taus);
  Var inner = nn::add_col(g, psi_.forward(g, store, phi), nn::mul(g, att, bilinear));
  return a_.forward(g, store, inner);
}

double ProjectionHead::beta(const nn::ParamStore& store) const { return std::exp(store.value(beta_)(0, 0)); }

void ProjectionHead::power_iterate(nn::ParamStore& store) const {
  phi_.power_iterate(store);
  psi_.power_iterate(store);
  v_.power_iterate(store);
  a_.power_iterate(store);
}

// ---------------------------------------------------------------------------

Discriminator::Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  switch (cfg_.kind) {
    case DiscKind::local:
      plan_ = plan_chunks(cfg_.horizon, cfg_.chunks);
      break;
    case DiscKind::simple:
    case DiscKind::dense: {
      const std::array<int, 1> full{cfg_.horizon};
      plan_ = plan_chunks(cfg_.horizon, full);
      break;
    }
  }
  nn::Rng rng(seed);
  indiv_ = make_stream("disc.indiv", false, rng);
  inter_ = make_stream("disc.inter", true, rng);
}

Discriminator::Stream Discriminator::make_stream(const std::string& name, bool pooled, nn::Rng& rng) {
  Stream s;
  s.pooled = pooled;
  s.embed = nn::Embedding(store_, name + ".embed", cfg_.num_actions, cfg_.d_embed, rng);
  s.cond_encoder = nn::LstmCell(store_, name + ".cond", cfg_.d_embed, cfg_.d_h, false, rng);
  const std::string kind = to_string(cfg_.kind);
  const std::size_t heads = cfg_.kind == DiscKind::local ? plan_.resolutions.size() : 1;
  for (std::size_t r = 0; r < heads; ++r) {
    const std::string p = cfg_.kind == DiscKind::local
                              ? name + ".res" + std::to_string(plan_.resolutions[r].width)
                              : name + "." + kind;
    s.lstms.emplace_back(store_, p + ".lstm", cfg_.d_embed, cfg_.d_h, false, rng);
    s.heads.emplace_back(store_, p + ".head", cfg_.d_h, cfg_.d_phi, cfg_.d_psi, cfg_.spectral, cfg_.leaky_slope,
                         rng);
  }
  return s;
}

Var Discriminator::stream_condition(Graph& g, Stream& s, const TokenMat& observed) {
  if (observed.cols() == 0) throw InputError("discriminator: observed sequence is empty");
  Var state = s.cond_encoder.zero_state(g, observed.rows());
  for (Eigen::Index t = 0; t < observed.cols(); ++t) {
    const auto ids = token_column(observed, t);
    state = s.cond_encoder.step(g, store_, s.embed.lookup(g, store_, ids), state);
  }
  return s.cond_encoder.hidden(g, state);
}

Conditioning Discriminator::condition(Graph& g, const TokenMat& observed) {
  Conditioning c;
  if (cfg_.indiv_on) c.indiv = stream_condition(g, indiv_, observed);
  if (cfg_.inter_on) c.inter = stream_condition(g, inter_, observed);
  return c;
}

Var Discriminator::head_scores(Graph& g, Stream& s, std::size_t head, Var cond, Var feats,
                               const std::vector<int>& taus, int persons) {
  const auto blocks = static_cast<Eigen::Index>(taus.size());
  if (s.pooled) {
    feats = nn::group_max(g, feats, persons);
    cond = nn::group_max(g, cond, persons);
  }
  const Eigen::Index h = g.value(cond).rows();
  Mat tau_col(h * blocks, 1);
  for (Eigen::Index k = 0; k < blocks; ++k) tau_col.middleRows(k * h, h).setConstant(taus[static_cast<std::size_t>(k)]);
  if (blocks > 1) cond = nn::tile_rows(g, cond, blocks);
  Var sc = s.heads[head].score(g, store_, cond, feats, tau_col);
  return blocks > 1 ? nn::block_mean(g, sc, blocks) : sc;
}

Var Discriminator::stream_score(Graph& g, Stream& s, Var cond, std::span<const Var> embedded, int persons) {
  const Eigen::Index rows = g.value(embedded[0]).rows();
  std::vector<Var> per_res;
  if (cfg_.kind == DiscKind::local) {
    for (std::size_t r = 0; r < plan_.resolutions.size(); ++r) {
      const auto& res = plan_.resolutions[r];
      const auto k = static_cast<Eigen::Index>(res.count);
      Var state = s.lstms[r].zero_state(g, rows * k);
      std::vector<Var> parts(res.starts.size());
      for (int t = 0; t < res.width; ++t) {
        for (std::size_t c = 0; c < res.starts.size(); ++c) {
          parts[c] = embedded[static_cast<std::size_t>(res.starts[c] - 1 + t)];
        }
        Var x = parts.size() == 1 ? parts[0] : nn::concat_rows(g, parts);
        state = s.lstms[r].step(g, store_, x, state);
      }
      per_res.push_back(head_scores(g, s, r, cond, s.lstms[r].hidden(g, state), res.starts, persons));
    }
  } else {
    Var state = s.lstms[0].zero_state(g, rows);
    std::vector<Var> hidden;
    std::vector<int> taus;
    for (std::size_t t = 0; t < embedded.size(); ++t) {
      state = s.lstms[0].step(g, store_, embedded[t], state);
      if (cfg_.kind == DiscKind::dense) {
        hidden.push_back(s.lstms[0].hidden(g, state));
        taus.push_back(static_cast<int>(t) + 1);
      }
    }
    if (cfg_.kind == DiscKind::simple) {
      hidden.push_back(s.lstms[0].hidden(g, state));
      taus.push_back(1);
    }
    Var feats = hidden.size() == 1 ? hidden[0] : nn::concat_rows(g, hidden);
    per_res.push_back(head_scores(g, s, 0, cond, feats, taus, persons));
  }
  Var acc = per_res[0];
  for (std::size_t i = 1; i < per_res.size(); ++i) acc = nn::add(g, acc, per_res[i]);
  return per_res.size() > 1 ? nn::scale(g, acc, 1.0 / static_cast<double>(per_res.size())) : acc;
}

StreamOutputs Discriminator::score(Graph& g, const Conditioning& cond, std::span<const Var> sequence, int persons,
                                   double lambda_inter) {
  if (static_cast<int>(sequence.size()) != cfg_.horizon) {
    throw ShapeError("discriminator built for horizon " + std::to_string(cfg_.horizon) + ", got " +
                     std::to_string(sequence.size()));
  }
  StreamOutputs out;
  auto embed_all = [&](Stream& s) {
    std::vector<Var> e;
    e.reserve(sequence.size());
    for (Var y : sequence) e.push_back(s.embed.project(g, store_, y));
    return e;
  };
  if (cfg_.indiv_on) {
    const auto e = embed_all(indiv_);
    out.indiv_person = stream_score(g, indiv_, cond.indiv, e, persons);
    out.indiv = nn::group_mean(g, out.indiv_person, persons);
    out.total = out.indiv;
  }
  if (cfg_.inter_on) {
    const auto e = embed_all(inter_);
    out.inter = stream_score(g, inter_, cond.inter, e, persons);
    Var weighted = nn::scale(g, out.inter, lambda_inter);
    out.total = out.total.valid() ? nn::add(g, out.total, weighted) : weighted;
  }
  if (!g.value(out.total).allFinite()) throw DiscError("discriminator produced a non-finite score");
  return out;
}

void Discriminator::power_iterate() {
  for (Stream* s : {&indiv_, &inter_}) {
    for (const auto& h : s->heads) h.power_iterate(store_);
  }
}

}  // namespace sig
