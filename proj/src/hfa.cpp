#include "mkt/hfa.hpp"

#include "mkt/errors.hpp"

namespace mkt {

CrossForm parse_cross_form(const std::string& s) {
  if (s == "printed") return CrossForm::printed;
  if (s == "dcn") return CrossForm::dcn;
  throw ValidationError("unknown hfa.cross_form '" + s + "' (expected printed or dcn)");
}

std::string to_string(CrossForm f) { return f == CrossForm::printed ? "printed" : "dcn"; }

HfaBranch::HfaBranch(tg::ParameterSet& ps, const std::string& prefix, std::size_t n_spec, std::size_t embed_dim,
                     const HfaConfig& cfg, Rng& rng)
    : n_spec_(n_spec), embed_dim_(embed_dim), cfg_(cfg) {
  if (n_spec_ < 1) throw ValidationError("HFA needs at least one entity-specific feature");
  if (cfg_.d_align < 1) throw ValidationError("hfa.d_align must be >= 1");
  const std::size_t d = d_spec();
  if (cfg_.scoring) {
    if (cfg_.cross_layers < 1) throw ValidationError("hfa.cross_layers must be >= 1");
    const std::size_t h = cfg_.h_im ? cfg_.h_im : d;
    for (std::size_t l = 0; l < cfg_.cross_layers; ++l) {
      const std::string base = prefix + ".cross." + std::to_string(l);
      cross_w.push_back(&ps.add(base + ".w", nn::glorot(d, 1, rng)));
      cross_b.push_back(&ps.add(base + ".b", tg::Tensor(d, 1)));
    }
    implicit = nn::Linear::create(ps, prefix + ".implicit", d, h, rng);
    score = nn::Linear::create(ps, prefix + ".score", d + h, n_spec_, rng);
  }
  align_fc = nn::Linear::create(ps, prefix + ".align", d, cfg_.d_align, rng);
}

tg::Var HfaBranch::explicit_cross(tg::Tape& t, tg::Var v_spec) const {
  if (!cfg_.scoring) throw ContractError("explicit_cross on an HFA branch without scoring");
  tg::Var v0 = v_spec;
  tg::Var vl = v_spec;
  for (std::size_t l = 0; l < cross_w.size(); ++l) {
    tg::Var w = t.param(*cross_w[l]);
    tg::Var b = t.param(*cross_b[l]);
    if (cfg_.cross_form == CrossForm::printed) {
      // (v_0^T w_l) is a per-sample scalar scaling v_l
      vl = tg::add(tg::mul_rows(vl, tg::matmul(v0, w)), tg::add_bias(v0, b));
    } else {
      vl = tg::add(tg::mul_rows(v0, tg::matmul(vl, w)), tg::add_bias(vl, b));
    }
  }
  return vl;
}

tg::Var HfaBranch::implicit_cross(tg::Tape& t, tg::Var v_spec) const { return tg::relu(implicit(t, v_spec)); }

tg::Var HfaBranch::importance_score(tg::Tape& t, tg::Var v_ex, tg::Var v_im) const {
  // 2 * sigmoid rounds to exactly 0 or 2 once the logit saturates
  constexpr double edge = 1e-12;
  return tg::clamp(tg::scale(tg::sigmoid(score(t, tg::concat({v_ex, v_im}))), 2.0), edge, 2.0 - edge);
}

tg::Var HfaBranch::align(tg::Tape& t, tg::Var v_spec, tg::Var p, tg::Var v_shared) const {
  if (v_spec.cols() % embed_dim_ != 0)
    throw DimensionError("align: v_spec width " + std::to_string(v_spec.cols()) + " is not a multiple of d_e " +
                         std::to_string(embed_dim_));
  tg::Var scaled = p.valid() ? tg::scale_blocks(v_spec, p) : v_spec;
  return tg::concat({v_shared, tg::relu(align_fc(t, scaled))});
}

HfaBranch::Output HfaBranch::forward(tg::Tape& t, tg::Var v_spec, tg::Var v_shared) const {
  Output out;
  if (cfg_.scoring) out.p = importance_score(t, explicit_cross(t, v_spec), implicit_cross(t, v_spec));
  out.q = align(t, v_spec, out.p, v_shared);
  return out;
}

Hfa::Hfa(tg::ParameterSet& ps, const std::string& prefix, const FeatureSchema& schema, const HfaConfig& cfg,
         Rng& rng) {
  branches_[0] = std::make_unique<HfaBranch>(ps, prefix + ".src", schema.n_spec(Entity::source), schema.embed_dim,
                                             cfg, rng);
  branches_[1] = std::make_unique<HfaBranch>(ps, prefix + ".tgt", schema.n_spec(Entity::target), schema.embed_dim,
                                             cfg, rng);
  output_dim_ = schema.shared_dim() + cfg.d_align;
}

}  // namespace mkt
