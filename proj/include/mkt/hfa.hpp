#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "mkt/layers.hpp"
#include "mkt/schema.hpp"

namespace mkt {

// Term order of the explicit cross layer.
//   printed: v_{l+1} = v_l * (v_0^T w_l) + b_l + v_0
//   dcn:     v_{l+1} = v_0 * (v_l^T w_l) + b_l + v_l
enum class CrossForm { printed, dcn };

CrossForm parse_cross_form(const std::string& s);
std::string to_string(CrossForm f);

struct HfaConfig {
  std::size_t h_im = 0;  // implicit layer width; 0 means d_spec (square)
  std::size_t d_align = 32;
  std::size_t cross_layers = 2;
  CrossForm cross_form = CrossForm::printed;
  // false removes the explicit/implicit scoring path entirely: specific
  // features go straight through the align layer (the "without HFA"
  // ablation).
  bool scoring = true;
};

// Heterogeneous feature alignment for one entity. Parameter names under
// `<prefix>`: cross.<l>.w, cross.<l>.b, implicit.{w,b}, score.{w,b},
// align.{w,b}.
class HfaBranch {
 public:
  HfaBranch(tg::ParameterSet& ps, const std::string& prefix, std::size_t n_spec, std::size_t embed_dim,
            const HfaConfig& cfg, Rng& rng);

  tg::Var explicit_cross(tg::Tape& t, tg::Var v_spec) const;
  tg::Var implicit_cross(tg::Tape& t, tg::Var v_spec) const;
  // p = 2 * sigmoid(FC([v_ex || v_im])), one score per specific feature.
  tg::Var importance_score(tg::Tape& t, tg::Var v_ex, tg::Var v_im) const;
  // q = [v_shared || ReLU(FC(flatten(V scaled row-wise by p)))], where row i
  // of V is feature i's embedding. An invalid `p` skips the scaling.
  tg::Var align(tg::Tape& t, tg::Var v_spec, tg::Var p, tg::Var v_shared) const;

  struct Output {
    tg::Var q;
    tg::Var p;  // invalid when scoring is disabled
  };
  Output forward(tg::Tape& t, tg::Var v_spec, tg::Var v_shared) const;

  std::size_t n_spec() const { return n_spec_; }
  std::size_t d_spec() const { return n_spec_ * embed_dim_; }
  const HfaConfig& config() const { return cfg_; }

  std::vector<tg::Parameter*> cross_w;
  std::vector<tg::Parameter*> cross_b;
  nn::Linear implicit;
  nn::Linear score;
  nn::Linear align_fc;

 private:
  std::size_t n_spec_;
  std::size_t embed_dim_;
  HfaConfig cfg_;
};

class Hfa {
 public:
  Hfa(tg::ParameterSet& ps, const std::string& prefix, const FeatureSchema& schema, const HfaConfig& cfg, Rng& rng);

  const HfaBranch& branch(Entity e) const { return *branches_[index_of(e)]; }
  HfaBranch& branch(Entity e) { return *branches_[index_of(e)]; }
  // d_HFA = n_shared * d_e + d_align, identical for both entities.
  std::size_t output_dim() const { return output_dim_; }

 private:
  std::array<std::unique_ptr<HfaBranch>, 2> branches_;
  std::size_t output_dim_;
};

}  // namespace mkt
