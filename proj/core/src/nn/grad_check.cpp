#include "apeg/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "apeg/diffusion.hpp"
#include "apeg/fingerprint.hpp"

namespace apeg::nn {

NetConfig tiny_net_config(Variant v) {
  NetConfig c;
  c.base_channels = 2;
  c.channel_mults = {1, 2};
  c.res_blocks = 1;
  c.self_attn = {false, true};
  c.cross_attn = v == Variant::Cadm;
  c.cross_attn_levels = {true, true};
  c.heads = 2;
  c.time_embed_mult = 2;
  c.dropout = 0.0;
  return c;
}

namespace {

struct SabotageScope {
  explicit SabotageScope(bool on) { detail::set_groupnorm_sabotage(on); }
  ~SabotageScope() { detail::set_groupnorm_sabotage(false); }
};

}  // namespace

GradCheckReport grad_check(Variant v, const GradCheckOptions& opt) {
  Rng init(opt.seed);
  UNet net(tiny_net_config(v), init);
  ParamStore& ps = *net.params();
  // Default initialisation zeroes the output layers, which would make most
  // gradients vanish; randomise everything instead.
  Rng perturb = init.fork("perturb");
  for (int i = 0; i < ps.size(); ++i) {
    for (Eigen::Index k = 0; k < ps.block(i).value.size(); ++k) {
      ps.block(i).value[k] = opt.param_scale * perturb.normal();
    }
  }

  Rng data = init.fork("data");
  const Tensor alice = diffusion::gaussian(opt.batch, 2, opt.rows, opt.cols, data);
  const Tensor jack = diffusion::gaussian(opt.batch, 2, opt.rows, opt.cols, data);
  const diffusion::NoiseSchedule sched = diffusion::make_schedule(10, 1e-4, 0.2);
  const fp::Mask mask = fp::build_mask(opt.rows, opt.cols);
  const Tensor pair = fp::concat_rows(jack, alice);

  auto loss = [&](bool backward) {
    Rng r(opt.seed + 1);
    const diffusion::LossOptions lo{backward, false};
    return v == Variant::Ccmdm ? diffusion::loss_masked(pair, mask, r, sched, net, lo).loss
                               : diffusion::loss_conditional(alice, jack, r, sched, net, lo).loss;
  };

  ps.zero_grad();
  {
    SabotageScope scope(opt.sabotage);
    loss(true);
  }

  GradCheckReport rep;
  rep.variant = v;
  rep.params = ps.total();
  for (int i = 0; i < ps.size(); ++i) {
    ParamBlock& b = ps.block(i);
    BlockReport br;
    br.name = b.name;
    for (Eigen::Index k = 0; k < b.value.size(); ++k) {
      const double orig = b.value[k];
      b.value[k] = orig + opt.step;
      const double up = loss(false);
      b.value[k] = orig - opt.step;
      const double down = loss(false);
      b.value[k] = orig;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double analytic = b.grad[k];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), opt.floor});
      const double rel = std::abs(numeric - analytic) / denom;
      if (k == 0 || rel > br.rel_err) {
        br.worst_index = k;
        br.analytic = analytic;
        br.numeric = numeric;
        br.rel_err = rel;
      }
    }
    rep.max_rel_err = std::max(rep.max_rel_err, br.rel_err);
    rep.blocks.push_back(br);
  }
  rep.pass = rep.max_rel_err <= opt.tolerance;
  return rep;
}

}  // namespace apeg::nn
