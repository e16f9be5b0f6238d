#include "idmr/losses.hpp"

namespace idmr {

GanForm parse_gan_form(const std::string& s) {
  if (s == "lsgan") return GanForm::lsgan;
  if (s == "log") return GanForm::log_form;
  throw ConfigError("unknown gan form: " + s + " (expected lsgan or log)");
}

LossReport total_loss(double l_rec, double l_adv, double l_mc_rec, double l_mc_tri,
                      double l_id_rec, double l_id_tri, const LossWeights& w, double l_d) {
  const std::pair<const char*, double> terms[] = {
      {"l_rec", l_rec},       {"l_adv", l_adv},       {"l_mc_rec", l_mc_rec},
      {"l_mc_tri", l_mc_tri}, {"l_id_rec", l_id_rec}, {"l_id_tri", l_id_tri},
  };
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v))
      throw NumericError(std::string("total_loss: non-finite term ") + name);

  LossReport r;
  r.l_rec = l_rec;
  r.l_adv = l_adv;
  r.l_d = l_d;
  r.l_mc_rec = l_mc_rec;
  r.l_mc_tri = l_mc_tri;
  r.l_id_rec = l_id_rec;
  r.l_id_tri = l_id_tri;
  r.total = w.lambda_rec * l_rec + w.lambda_adv * l_adv + w.lambda_mc * (l_mc_rec + l_mc_tri) +
            w.lambda_id * (l_id_rec + l_id_tri);
  return r;
}

}  // namespace idmr
