// Simulates one regression problem, fits it with every method and compares
// the Affine-Invariant RMSE of the estimates with that of the noisy data.

#include <cstdio>
#include <vector>

#include "manifold_ilpr/manifold_ilpr.hpp"

int main() {
  using namespace milpr;
  Rng rng = stream_rng(2024, {1, 3});
  const Realization sim = simulate_realization(/*p=*/1, /*n=*/3, /*num_samples=*/100, /*sigma=*/0.5, rng);
  const Dataset data(sim.covariates, sim.noisy);

  std::printf("noisy data        rmse %.4f\n", rmse_ai(sim.noisy, sim.truth));
  for (MethodId id : {MethodId::IlprLogCholesky, MethodId::IlprLogEuclidean, MethodId::ExtrinsicAi}) {
    const Method method = to_method(id);
    const CvResult cv = select_bandwidth(data, /*degree=*/1, method);
    FitConfig cfg;
    cfg.bandwidth = cv.best_h;
    const std::vector<SpdMatrix> est = fit_all(data, sim.covariates, cfg, method);
    std::printf("%-17s rmse %.4f  h = %.3f\n", to_string(id).c_str(), rmse_ai(est, sim.truth), cv.best_h);
  }
  return 0;
}
