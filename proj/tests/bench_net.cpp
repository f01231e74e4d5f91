#include <chrono>
#include <cstdio>
#include "robmapf/policy_net.hpp"
#include "robmapf/ppo.hpp"
using namespace robmapf;
int main() {
  auto p = net::init_params(1);
  for (int B : {1, 16, 64, 256, 1024}) {
    net::ObsBatch x = net::ObsBatch::Random(B, 75).cwiseAbs();
    int reps = 4096 / B + 1;
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) { auto o = net::forward(p, x); }
    auto t1 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) { net::ForwardTrace tr; auto o = net::forward(p, x, &tr); net::NetGrads g; net::RowMatrix di; net::Vector dv = net::Vector::Ones(B); net::backward(tr, o.probs, &dv, &g, &di);}
    auto t2 = std::chrono::steady_clock::now();
    double f = std::chrono::duration<double>(t1 - t0).count() / (reps * B) * 1e6;
    double fb = std::chrono::duration<double>(t2 - t1).count() / (reps * B) * 1e6;
    std::printf("B=%d fwd %.2f us/sample, fwd+bwd %.2f us/sample\n", B, f, fb);
  }
  env::EnvConfig ec;
  auto t0 = std::chrono::steady_clock::now();
  auto tb = ppo::rollout(p, ec, 1, 16, 0.95, 0.95);
  auto t1 = std::chrono::steady_clock::now();
  std::printf("rollout 16 eps: %zu samples, %lld env steps, succ %.3f, %.3f s\n", tb.size(), (long long)tb.env_steps, tb.mean_success(), std::chrono::duration<double>(t1-t0).count());
}
