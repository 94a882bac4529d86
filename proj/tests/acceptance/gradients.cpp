// f64 helper for the acceptance run: prints one summary line
//   cases=N checked=M max_rel=X worst=<case>:<element> model_checked=P model_params=Q
#include <cstdio>
#include <exception>

#include "../support/grad_suite.hpp"

int main() {
  using namespace babyhgrn::testing;
  try {
    const auto cases = gradient_suite();
    std::size_t checked = 0;
    double worst = 0;
    std::string where = "-";
    std::size_t model_checked = 0, model_params = 0;
    for (const auto& c : cases) {
      checked += c.result.checked;
      if (c.result.max_rel_error >= worst) {
        worst = c.result.max_rel_error;
        where = c.name + ":" + c.result.worst;
      }
      if (c.name.rfind("hgrn2 lm", 0) == 0) {
        model_checked = c.result.checked;
        model_params = c.expected;
      }
    }
    for (auto& ch : where) {
      if (ch == ' ') ch = '_';
    }
    std::printf("cases=%zu checked=%zu max_rel=%.3e worst=%s model_checked=%zu model_params=%zu\n",
                cases.size(), checked, worst, where.c_str(), model_checked, model_params);
    return 0;
  } catch (const std::exception& e) {
    std::printf("error=%s\n", e.what());
    return 1;
  }
}
