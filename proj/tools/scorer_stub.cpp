// Reference external scorer: a LinearToyScorer answering the line protocol
// on stdin/stdout.
//   scorer_stub [--height 56] [--width 56] [--channels 3] [--dim 8] [--seed 1] [--max-batch 64]

#include <iostream>

#include "CLI11.hpp"
#include "simexplain/error.hpp"
#include "simexplain/linear_scorer.hpp"
#include "simexplain/protocol.hpp"

int main(int argc, char** argv) {
  CLI::App app{"LinearToyScorer over the stdio scoring protocol"};
  simexplain::ImageShape shape{56, 56, 3};
  simexplain::LinearToyOptions opts;
  int max_batch = 64;
  app.add_option("--height", shape.height)->check(CLI::PositiveNumber);
  app.add_option("--width", shape.width)->check(CLI::PositiveNumber);
  app.add_option("--channels", shape.channels)->check(CLI::PositiveNumber);
  app.add_option("--dim", opts.dim)->check(CLI::PositiveNumber);
  app.add_option("--seed", opts.seed);
  app.add_option("--max-batch", max_batch)->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  std::ios::sync_with_stdio(false);
  try {
    const simexplain::LinearToyScorer scorer(shape, opts);
    simexplain::protocol::serve(scorer, std::cin, std::cout, max_batch);
  } catch (const simexplain::ValidationError& e) {
    std::cerr << "scorer_stub: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "scorer_stub: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
