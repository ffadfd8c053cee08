#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"
#include "sgmlab/log.hpp"

int main(int argc, char** argv) {
  sgmlab::log::set_level(sgmlab::log::Level::quiet);
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
