#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "rfmag/diagnostics.hpp"

int main(int argc, char** argv) {
  rfmag::set_default_warning_handler({});
  doctest::Context context(argc, argv);
  return context.run();
}
