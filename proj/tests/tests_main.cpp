#define DOCTEST_CONFIG_IMPLEMENT

#include <doctest.h>

#include <Eigen/Core>

int main(int argc, char** argv) {
  Eigen::setNbThreads(1);
  doctest::Context context;
  context.applyCommandLine(argc, argv);
  return context.run();
}
