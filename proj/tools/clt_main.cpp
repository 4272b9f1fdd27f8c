#include "clt/cli.hpp"

int main(int argc, char** argv) {
  return clt::run(argc, argv);
}
