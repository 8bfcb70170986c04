//
// SPDX-License-Identifier: Apache-2.0
//

#include <iostream>

#include "flexiflow/cli.h"

int main(int argc, char **argv) {
  return flexiflow::run_cli(argc, argv, std::cout, std::cerr);
}
