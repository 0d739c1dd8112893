// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  return mop::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
