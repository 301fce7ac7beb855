// Copyright 2026 The noderf Authors
// SPDX-License-Identifier: Apache-2.0

// Placeholder entry point; subcommands land with the cli module.

#include <cstdio>

int main(int, char**) {
  std::fprintf(stderr, "noderf: no subcommands wired yet\n");
  return 2;
}
