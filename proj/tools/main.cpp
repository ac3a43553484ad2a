// SPDX-License-Identifier: Apache-2.0

#include "entroguide/cli.hpp"

int main(int argc, char** argv) { return entroguide::cli_main(argc, argv); }
