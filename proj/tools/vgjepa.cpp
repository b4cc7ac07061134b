// SPDX-License-Identifier: Apache-2.0
#include "vgjepa/cli/cli.hpp"

int main(int argc, char** argv) { return vgjepa::cli::dispatch(argc, argv); }
