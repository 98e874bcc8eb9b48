// Copyright (c) 2026 the gaitformer authors
// SPDX-License-Identifier: Apache-2.0

#include "gaitformer/cli.hpp"

int main(int argc, char** argv) { return gaitformer::run_cli(argc, argv); }
