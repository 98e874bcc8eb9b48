// placeholder
#pragma once
namespace gaitformer { inline int run_cli(int, char**) { return 0; } }
