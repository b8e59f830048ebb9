#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>
#include <string>
#include <vector>

#include "udg/cli.hpp"

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("udg"));
  std::vector<std::string> args(argv + 1, argv + argc);
  return udg::cli::run(args, std::cout, std::cerr);
}
