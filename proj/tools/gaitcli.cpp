#include <CLI11.hpp>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"gaitnet: multimodal gait recognition pipeline"};
  CLI11_PARSE(app, argc, argv);
  std::cout << "gaitnet cli (commands pending)\n";
  return 0;
}
