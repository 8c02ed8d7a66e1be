#include <iostream>

int main() {
  std::cout << "maskvo: subcommands pending\n";
  return 0;
}
