#include <string>
#include <vector>

#include "valigen/cli.hpp"

int main(int argc, char** argv) {
    return valigen::dispatch(std::vector<std::string>(argv, argv + argc));
}
