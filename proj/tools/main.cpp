#include "commands.hpp"
#include "gcttt/runtime.hpp"

int main(int argc, char** argv) {
    gcttt::tune_allocator();
    return gcttt::cli::main(argc, argv);
}
