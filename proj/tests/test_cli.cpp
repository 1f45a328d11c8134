#include <catch2/catch_amalgamated.hpp>
#include <spgee/spgee.hpp>
TEST_CASE("placeholder test_cli") { SUCCEED(); }
