#include "sienet/filling_conv.hpp"

namespace sienet {

SkipBranch parse_skip_branch(std::string_view name)
{
    if (name == "box") return SkipBranch::box;
    if (name == "center") return SkipBranch::center;
    throw Error("unknown skip branch '" + std::string(name) + "' (expected box or center)");
}

std::string_view to_string(SkipBranch s) { return s == SkipBranch::box ? "box" : "center"; }

}  // namespace sienet
