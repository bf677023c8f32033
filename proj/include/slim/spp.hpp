#pragma once

// Rewrites a three-scale detector definition into its SPP variant: each
// detection head gains a block of parallel stride-1 max pools (5/9/13 plus
// the identity branch) concatenated channel-wise, followed by a 1x1
// projection back to the head width. Heads fused from an upsample route
// additionally gain one 3x3/1x1 refinement pair after the projection.

#include "slim/cfg.hpp"

namespace slim {

struct SppOptions {
    // Emit the identity branch as a literal size-1 stride-1 maxpool instead
    // of a route entry pointing at the source layer.
    bool literal_identity_pool = false;
};

// Heads that already contain an SPP block are left untouched.
NetworkDef insert_spp(const NetworkDef& def, const SppOptions& options = {});

// Number of pool-triplet SPP blocks present (a structural scan, usable as an
// independent check on the transform).
int count_spp_blocks(const NetworkDef& def);

} // namespace slim
