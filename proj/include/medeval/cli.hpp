#pragma once

namespace medeval::cli {

/// Single-binary entry point: prep-volume, prep-wsi, render-prompt, run,
/// score, verify-report. Returns 0 on success, 1 on validation errors,
/// 2 on runtime/transport failures.
int dispatch(int argc, const char* const* argv);

}  // namespace medeval::cli
