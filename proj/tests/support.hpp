#pragma once

#include <doctest.h>

#include "oracles.hpp"

namespace testing {

using namespace protosnap;

/// Throws unless `fn` raises protosnap::Error with `code`.
template <typename Fn>
void check_error(Fn&& fn, ErrorCode code) {
  try {
    fn();
  } catch (const Error& e) {
    CHECK_MESSAGE(e.code() == code, "got ", e.what());
    return;
  }
  FAIL("expected error ", to_string(code));
}

}  // namespace testing
