// Copyright 2026 The pseudolang Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <sstream>

#include "pseudolang/error.hpp"
#include "pseudolang/sequence.hpp"

using namespace pseudolang;

TEST_CASE("sequence text roundtrip keeps empty utterances") {
  SequenceCorpus<UnitTag> c = {{"a", {1, 2, 3}}, {"b", {}}, {"c", {42}}};
  std::ostringstream os;
  write_sequences(os, c);
  CHECK(os.str() == "a\t1 2 3\nb\t\nc\t42\n");
  std::istringstream is(os.str());
  CHECK(read_sequences<UnitTag>(is) == c);
}

TEST_CASE("malformed sequence lines are format errors") {
  for (const char* bad : {"a 1 2\n", "a\t1 x\n", "a\t1\na\t2\n", "\t1\n", "a\t-3\n"}) {
    std::istringstream is(bad);
    CHECK_THROWS_AS(read_sequences<CharTag>(is), FormatError);
  }
}
