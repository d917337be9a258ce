#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "duet/submap.hpp"

using namespace duet;

TEST_CASE("keyframe selection") {
  PipelineConfig cfg;
  cfg.tau_flow = 25.0;
  cfg.n_max = 15;

  SUBCASE("static camera keeps only the initial frame") {
    std::vector<double> disp(50, 0.0);
    const auto batches = select_keyframes(disp, cfg);
    REQUIRE(batches.size() == 1);
    CHECK(batches[0] == std::vector<int>{0});
  }

  SUBCASE("constant 30px disparity triggers every frame") {
    std::vector<double> disp(10, 30.0);
    disp[0] = 0.0;
    const auto batches = select_keyframes(disp, cfg);
    std::vector<int> all;
    for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
    REQUIRE(all.size() == 10);
    for (int i = 0; i < 10; ++i) CHECK(all[i] == i);
  }

  SUBCASE("40 triggering frames split 15/15/10") {
    std::vector<double> disp(40, 30.0);
    disp[0] = 0.0;  // frame 0 is the always-selected initial frame
    const auto batches = select_keyframes(disp, cfg);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].size() == 15);
    CHECK(batches[1].size() == 15);
    CHECK(batches[2].size() == 10);
  }

  SUBCASE("cumulative trigger resets on selection") {
    // 10 + 10 + 10 crosses tau at the third frame, then again three later.
    std::vector<double> disp = {0, 10, 10, 10, 10, 10, 10};
    const auto batches = select_keyframes(disp, cfg);
    std::vector<int> all;
    for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
    CHECK(all == std::vector<int>{0, 3, 6});
  }

  SUBCASE("keyframe ids strictly increase") {
    std::vector<double> disp(200, 13.0);
    const auto batches = select_keyframes(disp, cfg);
    int prev = -1;
    for (const auto& b : batches) {
      for (int id : b) {
        CHECK(id > prev);
        prev = id;
      }
    }
  }

  SUBCASE("negative disparity is rejected") {
    KeyframeSelector sel(cfg);
    CHECK_THROWS_AS(sel.push(0, -1.0), std::invalid_argument);
  }
}

TEST_CASE("assistant association") {
  SUBCASE("sync with identical timestamps") {
    std::vector<double> keys = {0.0, 1.0, 2.0};
    std::vector<AssistantStreamEntry> stream = {{10, 0.0}, {11, 1.0}, {12, 2.0}};
    CHECK(associate_assistant(keys, stream, true) == std::vector<int>{10, 11, 12});
  }

  SUBCASE("sync without an exact match throws") {
    std::vector<double> keys = {0.5};
    std::vector<AssistantStreamEntry> stream = {{10, 0.0}, {11, 1.0}};
    CHECK_THROWS_AS(associate_assistant(keys, stream, true), std::runtime_error);
  }

  SUBCASE("async picks the nearest frame") {
    std::vector<double> keys = {0.0, 1.0, 2.0, 3.0, 4.0};
    std::vector<AssistantStreamEntry> stream = {
        {20, 0.3}, {21, 1.3}, {22, 2.3}, {23, 3.3}, {24, 4.3}};
    CHECK(associate_assistant(keys, stream, false) ==
          std::vector<int>{20, 21, 22, 23, 24});
  }

  SUBCASE("de-duplication: earlier keyframe wins, later takes next-nearest") {
    std::vector<double> keys = {0.0, 0.4};
    std::vector<AssistantStreamEntry> stream = {{30, 0.2}, {31, 1.0}, {32, 2.0}};
    CHECK(associate_assistant(keys, stream, false) == std::vector<int>{30, 31});
  }

  SUBCASE("no assistant frame repeats within one sub-map") {
    std::vector<double> keys = {0.0, 0.1, 0.2, 0.3};
    std::vector<AssistantStreamEntry> stream = {{40, 0.05}, {41, 0.15}, {42, 5.0}, {43, 9.0}};
    const auto out = associate_assistant(keys, stream, false);
    std::set<int> unique(out.begin(), out.end());
    CHECK(unique.size() == out.size());
  }

  SUBCASE("empty stream throws") {
    std::vector<double> keys = {0.0};
    CHECK_THROWS_AS(associate_assistant(keys, {}, false), std::invalid_argument);
  }
}

TEST_CASE("sub-map planning and bridging") {
  SUBCASE("first sub-map has no common frames") {
    std::vector<int> kf = {0, 1, 2};
    const auto plan = plan_submap(kf, {}, nullptr, 3);
    CHECK(plan.common_frames.empty());
    CHECK(plan.primary_frames == kf);
  }

  SUBCASE("second sub-map shares exactly n_overlap frames") {
    Submap prev;
    prev.primary_frame_ids = {0, 1, 2, 3, 4};
    std::vector<int> kf = {5, 6, 7};
    const auto plan = plan_submap(kf, {}, &prev, 3);
    CHECK(plan.common_frames == std::vector<int>{2, 3, 4});
    CHECK(plan.primary_frames == std::vector<int>{2, 3, 4, 5, 6, 7});
  }

  SUBCASE("short predecessor clamps the bridge") {
    Submap prev;
    prev.primary_frame_ids = {0, 1};
    const std::vector<int> kf = {2, 3};
    const auto plan = plan_submap(kf, {}, &prev, 3);
    CHECK(plan.common_frames == std::vector<int>{0, 1});
  }

  SUBCASE("loop frames are carried through") {
    Submap prev;
    prev.primary_frame_ids = {0, 1, 2};
    const std::vector<int> kf = {3};
    const std::vector<int> loops = {42};
    const auto plan = plan_submap(kf, {}, &prev, 1, loops);
    CHECK(plan.loop_frames == loops);
  }
}
