#ifndef DOORRL_TESTS_REFERENCE_TABLE_H_
#define DOORRL_TESTS_REFERENCE_TABLE_H_

#include <set>
#include <string_view>
#include <vector>

#include "doorrl/reward_machine.h"

namespace doorrl::testing {

struct ReferenceRow {
  const char* name;
  double weight;
  std::set<int> stages;
};

// Every row of the door-opening reward table.
inline const std::vector<ReferenceRow>& ReferenceTable() {
  static const std::vector<ReferenceRow> rows = {
      {"Termination", -1000.0, {0, 1, 2, 3, 4, 5}},
      {"Delta action rate", -0.01, {0, 1, 2, 3, 4, 5}},
      {"DoF velocity", -1.0e-3, {0, 1, 2, 3, 4, 5}},
      {"DoF acceleration", -1.0e-5, {0, 1, 2, 3, 4, 5}},
      {"DoF position limits", -5.0, {0, 1, 2, 3, 4, 5}},
      {"Finger primitive limits", -1.0, {0, 1, 2, 3, 4, 5}},
      {"Humanly DoF limit", -1.0, {0, 1, 2, 3, 4, 5}},
      {"DoF overspeed", -0.1, {0, 1, 2, 3, 4, 5}},
      {"Undesired contact", -0.2, {0, 1, 2, 3, 4, 5}},
      {"Door frame contact", -0.1, {0, 1, 2, 3, 4, 5}},
      {"Door panel contact", -0.1, {0, 1, 2, 3, 4, 5}},
      {"Upright penalty", -1.0, {0, 1, 2, 3, 4, 5}},
      {"HOMIE action limit", -1.0, {0, 1, 2, 3, 4, 5}},
      {"Walk to door", 5.0, {0}},
      {"Upper body deviation", -1.0, {0, 5}},
      {"Face door", -1.0, {0, 1, 2, 5}},
      {"Hand-handle orientation", 3.0, {1, 2, 3, 4}},
      {"Pregrasp finger pose", 1.5, {0, 1, 5}},
      {"Unused arm deviation", -1.0, {1, 2, 3, 4}},
      {"Pre-grasp target distance", 6.0, {1}},
      {"Penalty not standing still", -15.0, {1, 2, 3}},
      {"Grasp finger DoF pose", 3.0, {2, 3, 4}},
      {"Grasp target distance", 3.0, {2, 3, 4}},
      {"Grasp force", 0.2, {1, 2, 3, 4}},
      {"Push door handle", 6.0, {3}},
      {"Push door hinge", 6.0, {3, 4}},
      {"Push door force", 0.3, {3}},
      {"Don't push door handle", 3.0, {4, 5}},
      {"Target root distance", 12.0, {4, 5}},
      {"Penalty standing still", -1.0, {4}},
      {"Stage progress", 1.0, {0, 1, 2, 3, 4, 5}},
      {"Task completion", 4.0, {0, 1, 2, 3, 4, 5}},
      {"Success save time", 0.5, {0, 1, 2, 3, 4, 5}},
  };
  return rows;
}

inline std::set<int> ParseStages(std::string_view text) {
  std::set<int> out;
  size_t i = 0;
  while (i < text.size()) {
    const int a = text[i] - '0';
    int b = a;
    if (i + 2 < text.size() && text[i + 1] == '-') {
      b = text[i + 2] - '0';
      i += 3;
    } else {
      i += 1;
    }
    for (int s = a; s <= b; ++s) out.insert(s);
    if (i < text.size() && text[i] == ',') ++i;
  }
  return out;
}

inline const TableTerm* FindRegistry(std::string_view name) {
  for (const TableTerm& t : RewardTableRegistry()) {
    if (t.table_name == name) return &t;
  }
  return nullptr;
}

}  // namespace doorrl::testing

#endif  // DOORRL_TESTS_REFERENCE_TABLE_H_
