#pragma once

#include <functional>

namespace jiffy {

// Protocol points where test builds can pause a thread.
enum class Step {
  SplitLeftInstalled,
  SplitBeforeTempCas,
  SplitTempInserted,
  SplitNodeCreated,
  MergeTerminatorInstalled,
  MergeBeforeRevisionCas,
  MergeRevisionInstalled,
  MergeUnlinked,
  BeforeFinalize,
  BatchNodeApplied,
};

struct NoHooks {
  void on(Step) const noexcept {}
};

struct CallbackHooks {
  std::function<void(Step)> fn;
  void on(Step s) const {
    if (fn) fn(s);
  }
};

}  // namespace jiffy
