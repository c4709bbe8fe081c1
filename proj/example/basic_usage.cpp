#include <cstdio>
#include <string>
#include <thread>
#include <vector>

#include <jiffy/jiffy.hpp>

int main() {
  jiffy::Map<int, std::string> m;

  m.put(1, "one");
  m.put(2, "two");
  m.put(3, "three");
  m.remove(2);

  // Snapshot before the batch: it keeps seeing the old state.
  jiffy::Map<int, std::string>::Snapshot before(m);

  jiffy::Map<int, std::string>::BatchType b;
  b.put(2, "deux");
  b.put(4, "quatre");
  b.remove(1);
  m.batch_update(b);

  std::printf("latest:");
  for (auto& [k, v] : m.scan(0, 10)) std::printf(" %d=%s", k, v.c_str());
  std::printf("\nsnapshot:");
  for (auto& [k, v] : m.scan(0, 10, before)) std::printf(" %d=%s", k, v.c_str());
  std::printf("\n");

  // A long-lived reader thread keeps one registered handle and refreshes
  // it before each read.
  std::thread reader([&] {
    auto h = m.register_snapshot();
    for (int i = 0; i < 3; ++i) {
      m.refresh(h);
      auto v = m.get(4, h);
      std::printf("reader sees 4=%s\n", v ? v->c_str() : "(absent)");
    }
    m.unregister(h);
  });
  reader.join();

  auto in = m.inspect();
  std::printf("nodes %zu, entries %zu\n", in.nodes, in.entries);
  return 0;
}
