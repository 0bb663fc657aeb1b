#pragma once

// Buffer-attribution ledger. Numeric buffers allocated through
// TrackedAllocator are charged to whichever stage is active on the allocating
// thread, and refunded to that same stage when freed, so the ledger reports
// the peak live bytes each pipeline stage was responsible for.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <new>
#include <string>
#include <string_view>
#include <vector>

namespace holotile::metrics {

enum class Stage : std::uint8_t {
  Asm = 0,
  Generator,
  Encoder,
  MergeSr,
  AutodiffTape,
  Unattributed,
};

inline constexpr std::size_t kStageCount = 6;

std::string_view stage_name(Stage s);
/// Throws UsageError for names outside the fixed stage set.
Stage stage_from_name(std::string_view name);

struct StageReading {
  Stage stage;
  std::int64_t live_bytes = 0;
  std::int64_t peak_bytes = 0;
};

struct LedgerReport {
  std::vector<StageReading> rows;  // fixed stage order, Unattributed last
  std::int64_t sum_of_peaks = 0;
  std::int64_t overall_peak = 0;   // peak of the sum of live bytes
  int height = 0;
  int width = 0;
  int scale = 0;

  std::int64_t peak(Stage s) const;
  std::string to_text() const;
  std::string to_csv() const;
  std::string to_json() const;
};

namespace detail {
void charge_erased(const std::shared_ptr<void>& state, Stage stage, std::int64_t bytes);
}

class MemoryLedger {
 public:
  MemoryLedger();

  /// Instantaneous reading of live bytes for a stage; peak tracks the max.
  void record(Stage stage, std::int64_t bytes);
  void record(std::string_view stage, std::int64_t bytes);

  void charge(Stage stage, std::int64_t bytes);
  void release(Stage stage, std::int64_t bytes);

  void set_grid(int height, int width, int scale);
  void reset();

  LedgerReport report() const;

 private:
  struct State {
    mutable std::mutex mu;
    std::array<std::int64_t, kStageCount> live{};
    std::array<std::int64_t, kStageCount> peak{};
    std::int64_t total_live = 0;
    std::int64_t total_peak = 0;
    int height = 0, width = 0, scale = 0;
  };
  std::shared_ptr<State> state_;

  friend class LedgerScope;
  friend void detail::charge_erased(const std::shared_ptr<void>&, Stage, std::int64_t);

  static void charge_state(State& s, Stage stage, std::int64_t bytes);
};

namespace detail {
struct ThreadAttribution {
  std::shared_ptr<void> ledger_state;  // type-erased MemoryLedger::State
  Stage stage = Stage::Unattributed;
};
ThreadAttribution& thread_attribution();
void charge_erased(const std::shared_ptr<void>& state, Stage stage, std::int64_t bytes);
}  // namespace detail

/// Routes allocations on this thread into `ledger` for the scope's lifetime.
class LedgerScope {
 public:
  explicit LedgerScope(MemoryLedger& ledger);
  ~LedgerScope();
  LedgerScope(const LedgerScope&) = delete;
  LedgerScope& operator=(const LedgerScope&) = delete;

 private:
  std::shared_ptr<void> previous_;
};

/// Attributes allocations on this thread to `stage` for the scope's lifetime.
class StageScope {
 public:
  explicit StageScope(Stage stage);
  ~StageScope();
  StageScope(const StageScope&) = delete;
  StageScope& operator=(const StageScope&) = delete;

 private:
  Stage previous_;
};

/// Charges a fixed number of bytes (for buffers not owned by a tracked
/// container, e.g. FFTW workspaces) until destruction.
class ChargeToken {
 public:
  explicit ChargeToken(std::int64_t bytes);
  ~ChargeToken();
  ChargeToken(const ChargeToken&) = delete;
  ChargeToken& operator=(const ChargeToken&) = delete;

 private:
  std::shared_ptr<void> state_;
  Stage stage_;
  std::int64_t bytes_;
};

template <class T>
class TrackedAllocator {
 public:
  using value_type = T;
  using propagate_on_container_move_assignment = std::true_type;
  using propagate_on_container_copy_assignment = std::false_type;
  using propagate_on_container_swap = std::true_type;

  TrackedAllocator() noexcept {
    const auto& attr = detail::thread_attribution();
    state_ = attr.ledger_state;
    stage_ = attr.stage;
  }
  template <class U>
  TrackedAllocator(const TrackedAllocator<U>& other) noexcept
      : state_(other.state_), stage_(other.stage_) {}

  T* allocate(std::size_t n) {
    auto* p = static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{64}));
    if (state_) detail::charge_erased(state_, stage_, static_cast<std::int64_t>(n * sizeof(T)));
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    ::operator delete(p, std::align_val_t{64});
    if (state_) detail::charge_erased(state_, stage_, -static_cast<std::int64_t>(n * sizeof(T)));
  }

  // Copies are attributed to the stage active where the copy happens.
  TrackedAllocator select_on_container_copy_construction() const { return TrackedAllocator(); }

  template <class U>
  bool operator==(const TrackedAllocator<U>& o) const noexcept {
    return state_ == o.state_ && stage_ == o.stage_;
  }

 private:
  template <class U>
  friend class TrackedAllocator;
  std::shared_ptr<void> state_;
  Stage stage_ = Stage::Unattributed;
};

template <class T>
using TrackedVector = std::vector<T, TrackedAllocator<T>>;

}  // namespace holotile::metrics
